from django.conf import settings

DEFAULTS = {
    "TREE_CAP": 10,
    "MAX_DESCRIPTORS": None,
    "GRAMMAR_DIR": None,
}


def pegll_setting(name: str):
    """
    Read one key of settings.PEGLL, falling back to DEFAULTS.

    Library callers may use the toolkit without configuring Django; the
    defaults apply then.
    """
    if name not in DEFAULTS:
        raise KeyError(f"Unknown PEGLL setting: {name}")
    if not settings.configured:
        return DEFAULTS[name]
    return getattr(settings, "PEGLL", {}).get(name, DEFAULTS[name])
