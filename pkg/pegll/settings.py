"""
Django settings for the pegll project.

The project has no web surface: Django hosts the `pegll` management
command, the configuration below and the test runner.
"""

from pathlib import Path
import os


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("SECRET_KEY", "dev-only-secret-key")
DEBUG = os.environ.get("DEBUG", "0") == "1"

ALLOWED_HOSTS = os.environ.get("ALLOWED_HOSTS", "127.0.0.1,localhost").split(",")


# Application definition

INSTALLED_APPS = [
    "pegll_app",
]

# No models; SimpleTestCase never touches a database.
DATABASES = {}


# =========================
#  PEGLL TOOLKIT
# =========================

def _env_int(name, default=None):
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    return int(raw)


PEGLL = {
    # default number of trees extracted by `parse --trees` / extract_trees()
    "TREE_CAP": _env_int("PEGLL_TREE_CAP", 10),
    # optional hard budget on processed descriptors (None = unbounded)
    "MAX_DESCRIPTORS": _env_int("PEGLL_MAX_DESCRIPTORS"),
    # directory of bundled sample grammars
    "GRAMMAR_DIR": BASE_DIR / "grammars",
}


# =========================
#  LOGGING
# =========================

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "json": {
            "()": "pythonjsonlogger.json.JsonFormatter",
            "fmt": "%(asctime)s %(levelname)s %(name)s %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "json",
        },
    },
    "loggers": {
        "pegll_app": {
            "handlers": ["console"],
            "level": os.environ.get("PEGLL_LOG_LEVEL", "WARNING"),
            "propagate": False,
        },
    },
}


# Internationalization
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
