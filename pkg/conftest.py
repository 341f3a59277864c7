"""Configure Django before pytest collects the pegll_app test modules."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "pegll.settings")
django.setup()
