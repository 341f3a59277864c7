from django.apps import AppConfig


class PegllAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pegll_app'
    verbose_name = "PEGLL grammar toolkit"
