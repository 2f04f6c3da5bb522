from django.apps import AppConfig


class FiltersConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.filters'
    verbose_name = 'Detector-frequency filters'
