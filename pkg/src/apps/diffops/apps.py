from django.apps import AppConfig


class DiffopsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.diffops'
    verbose_name = 'Finite differences'
