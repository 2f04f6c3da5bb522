from django.apps import AppConfig


class GeometryConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.geometry'
    verbose_name = 'Scan geometry and projector'
