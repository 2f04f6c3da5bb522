from django.apps import AppConfig


class PhantomConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.phantom'
    verbose_name = 'Digital breast phantom'
