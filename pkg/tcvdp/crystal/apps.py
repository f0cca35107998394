from django.apps import AppConfig


class CrystalConfig(AppConfig):
    name = 'crystal'
    verbose_name = 'Time-crystal experiments'
    default_auto_field = 'django.db.models.BigAutoField'
