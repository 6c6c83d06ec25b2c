from django.apps import AppConfig


class AmifConfig(AppConfig):
    name = 'amif'
    verbose_name = 'Authorizable medical image fusion'
    default_auto_field = 'django.db.models.BigAutoField'
