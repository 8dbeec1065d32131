from django.apps import AppConfig


class SlipdetectConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "slipdetect"
    verbose_name = "Slip Detection"
