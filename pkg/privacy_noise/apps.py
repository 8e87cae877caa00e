from django.apps import AppConfig


class PrivacyNoiseConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'privacy_noise'
    verbose_name = '隐私噪声机制'
