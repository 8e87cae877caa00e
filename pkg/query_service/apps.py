from django.apps import AppConfig


class QueryServiceConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'query_service'
    verbose_name = '可信查询服务'
