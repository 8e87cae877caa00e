"""
URL configuration for fisherpriv project.

URL配置说明：
- 查询服务的HTTP接口挂在 /api/ 下
- API文档由 drf_yasg 生成
"""
from django.urls import path, include

# API文档相关
from rest_framework import permissions
from drf_yasg.views import get_schema_view
from drf_yasg import openapi

# Swagger API文档配置
schema_view = get_schema_view(
    openapi.Info(
        title="fisherpriv 可信查询服务 API",
        default_version='v1',
        description="""
        ## API文档

        可信查询服务持有私有数据库，按配置的隐私机制返回加噪响应 y = f(x) + w。

        ### 端点
        - POST /api/query/：提交查询（与TCP服务共用同一套请求格式和账本）
        - GET /api/mechanisms/：已注册的机制

        ### 请求格式
        ```
        {"id": "r1", "query": {"type": "average"}, "mechanism": "avg"}
        ```
        """,
        license=openapi.License(name="MIT License"),
    ),
    public=True,
    permission_classes=[permissions.AllowAny],
)

urlpatterns = [
    # ========== REST API ==========
    path('api/', include('query_service.api_urls')),

    # ========== API文档 ==========
    path('api/docs/', schema_view.with_ui('swagger', cache_timeout=0), name='api-docs'),
    path('api/redoc/', schema_view.with_ui('redoc', cache_timeout=0), name='api-redoc'),
    path('api/schema/', schema_view.without_ui(cache_timeout=0), name='api-schema'),
]
