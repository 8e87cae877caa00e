"""
查询服务API的URL配置
"""

from django.urls import path, include
from rest_framework.routers import SimpleRouter

from .api_views import QueryViewSet

router = SimpleRouter()

# 空前缀：动作直接挂在 /api/ 下
# - POST /api/query/
# - GET  /api/mechanisms/
router.register(r'', QueryViewSet, basename='query-service')

urlpatterns = [
    path('', include(router.urls)),
]
