"""
查询服务的REST API视图

与TCP服务器共用 handle_request；服务配置取自 settings.QUERY_SERVICE_CONFIG。
每个HTTP请求视为一个连接，使用新派生的随机数生成器。
"""

import logging
import threading

from django.conf import settings
from rest_framework import permissions, status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from privacy_noise.exceptions import ToolkitError

from .services import QueryService

logger = logging.getLogger(__name__)

_service = None
_service_lock = threading.Lock()


def get_service():
    """
    进程内共享的 QueryService（首次访问时按配置构造）

    返回:
        QueryService；未配置 QUERY_SERVICE_CONFIG 时返回 None
    """
    global _service
    with _service_lock:
        if _service is None and settings.QUERY_SERVICE_CONFIG:
            _service = QueryService.from_source(settings.QUERY_SERVICE_CONFIG)
        return _service


def reset_service():
    """关闭并丢弃共享的 QueryService（配置变更或测试结束时调用）"""
    global _service
    with _service_lock:
        if _service is not None:
            _service.close()
        _service = None


class QueryViewSet(viewsets.GenericViewSet):
    """
    查询服务API视图集

    端点：
    - POST /api/query/       # 提交一条查询，返回加噪响应
    - GET  /api/mechanisms/  # 已注册的机制
    """

    permission_classes = [permissions.AllowAny]

    def _service_or_error(self):
        try:
            service = get_service()
        except ToolkitError as exc:
            logger.error('查询服务初始化失败: %s', exc.code)
            return None, Response({
                'status': 'error',
                'message': f'查询服务初始化失败：{exc.message}',
                'errors': exc.to_dict(),
            }, status=status.HTTP_503_SERVICE_UNAVAILABLE)
        if service is None:
            return None, Response({
                'status': 'error',
                'message': '查询服务未配置',
            }, status=status.HTTP_503_SERVICE_UNAVAILABLE)
        return service, None

    @action(detail=False, methods=['post'], url_path='query')
    def query(self, request):
        """
        提交查询

        POST /api/query/

        请求格式：
        {
            "id": "r1",
            "query": {"type": "average"},
            "mechanism": "avg"
        }

        响应格式：
        {
            "status": "success",
            "message": "查询成功",
            "data": {"id": "r1", "value": [0.71], "mechanism": "avg"}
        }
        """
        service, error = self._service_or_error()
        if error is not None:
            return error

        result = service.handle(request.data, service.new_rng())
        if 'error' in result:
            return Response({
                'status': 'error',
                'message': result['error']['message'],
                'errors': result,
            }, status=status.HTTP_400_BAD_REQUEST)

        return Response({
            'status': 'success',
            'message': '查询成功',
            'data': result,
        })

    @action(detail=False, methods=['get'], url_path='mechanisms')
    def mechanisms(self, request):
        """
        已注册的机制

        GET /api/mechanisms/
        """
        service, error = self._service_or_error()
        if error is not None:
            return error

        summaries = service.registry.summaries()
        return Response({
            'status': 'success',
            'data': {
                'mechanisms': summaries,
                'total': len(summaries),
            }
        })
