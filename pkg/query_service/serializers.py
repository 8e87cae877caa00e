"""
查询服务的序列化器

- ServiceConfigSerializer: 服务配置文件（JSON）
- QueryRequestSerializer: 单条查询请求

机制配置沿用 privacy_noise.serializers 的格式。
"""

from rest_framework import serializers

from privacy_noise.conf import toolkit_setting
from privacy_noise.serializers import IntervalField, MechanismConfigSerializer, QueryConfigSerializer


class ListenField(serializers.CharField):
    """"host:port" 监听地址，转换为 (host, port)"""

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        host, sep, port = value.rpartition(':')
        if not sep or not host:
            raise serializers.ValidationError('监听地址格式应为 host:port')
        try:
            port = int(port)
        except ValueError:
            raise serializers.ValidationError('端口必须是整数')
        if not 0 <= port <= 65535:
            raise serializers.ValidationError('端口必须在 0-65535 之间')
        return host, port


class DatabaseConfigSerializer(serializers.Serializer):
    """私有数据库：CSV 文件路径和每个条目的取值域"""

    path = serializers.CharField()
    domain = IntervalField()


class ServiceConfigSerializer(serializers.Serializer):
    """
    服务配置

    {
        "listen": "127.0.0.1:7400",
        "database": {"path": "db.csv", "domain": [0, 1]},
        "seed": 7,
        "ledger": "ledger.ndjson",
        "mechanisms": {"avg": {"query": {...}, "budget": {...}}}
    }
    """

    listen = ListenField(default=('127.0.0.1', 7400))
    database = DatabaseConfigSerializer()
    seed = serializers.IntegerField(required=False, min_value=0)
    ledger = serializers.CharField()
    mechanisms = serializers.DictField(child=serializers.DictField(), allow_empty=False)

    def validate_mechanisms(self, value):
        errors = {}
        for name, config in value.items():
            serializer = MechanismConfigSerializer(data=config)
            if not serializer.is_valid():
                errors[name] = serializer.errors
        if errors:
            raise serializers.ValidationError(errors)
        return value

    def validate(self, attrs):
        attrs.setdefault('seed', toolkit_setting('DEFAULT_SEED'))
        return attrs


class QueryRequestSerializer(serializers.Serializer):
    """查询请求 {"id": str, "query": {...}, "mechanism": str}"""

    id = serializers.CharField(max_length=200)
    query = QueryConfigSerializer()
    mechanism = serializers.CharField(max_length=200)
