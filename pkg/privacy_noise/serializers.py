"""
机制配置的序列化器

查询服务和实验命令共用同一套 JSON 配置格式：
{"query": {...}, "noise": {...}, "budget": {...}}

这里只做结构和取值校验，构造对象由 densities / mechanisms 完成。
"""

from rest_framework import serializers

from .exceptions import ConfigError


def validated(serializer_class, data):
    """
    用序列化器校验数据

    参数:
        serializer_class: 序列化器类
        data: 待校验的字典

    返回:
        validated_data；校验失败抛出 ConfigError（携带序列化器的错误字典）
    """
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigError('配置校验失败', errors=_plain_errors(serializer.errors))
    return serializer.validated_data


def _plain_errors(errors):
    if isinstance(errors, dict):
        return {k: _plain_errors(v) for k, v in errors.items()}
    if isinstance(errors, list):
        return [_plain_errors(e) for e in errors]
    return str(errors)


class IntervalField(serializers.ListField):
    """[lo, hi] 区间，要求 lo < hi"""

    def __init__(self, **kwargs):
        kwargs.setdefault('child', serializers.FloatField())
        kwargs.setdefault('min_length', 2)
        kwargs.setdefault('max_length', 2)
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if not value[0] < value[1]:
            raise serializers.ValidationError('区间必须满足 lo < hi')
        return value


class MatrixField(serializers.ListField):
    """矩形的二维数值数组"""

    def __init__(self, **kwargs):
        kwargs.setdefault('child', serializers.ListField(child=serializers.FloatField(), min_length=1))
        kwargs.setdefault('min_length', 1)
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if len({len(row) for row in value}) != 1:
            raise serializers.ValidationError('矩阵各行长度必须一致')
        return value


class NoiseConfigSerializer(serializers.Serializer):
    """噪声密度配置 {"kind": ..., 参数...}"""

    KIND_CHOICES = ['cos_sq', 'product_cos_sq', 'tilted_cos_sq', 'gaussian', 'laplace']

    kind = serializers.ChoiceField(choices=KIND_CHOICES)
    support = IntervalField(required=False)
    supports = serializers.ListField(child=IntervalField(), required=False, min_length=1)
    dim = serializers.IntegerField(required=False, min_value=1)
    weight = serializers.ChoiceField(choices=['uniform', 'exponential', 'gaussian'], required=False)
    tilt = serializers.FloatField(required=False)
    x = serializers.FloatField(required=False)
    covariance = MatrixField(required=False)
    scale = serializers.FloatField(required=False, min_value=0.0)

    def validate(self, attrs):
        kind = attrs['kind']
        if kind in ('cos_sq', 'tilted_cos_sq') and 'support' not in attrs:
            raise serializers.ValidationError({'support': f'{kind} 需要 support'})
        if kind == 'product_cos_sq' and not attrs.get('supports') and 'support' not in attrs:
            raise serializers.ValidationError({'supports': 'product_cos_sq 需要 supports 或 support'})
        if kind == 'gaussian' and 'covariance' not in attrs:
            raise serializers.ValidationError({'covariance': 'gaussian 需要 covariance'})
        if kind == 'laplace' and not attrs.get('scale'):
            raise serializers.ValidationError({'scale': 'laplace 需要正的 scale'})
        return attrs


class QueryConfigSerializer(serializers.Serializer):
    """
    查询配置

    type: identity / average / variance / linear
    """

    type = serializers.ChoiceField(choices=['identity', 'average', 'variance', 'linear'])
    n = serializers.IntegerField(required=False, min_value=1)
    weights = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    matrix = MatrixField(required=False)

    def validate(self, attrs):
        if attrs['type'] == 'linear' and 'matrix' not in attrs:
            raise serializers.ValidationError({'matrix': 'linear 查询需要 matrix'})
        return attrs


class BudgetConfigSerializer(serializers.Serializer):
    """
    隐私预算配置

    kind:
    - bounded: 噪声支撑 support
    - output_set: 响应必须落在输出集合 support 内
    - rho: 隐私与质量的权衡系数 ρ
    - theta: 质量损失上界 ϑ
    - epsilon: ε-差分隐私，entry_domain 为每个条目的取值域
    """

    kind = serializers.ChoiceField(choices=['bounded', 'output_set', 'rho', 'theta', 'epsilon'])
    support = IntervalField(required=False)
    weight = serializers.ChoiceField(choices=['uniform', 'exponential', 'gaussian'], required=False)
    rho = serializers.FloatField(required=False)
    theta = serializers.FloatField(required=False)
    epsilon = serializers.FloatField(required=False)
    entry_domain = IntervalField(required=False)

    def validate(self, attrs):
        kind = attrs['kind']
        needed = {
            'bounded': ['support'],
            'output_set': ['support'],
            'rho': ['rho'],
            'theta': ['theta'],
            'epsilon': ['epsilon', 'entry_domain'],
        }[kind]
        missing = [name for name in needed if name not in attrs]
        if missing:
            raise serializers.ValidationError({name: f'{kind} 预算需要该字段' for name in missing})
        for name in ('rho', 'theta', 'epsilon'):
            if name in attrs and not attrs[name] > 0:
                raise serializers.ValidationError({name: '必须为正数'})
        return attrs


class MechanismConfigSerializer(serializers.Serializer):
    """机制配置 {"query": {...}, "noise": {...}, "budget": {...}}"""

    query = QueryConfigSerializer(required=False)
    noise = NoiseConfigSerializer(required=False)
    budget = BudgetConfigSerializer()
