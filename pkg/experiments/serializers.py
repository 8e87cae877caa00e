"""
实验规格文件的序列化器

{
    "seed": 7,
    "out": "results",
    "experiments": {"fig1": {"theta": 1.0}, "traffic": {"t_max": 64}}
}
"""

from rest_framework import serializers

EXPERIMENT_NAMES = ['fig1', 'fig2', 'corollary4', 'traffic', 'crb_suite', 'dp_compare', 'verify']


class ExperimentSpecSerializer(serializers.Serializer):
    """实验规格：种子、输出目录和各实验的参数"""

    seed = serializers.IntegerField(required=False, min_value=0)
    out = serializers.CharField(required=False)
    experiments = serializers.DictField(child=serializers.DictField(), required=False, default=dict)

    def validate_experiments(self, value):
        unknown = sorted(set(value) - set(EXPERIMENT_NAMES))
        if unknown:
            raise serializers.ValidationError(f'未知的实验: {unknown}')
        return value
