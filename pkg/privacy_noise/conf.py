"""
工具包配置读取

数值常量集中在 settings.PRIVACY_TOOLKIT 中；Django未配置时
（例如把 privacy_noise 当作普通库导入）使用这里的默认值。
"""

from django.conf import settings

DEFAULTS = {
    'VERSION': '1.0.0',
    'QUADRATURE_EPSABS': 1e-10,
    'QUADRATURE_EPSREL': 1e-10,
    'QUADRATURE_LIMIT': 200,
    'FISHER_GRID': 4097,
    'ENVELOPE_GRID': 4097,
    'ENVELOPE_INFLATION': 1.01,
    'RESIDUAL_TOLERANCE': 1e-2,
    'MC_SLACK_SIGMAS': 3.0,
    'MC_MIN_TRIALS': 10_000,
    'DEFAULT_SEED': 20161,
    'OUTPUT_DIR': 'results',
}


def toolkit_setting(name):
    """
    读取一个工具包配置项

    参数:
        name: 配置名，必须是 DEFAULTS 中的键

    返回:
        settings.PRIVACY_TOOLKIT[name]，缺省时为默认值
    """
    if name not in DEFAULTS:
        raise KeyError(f'未知的工具包配置项: {name}')
    if settings.configured:
        overrides = getattr(settings, 'PRIVACY_TOOLKIT', {}) or {}
        return overrides.get(name, DEFAULTS[name])
    return DEFAULTS[name]
