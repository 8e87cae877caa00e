"""
自适应积分

对 scipy.integrate.quad（QUADPACK自适应积分）的薄封装：
容差和最大细分次数来自工具包配置，积分未收敛时抛出 QuadratureFailure
而不是只给出 IntegrationWarning。
"""

import logging

import numpy as np
from scipy import integrate

from .conf import toolkit_setting
from .exceptions import QuadratureFailure

logger = logging.getLogger(__name__)


def adaptive_quad(func, lo, hi, points=None, epsabs=None, epsrel=None, limit=None):
    """
    在 [lo, hi] 上自适应积分

    参数:
        func: 标量函数
        lo, hi: 积分区间（有限）
        points: 可选的断点（例如拉普拉斯密度在0处不可微）
        epsabs, epsrel, limit: 覆盖配置中的容差与细分上限

    返回:
        积分值（float）
    """
    epsabs = toolkit_setting('QUADRATURE_EPSABS') if epsabs is None else epsabs
    epsrel = toolkit_setting('QUADRATURE_EPSREL') if epsrel is None else epsrel
    limit = toolkit_setting('QUADRATURE_LIMIT') if limit is None else limit

    kwargs = {'epsabs': epsabs, 'epsrel': epsrel, 'limit': limit, 'full_output': 1}
    if points is not None:
        inner = [p for p in points if lo < p < hi]
        if inner:
            kwargs['points'] = inner

    result = integrate.quad(func, lo, hi, **kwargs)
    value, abserr = result[0], result[1]
    # 返回超过3项说明QUADPACK给出了警告信息（ier > 0）
    if len(result) > 3 or not np.isfinite(value):
        message = result[3] if len(result) > 3 else 'non-finite result'
        raise QuadratureFailure(
            f'积分未达到容差: {message}',
            lo=float(lo), hi=float(hi), abserr=float(abserr), limit=limit,
        )
    logger.debug('quad [%g, %g] = %.12g (abserr %.2e, %d evaluations)',
                 lo, hi, value, abserr, result[2].get('neval', -1))
    return float(value)


def midpoint_nodes(lo, hi, count):
    """
    均匀网格的中点节点

    参数:
        lo, hi: 区间
        count: 单元数

    返回:
        (nodes, cell_width)，节点不落在区间端点上
    """
    width = (hi - lo) / count
    nodes = lo + width * (np.arange(count) + 0.5)
    return nodes, width
