"""
噪声分布

提供隐私机制使用的噪声密度族：
- CosSqDensity: 有界支撑上的最优 cos² 密度
- ProductCosSqDensity: 多个 cos² 因子的乘积（恒等查询的最优解）
- TiltedCosSqDensity: 非均匀权重 p(x) 下的倾斜 cos² 密度
- GaussianDensity: 无界支撑下的最优高斯噪声
- LaplaceDensity: 差分隐私基线

每个密度都实现 pdf / cdf / 采样 / 矩 / Fisher信息 / 熵 的统一接口，
构造后不再修改，可在多个任务之间共享。随机数生成器总是显式传入。

关于 Fisher 信息的定义：这里统一使用标准定义 ∫(γ′)²/γ，
对 γ = u² 等于 4∫(u′)²。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .conf import toolkit_setting
from .exceptions import DimensionMismatch, InvalidParameter, NotScalar
from .matcore import as_matrix, psd_inverse, psd_sqrt, spectral_decompose
from .quadrature import adaptive_quad

logger = logging.getLogger(__name__)

# 小于该值的倾斜量按零倾斜处理（闭式原函数在 a→0 处的极限）
ZERO_TILT = 1e-12


@dataclass(frozen=True)
class Interval:
    """闭区间 [lo, hi]，lo < hi 且两端有限"""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidParameter('区间端点必须有限', lo=lo, hi=hi)
        if not lo < hi:
            raise InvalidParameter('区间必须满足 lo < hi', lo=lo, hi=hi)
        object.__setattr__(self, 'lo', lo)
        object.__setattr__(self, 'hi', hi)

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def midpoint(self):
        return (self.hi + self.lo) / 2

    def contains(self, value, tol=0.0):
        """value（标量或数组）是否全部落在区间内"""
        arr = np.asarray(value, dtype=float)
        return bool(np.all((arr >= self.lo - tol) & (arr <= self.hi + tol)))

    def scaled(self, factor):
        return Interval(self.lo * factor, self.hi * factor)

    def to_list(self):
        return [self.lo, self.hi]


@dataclass(frozen=True)
class WeightFunction:
    """
    设计权重 p(x)

    p(x) 不是先验，只描述数据库取值域中哪些区域更需要隐私保护。
    log_ratio 返回 p′(x)/p(x)，density 返回未归一化的 p(x)。
    """

    name: str
    log_ratio: Callable[[float], float]
    density: Callable[[float], float]
    description: str = ''
    x_domain: Interval = field(default_factory=lambda: Interval(0.0, 4.0))

    def tilt_at(self, x):
        """在 x 处求 p′(x)/p(x)，必须有限"""
        value = float(self.log_ratio(float(x)))
        if not math.isfinite(value):
            raise InvalidParameter('权重的 p′/p 在该点不有限', weight=self.name, x=float(x))
        return value


def uniform_weight(x_domain=None):
    """均匀权重 p(x) = 1，p′/p ≡ 0"""
    return WeightFunction(
        name='uniform',
        log_ratio=lambda x: 0.0,
        density=lambda x: 1.0,
        description='p(x) = 1',
        x_domain=x_domain or Interval(0.0, 4.0),
    )


def exponential_weight(x_domain=None):
    """指数权重 p(x) ∝ e^{-x}，p′/p ≡ -1"""
    return WeightFunction(
        name='exponential',
        log_ratio=lambda x: -1.0,
        density=lambda x: math.exp(-x),
        description='p(x) ∝ exp(-x)',
        x_domain=x_domain or Interval(0.0, 4.0),
    )


def gaussian_weight(x_domain=None):
    """高斯权重 p(x) ∝ e^{-x²}，p′/p = -2x"""
    return WeightFunction(
        name='gaussian',
        log_ratio=lambda x: -2.0 * x,
        density=lambda x: math.exp(-x * x),
        description='p(x) ∝ exp(-x²)',
        x_domain=x_domain or Interval(0.0, 4.0),
    )


WEIGHTS = {
    'uniform': uniform_weight,
    'exponential': exponential_weight,
    'gaussian': gaussian_weight,
}


def weight_by_name(name, x_domain=None):
    try:
        factory = WEIGHTS[name]
    except KeyError:
        raise InvalidParameter(f'未知的权重: {name}', known=sorted(WEIGHTS)) from None
    return factory(x_domain)


class NoiseDensity:
    """
    噪声密度基类

    子类需要提供 dim、bounded、kind，以及向量化的 _pdf_points。
    标量密度额外提供 log_pdf_1d / score_1d / cdf_1d / quadrature_range。
    """

    kind = 'abstract'
    dim = 1
    bounded = False
    # 密度不可微的点（Fisher数值积分时网格避开这些点）
    kinks = ()

    # ---------- 取值 ----------

    def _as_points(self, w):
        arr = np.asarray(w, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim == 1:
            if arr.shape[0] != self.dim:
                raise DimensionMismatch(
                    f'噪声向量维数 {arr.shape[0]} 与密度维数 {self.dim} 不一致',
                    expected=self.dim, got=int(arr.shape[0]),
                )
            return arr.reshape(1, self.dim)
        if arr.ndim == 2 and arr.shape[1] == self.dim:
            return arr
        raise DimensionMismatch('噪声点的形状不正确', shape=list(arr.shape), dim=self.dim)

    def pdf(self, w):
        """单个噪声向量处的密度值"""
        return float(self._pdf_points(self._as_points(w))[0])

    def pdf_many(self, points):
        """(k, dim) 个点处的密度值"""
        return self._pdf_points(self._as_points(points))

    def _pdf_points(self, points):
        raise NotImplementedError

    def _require_scalar(self, what):
        if self.dim != 1:
            raise NotScalar(f'{what} 只适用于标量密度', kind=self.kind, dim=self.dim)

    def pdf_1d(self, w):
        """标量密度的向量化 pdf"""
        self._require_scalar('pdf_1d')
        arr = np.asarray(w, dtype=float)
        return self._pdf_points(arr.reshape(-1, 1)).reshape(arr.shape)

    def log_pdf_1d(self, w):
        with np.errstate(divide='ignore'):
            return np.log(self.pdf_1d(w))

    def score_1d(self, w):
        """d/dw log pdf 的解析形式；没有时返回 None"""
        return None

    def cdf_1d(self, w):
        self._require_scalar('cdf_1d')
        raise NotImplementedError

    def quadrature_range(self):
        """数值积分使用的区间"""
        raise NotImplementedError

    # ---------- 采样与矩 ----------

    def sample(self, rng, n):
        raise NotImplementedError

    def moments(self):
        raise NotImplementedError

    def noise_fisher(self):
        """噪声的Fisher信息矩阵 I_w（解析形式）"""
        raise NotImplementedError

    def entropy_bits(self):
        """微分熵（比特）；默认对 -γ log₂ γ 数值积分"""
        self._require_scalar('entropy_bits')
        lo, hi = self.quadrature_range()

        def integrand(t):
            g = float(self.pdf_1d(t))
            return -g * math.log2(g) if g > 0 else 0.0

        return adaptive_quad(integrand, lo, hi, points=self.kinks)

    def supports(self):
        """有界密度的逐坐标支撑；无界时为 None"""
        return None

    def to_config(self):
        raise NotImplementedError

    def __repr__(self):
        return f'<{type(self).__name__} {self.to_config()}>'


class CosSqDensity(NoiseDensity):
    """
    有界支撑 [lo, hi] 上的 cos² 密度

    γ(w) = (2/L)·cos²(π(w - mid)/L)，L = hi - lo，在端点处严格为0。
    """

    kind = 'cos_sq'
    dim = 1
    bounded = True

    def __init__(self, support):
        self.support = support if isinstance(support, Interval) else Interval(*support)
        self._k = math.pi / self.support.length

    def _phase(self, w):
        return self._k * (w - self.support.midpoint)

    def _pdf_points(self, points):
        w = points[:, 0]
        inside = (w > self.support.lo) & (w < self.support.hi)
        values = (2.0 / self.support.length) * np.cos(self._phase(w)) ** 2
        return np.where(inside, values, 0.0)

    def score_1d(self, w):
        return -2.0 * self._k * np.tan(self._phase(np.asarray(w, dtype=float)))

    def cdf_1d(self, w):
        arr = np.asarray(w, dtype=float)
        lo, hi, length = self.support.lo, self.support.hi, self.support.length
        raw = (arr - lo) / length + np.sin(2.0 * self._phase(arr)) / (2.0 * math.pi)
        out = np.where(arr <= lo, 0.0, np.where(arr >= hi, 1.0, np.clip(raw, 0.0, 1.0)))
        return float(out) if out.ndim == 0 else out

    def quadrature_range(self):
        return self.support.lo, self.support.hi

    def accept_probability(self, proposals):
        """均匀提议下的接受概率 γ(w)/(2/L) = cos²"""
        return np.cos(self._phase(proposals)) ** 2

    def sample(self, rng, n):
        return _rejection_sample(self, rng, n).reshape(n, 1)

    def moments(self):
        length = self.support.length
        variance = (math.pi ** 2 - 6.0) * length ** 2 / (12.0 * math.pi ** 2)
        return np.array([self.support.midpoint]), np.array([[variance]])

    def noise_fisher(self):
        return np.array([[4.0 * math.pi ** 2 / self.support.length ** 2]])

    def supports(self):
        return [self.support]

    def to_config(self):
        return {'kind': self.kind, 'support': self.support.to_list()}


class ProductCosSqDensity(NoiseDensity):
    """各坐标独立的 cos² 密度乘积"""

    kind = 'product_cos_sq'
    bounded = True

    def __init__(self, per_coordinate):
        factors = [f if isinstance(f, CosSqDensity) else CosSqDensity(f) for f in per_coordinate]
        if not factors:
            raise InvalidParameter('乘积密度至少需要一个因子')
        self.per_coordinate = tuple(factors)
        self.dim = len(factors)

    def _pdf_points(self, points):
        values = np.ones(points.shape[0])
        for i, factor in enumerate(self.per_coordinate):
            values = values * factor._pdf_points(points[:, i:i + 1])
        return values

    def score_1d(self, w):
        self._require_scalar('score_1d')
        return self.per_coordinate[0].score_1d(w)

    def cdf_1d(self, w):
        self._require_scalar('cdf_1d')
        return self.per_coordinate[0].cdf_1d(w)

    def quadrature_range(self):
        self._require_scalar('quadrature_range')
        return self.per_coordinate[0].quadrature_range()

    def sample(self, rng, n):
        columns = [factor.sample(rng, n)[:, 0] for factor in self.per_coordinate]
        return np.column_stack(columns)

    def moments(self):
        means, variances = zip(*(f.moments() for f in self.per_coordinate))
        mean = np.concatenate(means)
        cov = np.diag([v[0, 0] for v in variances])
        return mean, cov

    def noise_fisher(self):
        return np.diag([f.noise_fisher()[0, 0] for f in self.per_coordinate])

    def entropy_bits(self):
        self._require_scalar('entropy_bits')
        return self.per_coordinate[0].entropy_bits()

    def supports(self):
        return [f.support for f in self.per_coordinate]

    def to_config(self):
        return {'kind': self.kind, 'supports': [f.support.to_list() for f in self.per_coordinate]}


class TiltedCosSqDensity(NoiseDensity):
    """
    非均匀权重下的倾斜 cos² 密度

    γ(w|x) = c(x)·exp(-a(w + x))·cos²(π(w - mid)/L)，a = p′(x)/p(x)。
    内部按 exp(-a(w - mid))·cos²(·)/Z 计算以避免溢出，
    二者相差的常数因子记录在 norm_const 中。
    """

    kind = 'tilted_cos_sq'
    dim = 1
    bounded = True

    def __init__(self, support, tilt, shift, partition, envelope=None, weight_name=None):
        self.support = support
        self.tilt = float(tilt)
        self.shift = float(shift)
        self.partition = float(partition)
        self.weight_name = weight_name
        self._k = math.pi / support.length
        self.norm_const = math.exp(self.tilt * (self.shift + support.midpoint)) / self.partition \
            if abs(self.tilt * (self.shift + support.midpoint)) < 700 else math.inf
        self.envelope = envelope if envelope is not None else self._envelope_bound()

    def _kernel(self, w):
        t = w - self.support.midpoint
        return np.exp(-self.tilt * t) * np.cos(self._k * t) ** 2

    def _pdf_points(self, points):
        w = points[:, 0]
        inside = (w > self.support.lo) & (w < self.support.hi)
        return np.where(inside, self._kernel(w) / self.partition, 0.0)

    def score_1d(self, w):
        t = np.asarray(w, dtype=float) - self.support.midpoint
        return -self.tilt - 2.0 * self._k * np.tan(self._k * t)

    def _primitive(self, t):
        # ∫ exp(-a s)·cos²(k s) ds 的原函数在 t 与 -h 之间的差
        a, k, h = self.tilt, self._k, self.support.length / 2
        if abs(a) < ZERO_TILT:
            return (t + h) / 2 + np.sin(2 * k * t) / (4 * k)
        first = -math.exp(a * h) * np.expm1(-a * (t + h)) / (2 * a)
        denom = 2 * (a * a + 4 * k * k)
        second = (np.exp(-a * t) * (2 * k * np.sin(2 * k * t) - a * np.cos(2 * k * t))
                  - math.exp(a * h) * (-a * math.cos(2 * k * h))) / denom
        return first + second

    def cdf_1d(self, w):
        arr = np.asarray(w, dtype=float)
        lo, hi = self.support.lo, self.support.hi
        t = np.clip(arr, lo, hi) - self.support.midpoint
        total = self._primitive(self.support.length / 2)
        raw = np.clip(self._primitive(t) / total, 0.0, 1.0)
        out = np.where(arr <= lo, 0.0, np.where(arr >= hi, 1.0, raw))
        return float(out) if out.ndim == 0 else out

    def quadrature_range(self):
        return self.support.lo, self.support.hi

    def _envelope_bound(self):
        grid = np.linspace(self.support.lo, self.support.hi, toolkit_setting('ENVELOPE_GRID'))
        peak = float(np.max(self._pdf_points(grid.reshape(-1, 1))))
        bound = peak * toolkit_setting('ENVELOPE_INFLATION')
        logger.debug('tilted envelope: tilt=%.6g peak=%.6g bound=%.6g', self.tilt, peak, bound)
        return bound

    def accept_probability(self, proposals):
        return self._pdf_points(proposals.reshape(-1, 1)) / self.envelope

    def sample(self, rng, n):
        return _rejection_sample(self, rng, n).reshape(n, 1)

    def moments(self):
        lo, hi = self.quadrature_range()
        mean = adaptive_quad(lambda t: t * float(self.pdf_1d(t)), lo, hi)
        variance = adaptive_quad(lambda t: (t - mean) ** 2 * float(self.pdf_1d(t)), lo, hi)
        return np.array([mean]), np.array([[variance]])

    def noise_fisher(self):
        lo, hi = self.quadrature_range()

        def integrand(t):
            s = float(self.score_1d(t))
            return float(self.pdf_1d(t)) * s * s

        return np.array([[adaptive_quad(integrand, lo, hi)]])

    def closed_form_partition(self):
        """Z = ∫ exp(-a t) cos²(k t) dt 的闭式值（t ∈ [-L/2, L/2]）"""
        a, k, h = self.tilt, self._k, self.support.length / 2
        if abs(a) < ZERO_TILT:
            return h
        return math.sinh(a * h) * 4 * k * k / (a * (a * a + 4 * k * k))

    def supports(self):
        return [self.support]

    def to_config(self):
        config = {'kind': self.kind, 'support': self.support.to_list(), 'x': self.shift}
        if self.weight_name:
            config['weight'] = self.weight_name
        else:
            config['tilt'] = self.tilt
        return config


class GaussianDensity(NoiseDensity):
    """零均值高斯噪声 N(0, Σ)"""

    kind = 'gaussian'
    bounded = False

    def __init__(self, covariance):
        cov = as_matrix(covariance, 'covariance')
        # 先校验半正定，再校验可逆
        self._sqrt = psd_sqrt(cov)
        self._inverse = psd_inverse(cov)
        self.covariance = (cov + cov.T) / 2
        self.dim = cov.shape[0]
        eigenvalues = spectral_decompose(self.covariance).eigenvalues
        self._log_det = float(np.sum(np.log(eigenvalues)))

    def _pdf_points(self, points):
        quad_form = np.einsum('ij,jk,ik->i', points, self._inverse, points)
        log_norm = -0.5 * (self.dim * math.log(2 * math.pi) + self._log_det)
        return np.exp(log_norm - 0.5 * quad_form)

    def log_pdf_1d(self, w):
        self._require_scalar('log_pdf_1d')
        var = self.covariance[0, 0]
        arr = np.asarray(w, dtype=float)
        return -0.5 * math.log(2 * math.pi * var) - arr ** 2 / (2 * var)

    def score_1d(self, w):
        self._require_scalar('score_1d')
        return -np.asarray(w, dtype=float) / self.covariance[0, 0]

    def cdf_1d(self, w):
        self._require_scalar('cdf_1d')
        out = stats.norm.cdf(np.asarray(w, dtype=float), scale=math.sqrt(self.covariance[0, 0]))
        return float(out) if np.ndim(out) == 0 else out

    def quadrature_range(self):
        self._require_scalar('quadrature_range')
        sigma = math.sqrt(self.covariance[0, 0])
        return -10.0 * sigma, 10.0 * sigma

    def sample(self, rng, n):
        return rng.standard_normal((n, self.dim)) @ self._sqrt

    def moments(self):
        return np.zeros(self.dim), self.covariance.copy()

    def noise_fisher(self):
        return self._inverse.copy()

    def entropy_bits(self):
        self._require_scalar('entropy_bits')
        return 0.5 * (math.log(2 * math.pi * math.e) + self._log_det) / math.log(2)

    def to_config(self):
        return {'kind': self.kind, 'covariance': self.covariance.tolist()}


class LaplaceDensity(NoiseDensity):
    """零均值拉普拉斯噪声 (1/(2b))·exp(-|w|/b)"""

    kind = 'laplace'
    dim = 1
    bounded = False
    kinks = (0.0,)

    def __init__(self, scale):
        scale = float(scale)
        if not (math.isfinite(scale) and scale > 0):
            raise InvalidParameter('拉普拉斯尺度 b 必须为正', scale=scale)
        self.scale = scale

    def _pdf_points(self, points):
        return np.exp(-np.abs(points[:, 0]) / self.scale) / (2 * self.scale)

    def log_pdf_1d(self, w):
        return -np.abs(np.asarray(w, dtype=float)) / self.scale - math.log(2 * self.scale)

    def score_1d(self, w):
        return -np.sign(np.asarray(w, dtype=float)) / self.scale

    def cdf_1d(self, w):
        arr = np.asarray(w, dtype=float)
        half = 0.5 * np.exp(-np.abs(arr) / self.scale)
        out = np.where(arr < 0, half, 1.0 - half)
        return float(out) if out.ndim == 0 else out

    def quadrature_range(self):
        return -20.0 * self.scale, 20.0 * self.scale

    def sample(self, rng, n):
        # 逆CDF采样
        u = rng.uniform(-0.5, 0.5, size=n)
        return (-self.scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))).reshape(n, 1)

    def moments(self):
        return np.zeros(1), np.array([[2.0 * self.scale ** 2]])

    def noise_fisher(self):
        return np.array([[1.0 / self.scale ** 2]])

    def entropy_bits(self):
        return math.log2(2.0 * self.scale * math.e)

    def to_config(self):
        return {'kind': self.kind, 'scale': self.scale}


def _rejection_sample(density, rng, n, batch=None):
    """
    以均匀分布为提议分布的拒绝采样

    density 需要提供 support 和 accept_probability(proposals)。
    """
    lo, hi = density.support.lo, density.support.hi
    accepted = []
    remaining = n
    while remaining > 0:
        size = batch or max(2 * remaining + 64, 1024)
        proposals = rng.uniform(lo, hi, size=size)
        keep = rng.uniform(0.0, 1.0, size=size) < density.accept_probability(proposals)
        chosen = proposals[keep][:remaining]
        accepted.append(chosen)
        remaining -= chosen.shape[0]
    return np.concatenate(accepted)


# ---------- 模块级操作 ----------

def pdf(d, w):
    """噪声向量 w 处的密度值；维数不符抛出 DimensionMismatch"""
    return d.pdf(w)


def cdf_1d(d, w):
    """标量密度的分布函数；非标量抛出 NotScalar"""
    if d.dim != 1:
        raise NotScalar('cdf_1d 只适用于标量密度', kind=d.kind, dim=d.dim)
    return d.cdf_1d(w)


def sample(d, rng, n):
    """
    从密度 d 采样

    参数:
        d: 噪声密度
        rng: numpy.random.Generator
        n: 样本数（≥1）

    返回:
        (n, dim) 数组；有界支撑的样本全部落在支撑内
    """
    if n < 1:
        raise InvalidParameter('样本数必须 ≥ 1', n=n)
    draws = d.sample(rng, int(n))
    supports = d.supports()
    if supports is not None:
        for i, support in enumerate(supports):
            assert support.contains(draws[:, i]), '拒绝采样产生了支撑外的样本'
    return draws


def moments(d):
    """返回 (均值向量, 协方差矩阵)"""
    return d.moments()


def quality(d):
    """响应质量损失 Q = E‖w‖² = Tr(cov) + ‖mean‖²"""
    mean, cov = d.moments()
    return float(np.trace(cov) + mean @ mean)


def entropy_bits(d):
    """标量密度的微分熵（比特）"""
    if d.dim != 1:
        raise NotScalar('entropy_bits 只适用于标量密度', kind=d.kind, dim=d.dim)
    return d.entropy_bits()


def tilted_new(support, weight, x):
    """
    构造权重 p(x) 下在 x 处的最优倾斜 cos² 密度

    参数:
        support: 噪声支撑 Interval
        weight: WeightFunction
        x: 数据库取值（标量）

    返回:
        TiltedCosSqDensity，归一化常数由自适应积分得到
    """
    support = support if isinstance(support, Interval) else Interval(*support)
    tilt = weight.tilt_at(x)
    return tilted_from_tilt(support, tilt, x, weight_name=weight.name)


def tilted_from_tilt(support, tilt, x=0.0, weight_name=None):
    """按给定的倾斜量 a 构造倾斜 cos² 密度"""
    k = math.pi / support.length
    mid = support.midpoint
    partition = adaptive_quad(
        lambda w: math.exp(-tilt * (w - mid)) * math.cos(k * (w - mid)) ** 2,
        support.lo, support.hi,
    )
    return TiltedCosSqDensity(support, tilt, x, partition, weight_name=weight_name)


def rejection_acceptance_rate(d, rng, proposals):
    """
    统计拒绝采样的接受率

    参数:
        d: CosSqDensity 或 TiltedCosSqDensity
        rng: 随机数生成器
        proposals: 提议次数

    返回:
        被接受的提议所占比例
    """
    if not hasattr(d, 'accept_probability'):
        raise InvalidParameter('该密度不使用拒绝采样', kind=d.kind)
    points = rng.uniform(d.support.lo, d.support.hi, size=int(proposals))
    keep = rng.uniform(0.0, 1.0, size=int(proposals)) < d.accept_probability(points)
    return float(np.mean(keep))


def density_from_config(config):
    """
    从 JSON 配置构造密度

    支持的 kind: cos_sq, product_cos_sq, tilted_cos_sq, gaussian, laplace。
    """
    from .serializers import NoiseConfigSerializer, validated

    data = validated(NoiseConfigSerializer, config)
    kind = data['kind']
    if kind == 'cos_sq':
        return CosSqDensity(Interval(*data['support']))
    if kind == 'product_cos_sq':
        if data.get('supports'):
            return ProductCosSqDensity([Interval(*s) for s in data['supports']])
        return ProductCosSqDensity([Interval(*data['support'])] * data.get('dim', 1))
    if kind == 'tilted_cos_sq':
        support = Interval(*data['support'])
        x = data.get('x', 0.0)
        if data.get('weight'):
            return tilted_new(support, weight_by_name(data['weight']), x)
        return tilted_from_tilt(support, data.get('tilt', 0.0), x)
    if kind == 'gaussian':
        return GaussianDensity(data['covariance'])
    return LaplaceDensity(data['scale'])
