"""
与差分隐私的对比

- check_eps_delta / eps_delta_region: 高斯机制的 (ε, δ)-差分隐私证书
- entropy_compare / fisher_compare: 相同质量损失下拉普拉斯与最优高斯的比较
- strength_factor: 最优高斯相对拉普拉斯的均方误差保证倍数 1 + κ
- epsilon_dp_audit: 对拉普拉斯机制的密度比做数值审计
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .densities import GaussianDensity, Interval, LaplaceDensity
from .exceptions import DeltaOutOfRange, InvalidParameter, NotScalar
from .fisher import fisher_scalar_quadrature
from .matcore import as_matrix
from .mechanisms import sensitivity
from .adversary import projection_residual

logger = logging.getLogger(__name__)

AUDIT_SLACK = 1e-9
MAX_CORNER_DIM = 20


@dataclass
class DpCertificate:
    """
    差分隐私证书

    kind: 'epsilon' 或 'epsilon_delta'
    binding_value: 判定不等式的右端
    """

    kind: str
    epsilon: float
    delta: float
    satisfied: bool
    binding_value: float

    def to_dict(self):
        return {
            'kind': self.kind,
            'epsilon': self.epsilon,
            'delta': self.delta,
            'satisfied': self.satisfied,
            'binding_value': self.binding_value,
        }


def _entry_domain(domain):
    return domain if isinstance(domain, Interval) else Interval(*domain)


def gaussian_min_theta(delta_sensitivity, epsilon, delta):
    """
    (ε, δ)-差分隐私所需的最小质量损失

    Δ·(√(2 ln(1/(2δ)))/ε + 1/√(2ε))
    """
    if not epsilon > 0:
        raise InvalidParameter('ε 必须为正', epsilon=epsilon)
    if not 0 < delta <= 0.5:
        raise DeltaOutOfRange('δ 必须在 (0, 1/2] 内', delta=delta)
    # δ = 1/2 时对数项为零
    log_term = max(math.log(1.0 / (2.0 * delta)), 0.0)
    return delta_sensitivity * (math.sqrt(2.0 * log_term) / epsilon + 1.0 / math.sqrt(2.0 * epsilon))


def check_eps_delta(theta, entry_domain, c, epsilon, delta):
    """
    最优高斯机制（质量损失 ϑ）是否满足 (ε, δ)-差分隐私

    参数:
        theta: ϑ
        entry_domain: 每个条目的取值域
        c: 1×n 查询矩阵
        epsilon: ε > 0
        delta: δ ∈ (0, 1/2]

    返回:
        DpCertificate，binding_value 为不等式右端
    """
    delta_sensitivity = sensitivity(c, _entry_domain(entry_domain))
    rhs = gaussian_min_theta(delta_sensitivity, epsilon, delta)
    return DpCertificate(
        kind='epsilon_delta',
        epsilon=float(epsilon),
        delta=float(delta),
        satisfied=bool(theta >= rhs),
        binding_value=rhs,
    )


@dataclass
class RegionGrid:
    """(ε, δ) 网格上的证书结果，satisfied[i, j] 对应 deltas[i]、epsilons[j]"""

    epsilons: np.ndarray
    deltas: np.ndarray
    satisfied: np.ndarray
    theta: float

    def rows(self):
        """逐格输出 (epsilon, delta, satisfied)"""
        for i, delta in enumerate(self.deltas):
            for j, epsilon in enumerate(self.epsilons):
                yield float(epsilon), float(delta), bool(self.satisfied[i, j])

    def satisfied_at(self, epsilon, delta):
        i = int(np.argmin(np.abs(np.log(self.deltas) - math.log(delta))))
        j = int(np.argmin(np.abs(np.log(self.epsilons) - math.log(epsilon))))
        return bool(self.satisfied[i, j])


def eps_delta_region(theta, entry_domain, c, eps_grid=None, delta_grid=None, points=61):
    """
    (ε, δ) 平面上的可认证区域

    参数:
        eps_grid: ε 网格，默认在 [1e-3, 1] 上对数均匀取 points 个点
        delta_grid: δ 网格，默认在 [1e-3, 1/2] 上对数均匀取 points 个点；δ > 1/2 的格子记为不满足

    返回:
        RegionGrid
    """
    epsilons = np.asarray(eps_grid if eps_grid is not None else np.logspace(-3, 0, points), dtype=float)
    deltas = np.asarray(
        delta_grid if delta_grid is not None else np.logspace(-3, math.log10(0.5), points), dtype=float,
    )
    domain = _entry_domain(entry_domain)
    satisfied = np.zeros((deltas.size, epsilons.size), dtype=bool)
    for i, delta in enumerate(deltas):
        if not 0 < delta <= 0.5:
            continue
        for j, epsilon in enumerate(epsilons):
            satisfied[i, j] = check_eps_delta(theta, domain, c, epsilon, delta).satisfied
    logger.debug('eps-delta region: %d of %d cells satisfied', int(satisfied.sum()), satisfied.size)
    return RegionGrid(epsilons=epsilons, deltas=deltas, satisfied=satisfied, theta=float(theta))


@dataclass
class EntropyComparison:
    laplace_bits: float
    gaussian_bits: float
    gaussian_dominates: bool

    @property
    def gap(self):
        return self.gaussian_bits - self.laplace_bits


def entropy_compare(theta):
    """
    质量损失均为 ϑ 时拉普拉斯与高斯噪声的熵（比特）

    拉普拉斯 b = √(ϑ/2)：log₂(e√(2ϑ))；高斯方差 ϑ：log₂(√(2πeϑ))。
    两者之差恒为 ½log₂(π/e)。
    """
    if not theta > 0:
        raise InvalidParameter('ϑ 必须为正', theta=theta)
    laplace_bits = LaplaceDensity(math.sqrt(theta / 2.0)).entropy_bits()
    gaussian_bits = GaussianDensity([[theta]]).entropy_bits()
    dominates = gaussian_bits >= laplace_bits
    assert dominates, '高斯噪声的熵应不小于同质量损失的拉普拉斯噪声'
    return EntropyComparison(laplace_bits, gaussian_bits, dominates)


def _gram_scalar(c):
    c = as_matrix(c, 'C')
    if c.shape[0] != 1:
        raise NotScalar('只支持 1×n 查询', rows=int(c.shape[0]))
    return float(c @ c.T)


def fisher_compare(c, theta, quadrature=False):
    """
    质量损失均为 ϑ 时两种机制的Fisher信息

    返回:
        (I_laplace, I_gaussian) = (2CCᵀ/ϑ, CCᵀ/ϑ)；quadrature=True 时用数值积分计算噪声Fisher
    """
    if not theta > 0:
        raise InvalidParameter('ϑ 必须为正', theta=theta)
    gram = _gram_scalar(c)
    if quadrature:
        laplace = fisher_scalar_quadrature(LaplaceDensity(math.sqrt(theta / 2.0)), method='finite_difference')
        gaussian = fisher_scalar_quadrature(GaussianDensity([[theta]]), method='finite_difference')
        return gram * laplace, gram * gaussian
    return 2.0 * gram / theta, gram / theta


def strength_factor(c, entry_domain, theta):
    """
    最优高斯相对拉普拉斯的隐私保证倍数 1 + κ

    κ = 1/(1 + 2(CCᵀ)²·max‖(I - C†C)x‖²/ϑ)，最大值在取值盒的 2ⁿ 个顶点上精确枚举。
    """
    c = as_matrix(c, 'C')
    gram = _gram_scalar(c)
    domain = _entry_domain(entry_domain)
    n = c.shape[1]
    if n > MAX_CORNER_DIM:
        raise InvalidParameter(f'顶点枚举最多支持 {MAX_CORNER_DIM} 维', n=n)
    worst = max(
        projection_residual(c, np.array(corner))
        for corner in itertools.product((domain.lo, domain.hi), repeat=n)
    )
    kappa = 1.0 / (1.0 + 2.0 * gram ** 2 * worst / theta)
    return 1.0 + kappa


def density_log_ratio(density, y, mean_a, mean_b):
    """log γ(y - a) - log γ(y - b)"""
    y = np.asarray(y, dtype=float)
    return density.log_pdf_1d(y - mean_a) - density.log_pdf_1d(y - mean_b)


@dataclass
class DpAudit:
    passed: bool
    sup_log_ratio: float
    epsilon: float

    def __bool__(self):
        return self.passed


def epsilon_dp_audit(mechanism, entry_domain, epsilon, probes=2049):
    """
    拉普拉斯机制的 ε-差分隐私数值审计

    相邻数据库只在一个条目上不同，该条目分别取取值域的两端；
    在 ±20b 范围内取 probes 个响应点，求密度对数比的上确界。

    返回:
        DpAudit，passed ⇔ sup ≤ ε + 1e-9
    """
    noise = mechanism.noise
    if not isinstance(noise, LaplaceDensity):
        raise InvalidParameter('epsilon_dp_audit 只适用于拉普拉斯机制', kind=getattr(noise, 'kind', None))
    domain = _entry_domain(entry_domain)
    c = mechanism.query.matrix()[0]
    base = np.full(c.shape[0], domain.lo)
    sup = 0.0
    for i in range(c.shape[0]):
        neighbour = base.copy()
        neighbour[i] = domain.hi
        mean_a, mean_b = float(c @ base), float(c @ neighbour)
        centre = (mean_a + mean_b) / 2
        grid = np.linspace(centre - 20 * noise.scale, centre + 20 * noise.scale, probes)
        ratio = np.abs(density_log_ratio(noise, grid, mean_a, mean_b))
        sup = max(sup, float(np.max(ratio)))
    passed = sup <= epsilon + AUDIT_SLACK
    logger.info('epsilon-DP audit %s: sup log-ratio %.9g vs epsilon %.9g', mechanism.mechanism_id, sup, epsilon)
    return DpAudit(passed=bool(passed), sup_log_ratio=sup, epsilon=float(epsilon))
