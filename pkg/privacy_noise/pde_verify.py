"""
最优性方程的有限差分残差校验

不求解偏微分方程，只检查闭式密度是否满足对应的方程：
- helmholtz_residual: u″ + μu = 0，u = √γ
- theorem1_residual: I⁻²C²u″ + μu = 0（标量、与 x 无关的情形），μ 最小二乘拟合
- theorem2_residual_scalar: u_vv + a·u_v + μ(x)u = 0，v = x + w，a = p′(x)/p(x)
- theorem4_residual: Tr(CCᵀD²u) + (μ - (ρ/4)wᵀw)u = 0（高斯 u，m ≤ 2）

残差只在内部点上计算，两端各排除一个单元。
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .conf import toolkit_setting
from .densities import Interval
from .exceptions import InvalidParameter, NotScalar, SingularFisher
from .fisher import noise_fisher_matrix
from .matcore import as_matrix, psd_inverse

logger = logging.getLogger(__name__)

MIN_POINTS = 65


@dataclass(frozen=True)
class Grid1D:
    """[lo, hi] 上的均匀网格，点数为奇数且 ≥ 65"""

    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if self.points < MIN_POINTS or self.points % 2 == 0:
            raise InvalidParameter(f'网格点数必须是 ≥ {MIN_POINTS} 的奇数', points=self.points)
        if not self.lo < self.hi:
            raise InvalidParameter('网格区间必须满足 lo < hi', lo=self.lo, hi=self.hi)

    @classmethod
    def over(cls, interval, points=513):
        return cls(interval.lo, interval.hi, points)

    @property
    def h(self):
        return (self.hi - self.lo) / (self.points - 1)

    @property
    def nodes(self):
        return np.linspace(self.lo, self.hi, self.points)

    def refined(self):
        """步长减半的网格（2N - 1 个点）"""
        return Grid1D(self.lo, self.hi, 2 * self.points - 1)

    def interior(self):
        return slice(2, self.points - 2)


@dataclass
class ResidualReport:
    """
    残差报告

    boundary_values: 网格两端的 |u|
    relative_residual: max|r| 相对于方程主项量级
    """

    check: str
    max_abs_residual: float
    interior_points_checked: int
    mu_used: float
    boundary_values: tuple
    relative_residual: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        data = {
            'check': self.check,
            'max_abs_residual': self.max_abs_residual,
            'interior_points_checked': self.interior_points_checked,
            'mu_used': self.mu_used,
            'boundary_values': list(self.boundary_values),
            'relative_residual': self.relative_residual,
            'passed': self.passed,
        }
        data.update(self.extra)
        return data


def _second_difference(u, h):
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
    return out


def _first_difference(u, h):
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    return out


def _sqrt_density(d, nodes):
    if d.dim != 1:
        raise NotScalar('残差校验只适用于标量密度', kind=d.kind, dim=d.dim)
    return np.sqrt(d.pdf_1d(nodes))


def _finish(check, residual, u, grid, mu, scale, require_boundary=True, extra=None):
    tolerance = toolkit_setting('RESIDUAL_TOLERANCE')
    inner = grid.interior()
    r = residual[inner]
    max_abs = float(np.max(np.abs(r)))
    relative = max_abs / scale if scale > 0 else math.inf
    boundary = (float(abs(u[0])), float(abs(u[-1])))
    u_max = float(np.max(np.abs(u)))
    boundary_ok = max(boundary) <= 1e-12 * max(u_max, 1.0)
    passed = relative <= tolerance and (boundary_ok or not require_boundary)
    report = ResidualReport(
        check=check,
        max_abs_residual=max_abs,
        interior_points_checked=int(r.size),
        mu_used=float(mu),
        boundary_values=boundary,
        relative_residual=float(relative),
        passed=bool(passed),
        extra=extra or {},
    )
    if not passed:
        logger.warning('%s residual check failed: relative residual %.3e', check, relative)
    return report


def helmholtz_residual(d, grid=None, mu=None, profile=None):
    """
    u″ + μu 的残差，u = √γ

    参数:
        d: CosSqDensity（提供支撑）
        grid: 网格，默认在支撑上取513点
        mu: 乘子，默认 (π/L)²
        profile: 替代 u 的函数（例如常数，作为反例）

    返回:
        ResidualReport，相对残差按 μ·‖u‖∞ 归一
    """
    support = d.support
    grid = grid or Grid1D.over(support)
    nodes = grid.nodes
    u = np.asarray(profile(nodes), dtype=float) * np.ones_like(nodes) if profile else _sqrt_density(d, nodes)
    mu = (math.pi / support.length) ** 2 if mu is None else mu
    residual = _second_difference(u, grid.h) + mu * u
    scale = abs(mu) * float(np.max(np.abs(u)))
    return _finish('helmholtz', residual, u, grid, mu, scale)


def theorem1_residual(d, c, grid=None):
    """
    标量最优性方程 I⁻²C²u″ + μu = 0 的残差

    参数:
        d: 标量噪声密度
        c: 1×1 查询矩阵
        grid: 网格，默认覆盖支撑（或数值积分区间）

    返回:
        ResidualReport；μ 在内部点上最小二乘拟合，边界值必须为零才算通过
    """
    c = as_matrix(c, 'C')
    if c.shape != (1, 1):
        raise NotScalar('theorem1_residual 只支持 1×1 的 C', shape=list(c.shape))
    fisher = float(noise_fisher_matrix(d)[0, 0]) * float(c[0, 0]) ** 2
    if not fisher > 1e-12:
        raise SingularFisher('Fisher信息为零', fisher=fisher)
    if grid is None:
        lo, hi = d.quadrature_range() if not d.bounded else (d.support.lo, d.support.hi)
        grid = Grid1D(lo, hi, 513)

    u = _sqrt_density(d, grid.nodes)
    coefficient = float(c[0, 0]) ** 2 / fisher ** 2
    lhs = coefficient * _second_difference(u, grid.h)
    inner = grid.interior()
    mu = -float(np.dot(lhs[inner], u[inner]) / np.dot(u[inner], u[inner]))
    residual = lhs + mu * u
    scale = abs(mu) * float(np.max(np.abs(u)))
    extra = {'fisher': fisher, 'expected_mu': None}
    if d.bounded:
        extra['expected_mu'] = coefficient * (math.pi / (grid.hi - grid.lo)) ** 2
    return _finish('theorem1', residual, u, grid, mu, scale, extra=extra)


def theorem2_residual_scalar(family, weight, x, grid=None):
    """
    非均匀权重下标量方程 u_vv + a·u_v + μ(x)u = 0 的残差

    参数:
        family: x ↦ 噪声密度（倾斜 cos² 族）
        weight: WeightFunction，a = p′(x)/p(x)
        x: 数据库取值
        grid: w 上的网格，默认覆盖支撑（v = x + w 的步长相同）

    返回:
        ResidualReport，μ(x) = a²/4 + (π/L)²
    """
    density = family(x)
    support = density.support
    grid = grid or Grid1D.over(support)
    a = weight.tilt_at(x)
    u = _sqrt_density(density, grid.nodes)
    mu = a * a / 4 + (math.pi / support.length) ** 2
    residual = _second_difference(u, grid.h) + a * _first_difference(u, grid.h) + mu * u
    scale = mu * float(np.max(np.abs(u)))
    return _finish('theorem2', residual, u, grid, mu, scale, extra={'x': float(x), 'tilt': a})


def theorem4_residual(c, rho, sigma, points=129, span=8.0):
    """
    高斯 u(w) = exp(-wᵀΣ⁻¹w/4) 代入 Tr(CCᵀD²u) + (μ - (ρ/4)wᵀw)u = 0

    用加权最小二乘把 Tr(CCᵀD²u) 拟合为 (wᵀKw + k₀)u，
    mismatch_factor s = ⟨K, (ρ/4)I⟩/‖K‖²，Σ 乘以 sigma_scale = 1/√s 后残差消失。

    参数:
        c: m×n 查询矩阵（m ≤ 2）
        rho: ρ > 0
        sigma: m×m 协方差
        points: 每个坐标轴的网格点数
        span: 截断在 ±span·σ

    返回:
        ResidualReport；extra 中记录 mismatch_factor 与 sigma_scale
    """
    c = as_matrix(c, 'C')
    sigma = as_matrix(sigma, 'sigma')
    m = c.shape[0]
    if m > 2 or sigma.shape != (m, m):
        raise InvalidParameter('theorem4_residual 只支持 m ≤ 2 且 Σ 为 m×m', m=m)
    if not rho > 0:
        raise InvalidParameter('ρ 必须为正', rho=rho)
    precision = psd_inverse(sigma)
    weight_matrix = c @ c.T
    axes = [Grid1D(-span * math.sqrt(sigma[i, i]), span * math.sqrt(sigma[i, i]), points) for i in range(m)]
    mesh = np.meshgrid(*[g.nodes for g in axes], indexing='ij')
    w = np.stack(mesh, axis=-1)
    u = np.exp(-np.einsum('...i,ij,...j->...', w, precision, w) / 4)

    # 有限差分 Hessian 与 Tr(CCᵀ D²u)
    hs = [g.h for g in axes]
    inner = tuple(slice(2, points - 2) for _ in range(m))
    operator = np.zeros_like(u)
    for i in range(m):
        for j in range(m):
            operator += weight_matrix[i, j] * _hessian_entry(u, hs, i, j)
    op, uu, ww = operator[inner].ravel(), u[inner].ravel(), w[inner].reshape(-1, m)

    # 拟合 op ≈ (wᵀKw + k₀)u，权重 u 抑制尾部
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    design = np.column_stack(
        [ww[:, i] * ww[:, j] * uu * (1 if i == j else 2) for i, j in pairs] + [uu]
    )
    coef, *_ = np.linalg.lstsq(design * uu[:, None], op * uu, rcond=None)
    k = np.zeros((m, m))
    for value, (i, j) in zip(coef[:-1], pairs):
        k[i, j] = k[j, i] = value
    target = (rho / 4) * np.eye(m)
    k_norm = float(np.sum(k * k))
    mismatch = float(np.sum(k * target)) / k_norm if k_norm > 0 else math.inf
    sigma_scale = 1.0 / math.sqrt(mismatch) if 0 < mismatch < math.inf else math.nan

    # μ 在 (ρ/4)wᵀw 给定时最小二乘拟合
    quadratic = (rho / 4) * np.sum(ww * ww, axis=1) * uu
    mu = -float(np.dot(op - quadratic, uu) / np.dot(uu, uu))
    residual = op + mu * uu - quadratic
    max_abs = float(np.max(np.abs(residual)))
    scale = float(np.max(np.abs(op)))
    relative = max_abs / scale if scale > 0 else math.inf
    passed = relative <= toolkit_setting('RESIDUAL_TOLERANCE')
    report = ResidualReport(
        check='theorem4',
        max_abs_residual=max_abs,
        interior_points_checked=int(uu.size),
        mu_used=mu,
        boundary_values=(float(u.flat[0]), float(u.flat[-1])),
        relative_residual=relative,
        passed=bool(passed),
        extra={'mismatch_factor': mismatch, 'sigma_scale': sigma_scale, 'rho': float(rho)},
    )
    logger.info('theorem4 residual: relative %.3e, mismatch factor %.4f', relative, mismatch)
    return report


def _hessian_entry(u, hs, i, j):
    out = np.zeros_like(u)
    core = tuple(slice(1, -1) for _ in range(u.ndim))
    if i == j:
        plus = np.roll(u, -1, axis=i)
        minus = np.roll(u, 1, axis=i)
        full = (plus - 2 * u + minus) / (hs[i] ** 2)
    else:
        pp = np.roll(np.roll(u, -1, axis=i), -1, axis=j)
        pm = np.roll(np.roll(u, -1, axis=i), 1, axis=j)
        mp = np.roll(np.roll(u, 1, axis=i), -1, axis=j)
        mm = np.roll(np.roll(u, 1, axis=i), 1, axis=j)
        full = (pp - pm - mp + mm) / (4 * hs[i] * hs[j])
    out[core] = full[core]
    return out


def boundary_check(d):
    """有界密度在每个坐标支撑端点处的 pdf 是否严格为0"""
    supports = d.supports()
    if supports is None:
        raise InvalidParameter('boundary_check 需要有界支撑', kind=d.kind)
    if d.dim == 1:
        return d.pdf(supports[0].lo) == 0.0 and d.pdf(supports[0].hi) == 0.0
    inside = np.array([s.midpoint for s in supports])
    for i, support in enumerate(supports):
        for edge in (support.lo, support.hi):
            point = inside.copy()
            point[i] = edge
            if d.pdf(point) != 0.0:
                return False
    return True


def convergence_ratio(check, points=513):
    """
    网格加密的收敛比

    参数:
        check: points ↦ ResidualReport
        points: 粗网格点数 N（细网格为 2N - 1）

    返回:
        max|r|(N) / max|r|(2N-1)，二阶收敛时约为4
    """
    coarse = check(points).max_abs_residual
    fine = check(2 * points - 1).max_abs_residual
    return coarse / fine if fine > 0 else math.inf


def support_grid(support, points=513):
    support = support if isinstance(support, Interval) else Interval(*support)
    return Grid1D.over(support, points)
