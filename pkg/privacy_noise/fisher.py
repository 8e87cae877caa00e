"""
Fisher信息与Cramér–Rao界

主要功能：
- 标量噪声密度的Fisher信息数值积分
- 查询雅可比下的Fisher矩阵 I(x) = Fᵀ·I_w·F
- 无偏/有偏/最小二乘估计的CRB
- 界链 Tr(I⁻¹) ≥ n²/Tr(I) 与最坏单条目界 1/Tr(I)
- 加权目标函数 J̄ = ∫Tr(I(x)⁻¹)p(x)dx 与 J = ∫Tr(I(x))p(x)dx
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .conf import toolkit_setting
from .densities import GaussianDensity, ProductCosSqDensity
from .exceptions import (
    DimensionMismatch, InvalidParameter, NotScalar, Singular, SingularDensity, SingularFisher, ZeroTrace,
)
from .matcore import as_matrix, moore_penrose_pinv, psd_inverse, spectral_decompose
from .quadrature import adaptive_quad, midpoint_nodes

logger = logging.getLogger(__name__)

PDF_FLOOR = 1e-14
MIN_GRID = 2049
SINGULAR_TOLERANCE = 1e-10


@dataclass
class FisherReport:
    """
    Fisher信息报告

    matrix: n×n 的 I(x)
    trace_inverse: Tr(I⁻¹)，I 奇异时为 None
    lower_bound: n²/Tr(I)
    worst_case_entry_bound: 1/Tr(I)
    """

    matrix: np.ndarray
    trace: float
    trace_inverse: float | None
    lower_bound: float
    worst_case_entry_bound: float

    @classmethod
    def from_matrix(cls, matrix):
        arr = as_matrix(matrix, 'fisher')
        arr = (arr + arr.T) / 2
        n = arr.shape[0]
        trace = float(np.trace(arr))
        decomp = spectral_decompose(arr)
        trace_inverse = None
        if decomp.min_eigenvalue > SINGULAR_TOLERANCE:
            trace_inverse = float(np.sum(1.0 / decomp.eigenvalues))
        if trace > 0:
            lower_bound, worst_case = n * n / trace, 1.0 / trace
        else:
            lower_bound = worst_case = math.inf
        return cls(arr, trace, trace_inverse, lower_bound, worst_case)

    @property
    def n(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {
            'n': self.n,
            'trace': self.trace,
            'trace_inverse': self.trace_inverse,
            'lower_bound': self.lower_bound,
            'worst_case_entry_bound': self.worst_case_entry_bound,
            'matrix': self.matrix.tolist(),
        }


@dataclass
class WeightGrid:
    """权重 p(x) 的求积网格（中点节点）"""

    nodes: np.ndarray
    cell: float
    weights: np.ndarray


@dataclass
class ObjectiveReport:
    """
    目标函数值

    j_bar: Σ Tr(I(xᵢ)⁻¹)p(xᵢ)Δ，奇异点被排除
    j: Σ Tr(I(xᵢ))p(xᵢ)Δ
    singular_points: 被排除的网格点
    """

    j_bar: float
    j: float
    weight_grid: WeightGrid
    traces: np.ndarray
    trace_inverses: np.ndarray
    singular_points: list = field(default_factory=list)

    @property
    def flagged(self):
        return bool(self.singular_points)

    def to_dict(self):
        return {
            'j_bar': self.j_bar,
            'j': self.j,
            'grid_points': int(self.weight_grid.nodes.size),
            'singular_points': [float(x) for x in self.singular_points],
        }


def _derivative_step(lo, hi):
    return (hi - lo) * 2.0 ** -16


def fisher_scalar_quadrature(d, grid=None, method='auto'):
    """
    标量密度的Fisher信息 ∫(γ′)²/γ

    参数:
        d: 标量噪声密度
        grid: 网格单元数（≥2049，默认取配置 FISHER_GRID）
        method: 'analytic' 使用密度的解析得分函数，'finite_difference'
            对 log γ 做中心差分，'auto' 有解析形式时用解析形式

    返回:
        Fisher信息（float）
    """
    if d.dim != 1:
        raise NotScalar('fisher_scalar_quadrature 只适用于标量密度', kind=d.kind, dim=d.dim)
    grid = int(grid or toolkit_setting('FISHER_GRID'))
    if grid < MIN_GRID:
        raise InvalidParameter(f'网格单元数至少为 {MIN_GRID}', grid=grid)

    lo, hi = d.quadrature_range()
    # 不可微点落在单元边界上，不作为节点
    if d.kinks and grid % 2 == 1:
        grid += 1
    nodes, width = midpoint_nodes(lo, hi, grid)
    values = d.pdf_1d(nodes)

    tiny = values < PDF_FLOOR
    if np.any(tiny):
        if d.bounded:
            raise SingularDensity(
                '密度在支撑内部接近零',
                at=float(nodes[np.argmax(tiny)]), pdf=float(values[np.argmax(tiny)]),
            )
        # 无界密度的尾部单元贡献可以忽略

    score = d.score_1d(nodes) if method in ('auto', 'analytic') else None
    if score is None:
        if method == 'analytic':
            raise InvalidParameter('该密度没有解析得分函数', kind=d.kind)
        h = _derivative_step(lo, hi)
        score = (d.log_pdf_1d(nodes + h) - d.log_pdf_1d(nodes - h)) / (2 * h)

    integrand = np.where(tiny, 0.0, values * score ** 2)
    result = float(np.sum(integrand) * width)
    logger.debug('fisher quadrature %s: %d cells -> %.10g', d.kind, grid, result)
    return result


def noise_fisher_matrix(d, grid=None):
    """
    噪声本身的Fisher矩阵 I_w

    高斯使用解析的 Σ⁻¹；cos² 乘积逐坐标数值积分后组成对角阵。
    """
    if isinstance(d, GaussianDensity):
        return d.noise_fisher()
    if isinstance(d, ProductCosSqDensity):
        cache = {}
        diagonal = []
        for factor in d.per_coordinate:
            key = factor.support
            if key not in cache:
                cache[key] = fisher_scalar_quadrature(factor, grid)
            diagonal.append(cache[key])
        return np.diag(diagonal)
    return np.array([[fisher_scalar_quadrature(d, grid)]])


def fisher_matrix(d, jacobian, grid=None):
    """
    加性噪声下的Fisher矩阵

    参数:
        d: 与 x 无关的噪声密度（维数 m）
        jacobian: m × n 的查询雅可比 F

    返回:
        FisherReport，I = Fᵀ·I_w·F
    """
    f = as_matrix(jacobian, 'jacobian')
    if f.shape[0] != d.dim:
        raise DimensionMismatch(
            f'雅可比有 {f.shape[0]} 行，噪声维数为 {d.dim}',
            rows=int(f.shape[0]), dim=d.dim,
        )
    i_w = noise_fisher_matrix(d, grid)
    return FisherReport.from_matrix(f.T @ i_w @ f)


def _fisher_inverse(report):
    try:
        return psd_inverse(report.matrix)
    except Singular as exc:
        raise SingularFisher('Fisher矩阵奇异，不存在有限的无偏CRB', **exc.context) from exc


def crb_unbiased(report):
    """
    无偏估计的Cramér–Rao界 Tr(I⁻¹)

    I 奇异（例如 m < n）时抛出 SingularFisher
    """
    if report.trace_inverse is None:
        raise SingularFisher('Fisher矩阵奇异，不存在有限的无偏CRB', trace=report.trace)
    return report.trace_inverse


def crb_biased(report, g_jacobian, bias):
    """
    有偏估计的界 Tr(Gᵀ I⁻¹ G) + ‖x - g(x)‖²

    参数:
        report: FisherReport
        g_jacobian: 估计量期望 g(x) 的雅可比 G（n × n）
        bias: x - g(x)
    """
    inverse = _fisher_inverse(report)
    g = as_matrix(g_jacobian, 'G')
    if g.shape[0] != report.n:
        raise DimensionMismatch('G 的行数必须等于 x 的维数', rows=int(g.shape[0]), n=report.n)
    bias = np.asarray(bias, dtype=float).reshape(-1)
    return float(np.trace(g.T @ inverse @ g) + bias @ bias)


def crb_least_squares(c, noise_fisher, x):
    """
    最小二乘攻击者 x̂ = C†y 的误差界

    ‖(I - C†C)x‖² + Tr(I_w⁻¹(CCᵀ)⁻¹)，I_w 为响应空间中的噪声Fisher矩阵。
    对高斯噪声该值就是最小二乘估计的均方误差。
    """
    c = as_matrix(c, 'C')
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != c.shape[1]:
        raise DimensionMismatch('x 的维数与 C 的列数不一致', n=int(c.shape[1]), got=int(x.shape[0]))
    pinv = moore_penrose_pinv(c)
    residual = x - pinv @ (c @ x)
    i_w_inv = psd_inverse(as_matrix(noise_fisher, 'noise_fisher'))
    gram_inv = psd_inverse(c @ c.T)
    return float(residual @ residual + np.trace(i_w_inv @ gram_inv))


def bound_chain(report):
    """
    返回 (n²/Tr(I), 1/Tr(I))

    I 可逆时同时校验 Tr(I⁻¹) ≥ n²/Tr(I)
    """
    if not report.trace > 0:
        raise ZeroTrace('Tr(I) 为零，界链无定义', trace=report.trace)
    lower, worst = report.lower_bound, report.worst_case_entry_bound
    if report.trace_inverse is not None:
        assert report.trace_inverse >= lower * (1 - 1e-9), 'Tr(I⁻¹) ≥ n²/Tr(I) 不成立'
    return lower, worst


def weight_grid(weight, interval=None, count=257):
    """
    权重 p(x) 在区间上的中点求积网格

    参数:
        weight: WeightFunction
        interval: x 的取值区间，默认 weight.x_domain
        count: 节点数
    """
    interval = interval or weight.x_domain
    nodes, cell = midpoint_nodes(interval.lo, interval.hi, int(count))
    weights = np.array([weight.density(float(x)) for x in nodes])
    return WeightGrid(nodes=nodes, cell=cell, weights=weights)


def objectives(density_family, query, weight, grid=None, fisher_grid=None):
    """
    计算目标函数 J̄ 与 J

    参数:
        density_family: x ↦ NoiseDensity
        query: 提供 n 和 jacobian(x) 的查询
        weight: WeightFunction
        grid: WeightGrid，默认在 weight.x_domain 上取257个中点
        fisher_grid: Fisher数值积分网格

    返回:
        ObjectiveReport；Fisher奇异的网格点只从 J̄ 中排除并记录
    """
    grid = grid or weight_grid(weight)
    traces = np.empty(grid.nodes.size)
    trace_inverses = np.full(grid.nodes.size, np.nan)
    singular = []
    j = j_bar = 0.0
    cache = {}
    for i, xi in enumerate(grid.nodes):
        x = np.full(query.n, float(xi))
        density = density_family(float(xi))
        key = (repr(density.to_config()), query.jacobian(x).tobytes())
        if key not in cache:
            cache[key] = fisher_matrix(density, query.jacobian(x), fisher_grid)
        report = cache[key]
        traces[i] = report.trace
        j += report.trace * grid.weights[i] * grid.cell
        if report.trace_inverse is None:
            singular.append(float(xi))
            continue
        trace_inverses[i] = report.trace_inverse
        j_bar += report.trace_inverse * grid.weights[i] * grid.cell

    if singular:
        logger.warning('objectives: %d grid points with singular Fisher excluded from j_bar', len(singular))
    report = ObjectiveReport(
        j_bar=j_bar, j=j, weight_grid=grid,
        traces=traces, trace_inverses=trace_inverses, singular_points=singular,
    )
    total_weight = float(np.sum(grid.weights) * grid.cell)
    if not singular and j > 0:
        # 带权的Jensen不等式：J̄·J ≥ n²·(∫p)²
        assert j_bar * j >= (query.n * total_weight) ** 2 * (1 - 1e-6), 'J̄ ≥ n²/J 不成立'
    return report


def pushforward_fisher_scalar(d, transform, x=0.0, inverse=None):
    """
    响应经过光滑单射 φ 变换后关于 x 的Fisher信息

    z = φ(x + w)，p(z|x) = γ(φ⁻¹(z) - x)/|φ′(φ⁻¹(z))|。
    对 log p(z|x) 关于 x 做中心差分，再在 z 上自适应积分。

    参数:
        d: 标量噪声密度
        transform: 单调的 φ
        x: 真实取值
        inverse: 可选的 φ⁻¹，缺省时用 brentq 求根

    返回:
        Fisher信息（float）
    """
    lo, hi = d.quadrature_range()
    h = _derivative_step(lo, hi)
    w_lo, w_hi = lo + 2 * h, hi - 2 * h
    y_lo, y_hi = x + w_lo, x + w_hi
    z_a, z_b = transform(y_lo), transform(y_hi)
    increasing = z_b > z_a

    def invert(z):
        if inverse is not None:
            return inverse(z)
        return optimize.brentq(lambda y: transform(y) - z, y_lo - 1.0, y_hi + 1.0, xtol=1e-14, rtol=1e-15)

    def log_conditional(w):
        return float(d.log_pdf_1d(w))

    def integrand(z):
        y = invert(z)
        w = y - x
        density = float(d.pdf_1d(w))
        if density <= 0:
            return 0.0
        # |φ′| 在 x±h 两侧相同，差分时相消
        score = (log_conditional(w + h) - log_conditional(w - h)) / (2 * h)
        jacobian = abs((transform(y + h) - transform(y - h)) / (2 * h))
        return density / jacobian * score * score

    z_lo, z_hi = (z_a, z_b) if increasing else (z_b, z_a)
    kinks = [transform(x + k) for k in d.kinks]
    return adaptive_quad(integrand, z_lo, z_hi, points=kinks, epsabs=1e-9, epsrel=1e-9)

