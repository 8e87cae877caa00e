"""
查询与隐私机制

响应模型 y = f(x) + w：
- Query 描述 f 及其雅可比 F(x)
- Mechanism 把查询与最优噪声（或噪声族 x ↦ γ(·|x)）以及预算参数绑定
- respond 对一个数据库取值 x 产生一次加噪响应

最优噪声的选择：
- 有界支撑 + 恒等查询: 各坐标独立的 cos² 乘积
- 有界支撑 + 标量查询: cos²，与查询权重和非线性无关
- 有界支撑 + 非均匀权重: 倾斜 cos² 族
- 无界支撑 + 线性查询: 高斯，Σ 由 (CCᵀ)^{1/2} 决定
- ε-差分隐私基线: 拉普拉斯，b = Δ/ε
"""

import itertools
import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .densities import (
    CosSqDensity, GaussianDensity, Interval, LaplaceDensity, ProductCosSqDensity,
    density_from_config, quality, sample, tilted_new, weight_by_name,
)
from .exceptions import (
    ConfigError, DimensionMismatch, DomainViolation, InvalidParameter, NotScalar, SupportViolation, ZeroQuery,
)
from .fisher import FisherReport, fisher_matrix
from .matcore import as_matrix, moore_penrose_pinv, psd_sqrt
from .serializers import MechanismConfigSerializer, QueryConfigSerializer, validated

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12


# ========== 查询 ==========

class Query:
    """数据库到响应的映射 f: ℝⁿ → ℝᵐ"""

    kind = 'abstract'

    def __init__(self, n, m):
        if n < 1:
            raise InvalidParameter('查询的输入维数必须 ≥ 1', n=n)
        self.n = int(n)
        self.m = int(m)

    def _check(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n:
            raise DimensionMismatch(
                f'查询需要 {self.n} 维输入，得到 {x.shape[0]} 维',
                expected=self.n, got=int(x.shape[0]),
            )
        return x

    def evaluate(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def matrix(self):
        """线性查询的矩阵 C；非线性查询返回 None"""
        return None

    def summary(self):
        return {'type': self.kind, 'n': self.n}


class IdentityQuery(Query):
    """恒等查询 f(x) = x"""

    kind = 'identity'

    def __init__(self, n):
        super().__init__(n, n)

    def evaluate(self, x):
        return self._check(x).copy()

    def jacobian(self, x):
        return np.eye(self.n)

    def matrix(self):
        return np.eye(self.n)


class WeightedAverageQuery(Query):
    """加权平均 f(x) = c·x，Σc = 1"""

    kind = 'average'

    def __init__(self, weights):
        c = np.asarray(weights, dtype=float).reshape(-1)
        if abs(c.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InvalidParameter('平均查询的权重之和必须为1', total=float(c.sum()))
        super().__init__(c.shape[0], 1)
        self.weights = c

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    def evaluate(self, x):
        return np.array([self.weights @ self._check(x)])

    def jacobian(self, x):
        return self.weights.reshape(1, -1)

    def matrix(self):
        return self.weights.reshape(1, -1)

    def summary(self):
        return {'type': self.kind, 'n': self.n, 'weights': self.weights.tolist()}


class VarianceQuery(Query):
    """样本方差 f(x) = Σ(xᵢ - x̄)²/(n - 1)"""

    kind = 'variance'

    def __init__(self, n):
        if n < 2:
            raise InvalidParameter('方差查询至少需要2个条目', n=n)
        super().__init__(n, 1)

    def evaluate(self, x):
        x = self._check(x)
        centered = x - x.mean()
        return np.array([centered @ centered / (self.n - 1)])

    def jacobian(self, x):
        x = self._check(x)
        return (2.0 * (x - x.mean()) / (self.n - 1)).reshape(1, -1)


class LinearQuery(Query):
    """线性查询 f(x) = Cx，C 行满秩"""

    kind = 'linear'

    def __init__(self, matrix):
        c = as_matrix(matrix, 'C')
        if not np.any(c):
            raise ZeroQuery('查询矩阵 C 为零')
        moore_penrose_pinv(c)  # 行满秩校验
        super().__init__(c.shape[1], c.shape[0])
        self.c = c

    def evaluate(self, x):
        return self.c @ self._check(x)

    def jacobian(self, x):
        return self.c.copy()

    def matrix(self):
        return self.c.copy()

    def summary(self):
        return {'type': self.kind, 'n': self.n, 'matrix': self.c.tolist()}


class ScalarNonlinearQuery(Query):
    """标量非线性查询，需同时给出梯度"""

    kind = 'scalar_nonlinear'

    def __init__(self, n, func, gradient, name='nonlinear'):
        super().__init__(n, 1)
        self.func = func
        self.gradient = gradient
        self.name = name

    def evaluate(self, x):
        return np.array([float(self.func(self._check(x)))])

    def jacobian(self, x):
        return np.asarray(self.gradient(self._check(x)), dtype=float).reshape(1, self.n)

    def summary(self):
        return {'type': self.kind, 'n': self.n, 'name': self.name}


def query_from_config(config, n=None):
    """
    从 JSON 配置构造查询

    参数:
        config: {"type": ..., "weights"?: [...], "matrix"?: [[...]], "n"?: int}
        n: 数据库条目数，配置未给出 n 时使用
    """
    data = validated(QueryConfigSerializer, config)
    kind = data['type']
    size = data.get('n') or n
    if kind == 'linear':
        return LinearQuery(data['matrix'])
    if kind == 'average' and data.get('weights'):
        return WeightedAverageQuery(data['weights'])
    if size is None:
        raise InvalidParameter(f'{kind} 查询需要条目数 n')
    if kind == 'identity':
        return IdentityQuery(size)
    if kind == 'average':
        return WeightedAverageQuery.uniform(size)
    return VarianceQuery(size)


# ========== 预算 ==========

@dataclass(frozen=True)
class Bounded:
    """噪声支撑 W = support"""

    support: Interval
    kind = 'bounded'

    def to_config(self):
        return {'kind': self.kind, 'support': self.support.to_list()}


@dataclass(frozen=True)
class OutputSet:
    """响应必须落在输出集合 Y = support 内"""

    support: Interval
    kind = 'output_set'

    def to_config(self):
        return {'kind': self.kind, 'support': self.support.to_list()}


@dataclass(frozen=True)
class Rho:
    """隐私与质量的权衡系数 ρ > 0"""

    rho: float
    kind = 'rho'

    def to_config(self):
        return {'kind': self.kind, 'rho': self.rho}


@dataclass(frozen=True)
class Theta:
    """质量损失上界 ϑ > 0"""

    theta: float
    kind = 'theta'

    def to_config(self):
        return {'kind': self.kind, 'theta': self.theta}


@dataclass(frozen=True)
class Epsilon:
    """ε-差分隐私，entry_domain 为每个条目的取值域"""

    epsilon: float
    entry_domain: Interval
    kind = 'epsilon'

    def to_config(self):
        return {'kind': self.kind, 'epsilon': self.epsilon, 'entry_domain': self.entry_domain.to_list()}


def budget_from_config(data):
    kind = data['kind']
    if kind == 'bounded':
        return Bounded(Interval(*data['support']))
    if kind == 'output_set':
        return OutputSet(Interval(*data['support']))
    if kind == 'rho':
        return Rho(data['rho'])
    if kind == 'theta':
        return Theta(data['theta'])
    return Epsilon(data['epsilon'], Interval(*data['entry_domain']))


# ========== 噪声族 ==========

class NoiseFamily:
    """依赖 x（或 f(x)）的噪声族"""

    bounded = True

    def at(self, x, fx):
        raise NotImplementedError

    def to_config(self):
        raise NotImplementedError


class TiltedFamily(NoiseFamily):
    """非均匀权重下的倾斜 cos² 族 x ↦ tilted_new(support, weight, x)"""

    def __init__(self, support, weight):
        self.support = support
        self.weight = weight

    def __call__(self, x):
        return tilted_new(self.support, self.weight, float(x))

    def at(self, x, fx):
        return self(np.asarray(x, dtype=float).reshape(-1)[0])

    def to_config(self):
        return {'kind': 'tilted_cos_sq', 'support': self.support.to_list(), 'weight': self.weight.name}


class OutputSetFamily(NoiseFamily):
    """
    输出集合约束：噪声支撑为 Y - f(x)

    响应 y = f(x) + w 总落在 Y 内。
    """

    def __init__(self, output_set):
        self.output_set = output_set

    def at(self, x, fx):
        shift = float(np.asarray(fx).reshape(-1)[0])
        return CosSqDensity(Interval(self.output_set.lo - shift, self.output_set.hi - shift))

    def to_config(self):
        return {'kind': 'cos_sq', 'output_set': self.output_set.to_list()}


# ========== 机制 ==========

@dataclass(frozen=True, eq=False)
class Mechanism:
    """
    隐私机制

    mechanism_id: 标识
    query: 查询
    noise: 噪声密度，或 NoiseFamily
    budget: Bounded / OutputSet / Rho / Theta / Epsilon
    domain: 每个条目的取值域（None 表示不限制）
    """

    mechanism_id: str
    query: Query
    noise: object
    budget: object
    domain: Interval | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def is_family(self):
        return isinstance(self.noise, NoiseFamily)

    @property
    def bounded(self):
        return isinstance(self.budget, (Bounded, OutputSet))

    def noise_at(self, x, fx=None):
        """x 处实际使用的噪声密度"""
        if not self.is_family:
            return self.noise
        if fx is None:
            fx = self.query.evaluate(x)
        return self.noise.at(x, fx)

    def representative_x(self):
        if self.domain is not None:
            return np.full(self.query.n, self.domain.midpoint)
        return np.zeros(self.query.n)

    def summary(self):
        noise = self.noise.to_config()
        return {
            'mechanism_id': self.mechanism_id,
            'query': self.query.summary(),
            'noise': noise,
            'budget': self.budget.to_config(),
        }


@dataclass
class Response:
    """一次加噪响应"""

    value: np.ndarray
    mechanism_id: str
    timestamp: int

    def to_dict(self):
        return {'value': self.value.tolist(), 'mechanism': self.mechanism_id, 'timestamp': self.timestamp}


_counter = itertools.count(1)
_counter_lock = threading.Lock()


def next_timestamp():
    with _counter_lock:
        return next(_counter)


def _default_id(prefix, query):
    return f'{prefix}-{query.kind}-{query.n}'


def optimal_bounded_identity(n, support, mechanism_id=None):
    """
    有界支撑下恒等查询的最优机制

    参数:
        n: 条目数
        support: 每个坐标的噪声支撑

    返回:
        n=1 时噪声为 CosSqDensity，否则为 n 个相同因子的 ProductCosSqDensity
    """
    support = support if isinstance(support, Interval) else Interval(*support)
    query = IdentityQuery(n)
    noise = CosSqDensity(support) if n == 1 else ProductCosSqDensity([support] * n)
    return Mechanism(mechanism_id or _default_id('bounded', query), query, noise, Bounded(support))


def _vanishes(query):
    """函数值和梯度在几个固定取样点上都为零"""
    points = [np.zeros(query.n), np.ones(query.n), np.linspace(-1.0, 2.0, query.n)]
    for x in points:
        try:
            if np.any(query.evaluate(x)) or np.any(query.jacobian(x)):
                return False
        except (ArithmeticError, ValueError):
            # 取样点不在函数定义域内
            return False
    return True


def optimal_bounded_scalar(query, support, mechanism_id=None):
    """
    有界支撑下标量查询的最优机制

    参数:
        query: 标量查询（平均、1×n 线性、方差或其他非线性查询），也可以直接给 1×n 矩阵
        support: 噪声支撑

    返回:
        噪声为 CosSqDensity(support)，与查询权重和非线性无关
    """
    if not isinstance(query, Query):
        query = LinearQuery(query)
    if query.m != 1:
        raise NotScalar('optimal_bounded_scalar 需要标量查询', m=query.m)
    matrix = query.matrix()
    if matrix is not None and not np.any(matrix):
        raise ZeroQuery('查询矩阵 C 为零')
    if matrix is None and _vanishes(query):
        raise InvalidParameter('非线性查询在取样点上恒为零', name=getattr(query, 'name', query.kind))
    support = support if isinstance(support, Interval) else Interval(*support)
    return Mechanism(
        mechanism_id or _default_id('bounded', query), query, CosSqDensity(support), Bounded(support),
    )


def optimal_bounded_weighted(support, weight, mechanism_id=None):
    """
    非均匀权重 p(x) 下标量恒等查询的最优机制

    返回:
        噪声为 TiltedFamily；条目取值域为 weight.x_domain
    """
    support = support if isinstance(support, Interval) else Interval(*support)
    query = IdentityQuery(1)
    return Mechanism(
        mechanism_id or f'bounded-weighted-{weight.name}',
        query, TiltedFamily(support, weight), Bounded(support),
        domain=weight.x_domain, metadata={'weight': weight.name},
    )


def optimal_bounded_output_set(query, output_set, mechanism_id=None):
    """
    输出集合约束下的机制：噪声支撑随 f(x) 平移，使响应落在 Y 内
    """
    if query.m != 1:
        raise NotScalar('输出集合约束只支持标量查询', m=query.m)
    output_set = output_set if isinstance(output_set, Interval) else Interval(*output_set)
    return Mechanism(
        mechanism_id or _default_id('output-set', query),
        query, OutputSetFamily(output_set), OutputSet(output_set),
    )


def _linear_query(query_or_matrix):
    if isinstance(query_or_matrix, Query):
        if query_or_matrix.matrix() is None:
            raise InvalidParameter('该预算需要线性查询', query=query_or_matrix.kind)
        return query_or_matrix
    return LinearQuery(query_or_matrix)


def optimal_unbounded_linear(c, budget, mechanism_id=None):
    """
    无界支撑下线性查询的最优高斯机制

    参数:
        c: 行满秩矩阵 C，或线性查询
        budget: Rho(ρ) 时 Σ = 2(CCᵀ)^{1/2}/√ρ；Theta(ϑ) 时 Σ = ϑ(CCᵀ)^{1/2}/Tr((CCᵀ)^{1/2})

    返回:
        Mechanism，Theta 预算下 Tr(Σ) = ϑ
    """
    query = _linear_query(c)
    matrix = query.matrix()
    if not np.any(matrix):
        raise ZeroQuery('查询矩阵 C 为零')
    moore_penrose_pinv(matrix)
    root = psd_sqrt(matrix @ matrix.T)
    if isinstance(budget, Rho):
        sigma = 2.0 * root / math.sqrt(budget.rho)
        prefix = 'gaussian-rho'
    elif isinstance(budget, Theta):
        sigma = budget.theta * root / np.trace(root)
        prefix = 'gaussian-theta'
    else:
        raise InvalidParameter('无界线性机制只接受 Rho 或 Theta 预算', budget=type(budget).__name__)
    return Mechanism(mechanism_id or _default_id(prefix, query), query, GaussianDensity(sigma), budget)


def sensitivity(c, entry_domain):
    """标量线性查询的敏感度 Δ = (x̄ - x̲)·maxᵢ|cᵢ|"""
    c = as_matrix(c, 'C')
    if c.shape[0] != 1:
        raise NotScalar('敏感度只对 1×n 查询定义', rows=int(c.shape[0]))
    return entry_domain.length * float(np.max(np.abs(c)))


def laplace_dp(c, entry_domain, epsilon, mechanism_id=None):
    """
    ε-差分隐私的拉普拉斯机制

    参数:
        c: 1×n 查询矩阵（或线性查询）
        entry_domain: 每个条目的取值域 [x̲, x̄]
        epsilon: ε > 0

    返回:
        拉普拉斯噪声，b = Δ/ε
    """
    if not (epsilon > 0):
        raise InvalidParameter('ε 必须为正', epsilon=epsilon)
    entry_domain = entry_domain if isinstance(entry_domain, Interval) else Interval(*entry_domain)
    query = _linear_query(c)
    delta = sensitivity(query.matrix(), entry_domain)
    scale = delta / epsilon
    return Mechanism(
        mechanism_id or _default_id('laplace', query), query, LaplaceDensity(scale),
        Epsilon(float(epsilon), entry_domain), domain=entry_domain,
    )


def laplace_epsilon_for_quality(c, entry_domain, theta):
    """质量损失为 ϑ 的拉普拉斯机制对应的 ε = Δ/√(ϑ/2)"""
    if not theta > 0:
        raise InvalidParameter('ϑ 必须为正', theta=theta)
    return sensitivity(c, entry_domain) / math.sqrt(theta / 2.0)


def respond(mechanism, x, rng):
    """
    产生一次响应 y = f(x) + w

    参数:
        mechanism: Mechanism
        x: 数据库取值（n 维）
        rng: numpy.random.Generator

    返回:
        Response；有界机制的响应保证落在 {f(x)} ⊕ W 内
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != mechanism.query.n:
        raise DimensionMismatch(
            f'机制需要 {mechanism.query.n} 维输入，得到 {x.shape[0]} 维',
            expected=mechanism.query.n, got=int(x.shape[0]),
        )
    if mechanism.domain is not None:
        outside = np.flatnonzero((x < mechanism.domain.lo) | (x > mechanism.domain.hi))
        if outside.size:
            raise DomainViolation('数据库取值超出声明的取值域', index=int(outside[0]))

    fx = mechanism.query.evaluate(x)
    noise = mechanism.noise_at(x, fx)
    w = sample(noise, rng, 1)[0]
    y = fx + w
    if mechanism.bounded:
        supports = noise.supports()
        if supports is None:
            raise SupportViolation('有界机制使用了无界噪声', noise=noise.kind)
        for i, support in enumerate(supports):
            if not support.contains(y[i] - fx[i], tol=1e-12):
                raise SupportViolation('响应超出 {f(x)} ⊕ W', coordinate=i)
    return Response(value=y, mechanism_id=mechanism.mechanism_id, timestamp=next_timestamp())


@dataclass
class MechanismReport:
    """机制在代表点处的 Fisher 报告与质量损失 Q"""

    mechanism_id: str
    x: np.ndarray
    fisher: FisherReport
    quality: float
    grid: list = field(default_factory=list)

    def to_dict(self):
        return {
            'mechanism_id': self.mechanism_id,
            'x': self.x.tolist(),
            'quality': self.quality,
            'fisher': {k: v for k, v in self.fisher.to_dict().items() if k != 'matrix'},
            'grid': self.grid,
        }


def mechanism_report(mechanism, x=None, grid_points=9):
    """
    机制的 (Fisher报告, Q)

    参数:
        mechanism: Mechanism
        x: 代表点，默认取值域中点
        grid_points: 噪声族机制在取值域上额外给出的网格报告点数

    返回:
        MechanismReport
    """
    x = mechanism.representative_x() if x is None else np.asarray(x, dtype=float).reshape(-1)
    noise = mechanism.noise_at(x)
    report = fisher_matrix(noise, mechanism.query.jacobian(x))
    result = MechanismReport(mechanism.mechanism_id, x, report, quality(noise))

    if mechanism.is_family and mechanism.domain is not None:
        for xi in np.linspace(mechanism.domain.lo, mechanism.domain.hi, grid_points):
            point = np.full(mechanism.query.n, xi)
            density = mechanism.noise_at(point)
            point_report = fisher_matrix(density, mechanism.query.jacobian(point))
            result.grid.append({
                'x': float(xi),
                'trace': point_report.trace,
                'trace_inverse': point_report.trace_inverse,
                'quality': quality(density),
            })
    return result


def build_mechanism(config, query=None, mechanism_id=None):
    """
    从 JSON 配置构造机制

    参数:
        config: {"query"?: {...}, "noise"?: {...}, "budget": {...}}
        query: 配置中没有 query 时使用的查询
        mechanism_id: 机制标识

    返回:
        Mechanism。给出 noise 时直接使用该噪声，否则按预算选择最优噪声。
    """
    data = validated(MechanismConfigSerializer, config)
    if data.get('query') is not None:
        query = query_from_config(config['query'], n=query.n if query is not None else None)
    if query is None:
        raise InvalidParameter('机制配置需要查询')
    budget = budget_from_config(data['budget'])

    if data.get('noise') is not None:
        noise = density_from_config(config['noise'])
        if noise.dim != query.m:
            raise ConfigError(
                f'噪声维度 {noise.dim} 与查询输出维度 {query.m} 不一致', noise_dim=noise.dim, m=query.m,
            )
        if isinstance(budget, (Bounded, OutputSet)) and noise.supports() is None:
            raise ConfigError(f'{budget.kind} 预算需要有界噪声', noise=noise.kind)
        domain = budget.entry_domain if isinstance(budget, Epsilon) else None
        return Mechanism(mechanism_id or _default_id('custom', query), query, noise, budget, domain=domain)

    if isinstance(budget, Bounded):
        weight_name = data['budget'].get('weight')
        if weight_name and weight_name != 'uniform':
            if not (query.kind == 'identity' and query.n == 1):
                raise InvalidParameter('非均匀权重只支持标量恒等查询', query=query.kind)
            return optimal_bounded_weighted(budget.support, weight_by_name(weight_name), mechanism_id)
        if query.kind == 'identity':
            return optimal_bounded_identity(query.n, budget.support, mechanism_id)
        return optimal_bounded_scalar(query, budget.support, mechanism_id)
    if isinstance(budget, OutputSet):
        return optimal_bounded_output_set(query, budget.support, mechanism_id)
    if isinstance(budget, (Rho, Theta)):
        return optimal_unbounded_linear(query, budget, mechanism_id)
    return laplace_dp(query, budget.entry_domain, budget.epsilon, mechanism_id)


def compatible(mechanism, query):
    """机制能否回答该查询（类型、维数和参数一致）"""
    mine = mechanism.query
    if mine.kind != query.kind or mine.n != query.n:
        return False
    a, b = mine.matrix(), query.matrix()
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.allclose(a, b, atol=1e-12))

