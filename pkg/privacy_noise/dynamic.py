"""
线性时不变系统的状态隐私

系统 x[k+1] = A x[k]，观测 y[k] = C x[k]，k = 0..T。
响应轨迹 y_T = Ψ_T x₀ + w_T，Ψ_T 由 C, CA, ..., CA^T 逐块堆叠。
机制只在初始条件上加一次高斯噪声 z ~ N(0, Σ)，Σ = 2(Ψ_TᵀΨ_T)^{-1/2}/√ρ，
因此 w_T = Ψ_T z 在时间上是相关的，不是独立同分布的。
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .densities import GaussianDensity
from .exceptions import (
    DimensionMismatch, HorizonTooShort, InvalidParameter, RankDeficient, Singular,
    SingularGramian,
)
from .matcore import as_matrix, moore_penrose_pinv, psd_inv_sqrt, psd_inverse, psd_sqrt, spectral_decompose
from .mechanisms import Response, next_timestamp

logger = logging.getLogger(__name__)

GRAMIAN_TOLERANCE = 1e-10

TRAFFIC_A = np.array([[1.0, 1.0], [0.0, 1.0]])
TRAFFIC_C = np.array([[1.0, 0.0]])


def _check_system(a, c, horizon):
    a = as_matrix(a, 'A')
    c = as_matrix(c, 'C')
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch('A 必须是方阵', shape=list(a.shape))
    if c.shape[1] != a.shape[0]:
        raise DimensionMismatch('C 的列数必须等于 A 的阶数', c_cols=int(c.shape[1]), n=int(a.shape[0]))
    if int(horizon) != horizon or horizon < 0:
        raise InvalidParameter('时域 T 必须是非负整数', horizon=horizon)
    return a, c, int(horizon)


def build_psi(a, c, horizon):
    """
    可观测性矩阵 Ψ_T = [C; CA; ...; CA^T]

    参数:
        a: n×n 状态矩阵
        c: m×n 观测矩阵
        horizon: 时域 T ≥ 0

    返回:
        (T+1)m × n 矩阵
    """
    a, c, horizon = _check_system(a, c, horizon)
    blocks = []
    block = c
    for _ in range(horizon + 1):
        blocks.append(block)
        block = block @ a
    return np.vstack(blocks)


def gramian_sum(a, c, horizon):
    """逐项累加 Σ_k (A^k)ᵀCᵀCA^k，作为 ΨᵀΨ 的独立计算"""
    a, c, horizon = _check_system(a, c, horizon)
    total = np.zeros((a.shape[0], a.shape[0]))
    power = np.eye(a.shape[0])
    for _ in range(horizon + 1):
        total += power.T @ c.T @ c @ power
        power = power @ a
    return total


def check_gramian(a, c, horizon):
    """
    可观测性格拉姆矩阵 ΨᵀΨ 是否可逆

    (A, C) 可观测且 T ≥ n - 1 时必然可逆。

    返回:
        (是否可逆, 最小特征值)
    """
    psi = build_psi(a, c, horizon)
    smallest = spectral_decompose(psi.T @ psi).min_eigenvalue
    return smallest > GRAMIAN_TOLERANCE, smallest


@dataclass(frozen=True, eq=False)
class LtiPrivacyModel:
    """
    LTI 状态隐私模型

    sigma_z = 2·(ΨᵀΨ)^{-1/2}/√ρ
    """

    a: np.ndarray
    c: np.ndarray
    horizon: int
    psi: np.ndarray
    sigma_z: np.ndarray
    rho: float

    @property
    def model_id(self):
        return f'lti-T{self.horizon}-rho{self.rho:g}'

    @property
    def gramian(self):
        return self.psi.T @ self.psi

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.c.shape[0]

    def noise(self):
        """初始条件上的噪声 z ~ N(0, Σ)"""
        return GaussianDensity(self.sigma_z)

    def fisher(self):
        """轨迹 y_T 关于 x₀ 的Fisher矩阵；Ψ†y_T = x₀ + z 是充分统计量，I = Σ⁻¹"""
        return psd_inverse(self.sigma_z)

    def trajectory_covariance(self):
        """w_T 的协方差 ΨΣΨᵀ"""
        return self.psi @ self.sigma_z @ self.psi.T

    def quality(self):
        """E‖w_T‖² = Tr(ΨᵀΨΣ)"""
        return float(np.trace(self.gramian @ self.sigma_z))


def dynamic_mechanism(a, c, horizon, rho):
    """
    构造 LTI 状态隐私机制

    参数:
        a, c: 系统矩阵
        horizon: 时域 T
        rho: ρ > 0

    返回:
        LtiPrivacyModel；格拉姆矩阵奇异时抛出 SingularGramian
    """
    if not rho > 0:
        raise InvalidParameter('ρ 必须为正', rho=rho)
    a, c, horizon = _check_system(a, c, horizon)
    psi = build_psi(a, c, horizon)
    try:
        inv_sqrt = psd_inv_sqrt(psi.T @ psi)
    except Singular as exc:
        raise SingularGramian('可观测性格拉姆矩阵奇异', horizon=horizon, **exc.context) from exc
    sigma = 2.0 * inv_sqrt / math.sqrt(rho)
    return LtiPrivacyModel(a=a, c=c, horizon=horizon, psi=psi, sigma_z=sigma, rho=float(rho))


def simulate(model, x0, rng, z=None):
    """
    模拟一次响应轨迹 y[k] = CA^k x₀ + CA^k z

    参数:
        model: LtiPrivacyModel
        x0: 初始状态
        rng: 随机数生成器
        z: 指定的初始条件噪声（缺省时从 N(0, Σ) 抽取一次）

    返回:
        T+1 个 Response
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != model.n:
        raise DimensionMismatch('x0 维数不正确', expected=model.n, got=int(x0.shape[0]))
    if z is None:
        z = model.noise().sample(rng, 1)[0]
    stacked = model.psi @ (x0 + np.asarray(z, dtype=float).reshape(-1))
    blocks = stacked.reshape(model.horizon + 1, model.m)
    return [Response(value=block, mechanism_id=model.model_id, timestamp=next_timestamp()) for block in blocks]


def stack_responses(responses):
    """把逐时刻响应拼成 y_T"""
    return np.concatenate([r.value for r in responses])


def sample_trajectory_noise(model, rng, n):
    """
    批量抽取 w_T = Ψ z

    返回:
        (n, (T+1)m) 数组
    """
    z = rng.standard_normal((int(n), model.n)) @ psd_sqrt(model.sigma_z)
    return z @ model.psi.T


def smoothing_estimate(model, y_t):
    """
    平滑估计 x̂₀ = Ψ† y_T

    参数:
        y_t: (T+1)m 维轨迹，或 (k, (T+1)m) 批量

    返回:
        n 维估计，或 (k, n) 批量
    """
    try:
        left_inverse = moore_penrose_pinv(model.psi.T).T
    except RankDeficient as exc:
        raise SingularGramian('可观测性格拉姆矩阵奇异') from exc
    y = np.asarray(y_t, dtype=float)
    if y.shape[-1] != model.psi.shape[0]:
        raise DimensionMismatch('轨迹长度不正确', expected=int(model.psi.shape[0]), got=int(y.shape[-1]))
    return y @ left_inverse.T


def traffic_model(horizon, rho):
    """交通众包示例：位置-速度模型，只观测位置"""
    return dynamic_mechanism(TRAFFIC_A, TRAFFIC_C, horizon, rho)


@dataclass
class TrafficReport:
    """交通示例在时域 T 下的闭式与矩阵计算结果"""

    T: int
    rho: float
    delta: float
    q_closed: float
    q_matrix: float
    mse_closed: float
    mse_matrix: float

    FIELDS = ('T', 'rho', 'delta', 'q_closed', 'q_matrix', 'mse_closed', 'mse_matrix')

    def row(self):
        return [getattr(self, name) for name in self.FIELDS]

    def consistent(self, tol=1e-6):
        return (abs(self.q_closed - self.q_matrix) <= tol * abs(self.q_matrix)
                and abs(self.mse_closed - self.mse_matrix) <= tol * abs(self.mse_matrix))


def traffic_report(horizon, rho):
    """
    交通示例的 Q 与平滑估计 MSE

    Δ = 4T⁴ + 4T³ + 13T² - 12T + 36，格拉姆矩阵特征值 (T+1)(s ± √Δ)/12，
    s = 2T² + T + 6。闭式结果与矩阵计算交叉校验。

    参数:
        horizon: T > 2
        rho: ρ > 0
    """
    if horizon <= 2:
        raise HorizonTooShort('交通示例的闭式结果要求 T > 2', horizon=horizon)
    t = float(horizon)
    delta = 4 * t ** 4 + 4 * t ** 3 + 13 * t ** 2 - 12 * t + 36
    s = 2 * t ** 2 + t + 6
    root = math.sqrt(delta)
    upper = s + root
    # s² - Δ = 12T(T+2)，避免相减抵消
    lower = 12 * t * (t + 2) / upper
    q_closed = math.sqrt(t + 1) * (math.sqrt(lower) + math.sqrt(upper)) / math.sqrt(3 * rho)
    mse_closed = 4 * math.sqrt(3) / math.sqrt(rho) * (
        1 / math.sqrt((t + 1) * lower) + 1 / math.sqrt((t + 1) * upper)
    )

    model = traffic_model(horizon, rho)
    q_matrix = 2.0 * float(np.trace(psd_sqrt(model.gramian))) / math.sqrt(rho)
    mse_matrix = float(np.trace(model.sigma_z))
    report = TrafficReport(int(horizon), float(rho), delta, q_closed, q_matrix, mse_closed, mse_matrix)
    if not report.consistent():
        logger.warning('traffic T=%d: closed form and matrix computation disagree', horizon)
    return report


def traffic_sweep(horizons, rho):
    return [traffic_report(t, rho) for t in horizons]


def loglog_slope(xs, ys):
    """对数-对数坐标下的最小二乘斜率"""
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float)), 1)[0])


def traffic_scaling(t_max=64, rho=1.0):
    """
    在 [T_max/2, T_max] 上拟合 Q 与 MSE 的增长阶

    返回:
        {"q_slope", "mse_slope", "horizons"}
    """
    horizons = list(range(max(3, t_max // 2), t_max + 1))
    reports = traffic_sweep(horizons, rho)
    return {
        'horizons': [horizons[0], horizons[-1]],
        'q_slope': loglog_slope(horizons, [r.q_closed for r in reports]),
        'mse_slope': loglog_slope(horizons, [r.mse_closed for r in reports]),
    }
