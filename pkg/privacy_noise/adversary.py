"""
攻击者估计器与蒙特卡洛CRB校验

攻击者知道机制（查询、噪声分布和预算），只不知道 x。
mc_crb_check 反复产生响应、运行估计器，检查均方误差不低于对应的界：
- 恒等查询 + 无偏估计: Tr(I⁻¹)
- 线性查询 + 最小二乘估计: ‖(I - C†C)x‖² + Tr(I_w⁻¹(CCᵀ)⁻¹)
- LTI 平滑估计: Tr(I⁻¹)，I = Σ⁻¹
"""

import logging
import math
from dataclasses import dataclass, field
from functools import singledispatch

import numpy as np

from .conf import toolkit_setting
from .dynamic import LtiPrivacyModel, sample_trajectory_noise, smoothing_estimate
from .exceptions import DimensionMismatch, InvalidParameter
from .fisher import crb_least_squares, crb_unbiased, fisher_matrix, noise_fisher_matrix
from .matcore import as_matrix, moore_penrose_pinv, psd_inverse
from .mechanisms import Mechanism

logger = logging.getLogger(__name__)

CHUNK = 50_000


@dataclass
class McResult:
    """
    蒙特卡洛结果

    passed ⇔ mse + k·stderr ≥ bound（k 为配置的 MC_SLACK_SIGMAS，默认3）
    """

    mechanism_id: str
    estimator: str
    trials: int
    mse: float
    stderr: float
    bias_norm: float
    bias_stderr: float
    bound: float
    passed: bool
    coordinate_mse: list = field(default_factory=list)

    CSV_FIELDS = ('mechanism_id', 'estimator', 'trials', 'mse', 'stderr', 'bound', 'passed')

    def to_row(self):
        return [getattr(self, name) for name in self.CSV_FIELDS]

    def to_dict(self):
        return {
            'mechanism_id': self.mechanism_id,
            'estimator': self.estimator,
            'trials': self.trials,
            'mse': self.mse,
            'stderr': self.stderr,
            'bias_norm': self.bias_norm,
            'bias_stderr': self.bias_stderr,
            'bound': self.bound,
            'passed': self.passed,
            'coordinate_mse': self.coordinate_mse,
        }


def unbiased_identity_estimate(y, noise_mean):
    """恒等查询的无偏估计 x̂ = y - E{w}"""
    y = np.asarray(y, dtype=float)
    noise_mean = np.asarray(noise_mean, dtype=float).reshape(-1)
    if y.shape[-1] != noise_mean.shape[0]:
        raise DimensionMismatch('响应与噪声均值维数不一致', y=int(y.shape[-1]), mean=int(noise_mean.shape[0]))
    return y - noise_mean


def ls_estimate(c, y):
    """
    最小二乘估计 x̂ = C†y

    m < n 时有偏：E{x̂} = C†Cx
    """
    pinv = moore_penrose_pinv(c)
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != pinv.shape[1]:
        raise DimensionMismatch('响应维数与 C 的行数不一致', y=int(y.shape[-1]), m=int(pinv.shape[1]))
    return y @ pinv.T


class IdentityEstimator:
    """恒等查询机制的无偏估计"""

    name = 'identity'

    def estimate(self, mechanism, y):
        mean, _ = mechanism.noise.moments()
        return unbiased_identity_estimate(y, mean)

    def bound(self, mechanism, x):
        if mechanism.query.kind != 'identity' or mechanism.is_family:
            raise InvalidParameter('无偏恒等估计只适用于噪声与 x 无关的恒等查询机制')
        return crb_unbiased(fisher_matrix(mechanism.noise, mechanism.query.jacobian(x)))


class LeastSquaresEstimator:
    """线性查询机制的最小二乘估计（先减去已知的噪声均值）"""

    name = 'least_squares'

    def estimate(self, mechanism, y):
        mean, _ = mechanism.noise.moments()
        return ls_estimate(mechanism.query.matrix(), np.asarray(y) - mean)

    def bound(self, mechanism, x):
        c = mechanism.query.matrix()
        if c is None or mechanism.is_family:
            raise InvalidParameter('最小二乘估计需要线性查询和与 x 无关的噪声')
        return crb_least_squares(c, noise_fisher_matrix(mechanism.noise), x)


class SmoothingEstimator:
    """LTI 模型的平滑估计 x̂₀ = Ψ†y_T"""

    name = 'smoothing'

    def estimate(self, model, y):
        return smoothing_estimate(model, y)

    def bound(self, model, x):
        return float(np.trace(psd_inverse(model.fisher())))


ESTIMATORS = {
    'identity': IdentityEstimator,
    'least_squares': LeastSquaresEstimator,
    'smoothing': SmoothingEstimator,
}


def _summarize(mechanism_id, estimator, bound, x, estimates_chunks):
    errors = np.vstack(estimates_chunks) - x
    squared = np.sum(errors * errors, axis=1)
    trials = squared.shape[0]
    mse = float(np.mean(squared))
    stderr = float(np.std(squared, ddof=1) / math.sqrt(trials))
    bias = errors.mean(axis=0)
    bias_stderr = float(math.sqrt(np.sum(errors.var(axis=0, ddof=1)) / trials))
    passed = mse + toolkit_setting('MC_SLACK_SIGMAS') * stderr >= bound
    result = McResult(
        mechanism_id=mechanism_id,
        estimator=estimator.name,
        trials=trials,
        mse=mse,
        stderr=stderr,
        bias_norm=float(np.linalg.norm(bias)),
        bias_stderr=bias_stderr,
        bound=float(bound),
        passed=bool(passed),
        coordinate_mse=np.mean(errors * errors, axis=0).tolist(),
    )
    log = logger.info if passed else logger.warning
    log('mc %s/%s: mse=%.6g ± %.2g, bound=%.6g, passed=%s',
        mechanism_id, estimator.name, mse, stderr, bound, passed)
    return result


def _check_trials(trials):
    minimum = toolkit_setting('MC_MIN_TRIALS')
    if trials < minimum:
        raise InvalidParameter(f'蒙特卡洛试验次数至少为 {minimum}', trials=trials)
    return int(trials)


def _chunks(trials):
    done = 0
    while done < trials:
        size = min(CHUNK, trials - done)
        yield size
        done += size


@singledispatch
def mc_crb_check(mechanism, estimator, x, trials, rng):
    """
    蒙特卡洛验证估计器的均方误差不低于CRB

    参数:
        mechanism: Mechanism 或 LtiPrivacyModel
        estimator: IdentityEstimator / LeastSquaresEstimator / SmoothingEstimator
        x: 真实取值（LTI 模型为 x₀）
        trials: 试验次数（≥ 10⁴）
        rng: 随机数生成器

    返回:
        McResult
    """
    raise InvalidParameter(f'不支持的机制类型: {type(mechanism).__name__}')


@mc_crb_check.register
def _(mechanism: Mechanism, estimator, x, trials, rng):
    trials = _check_trials(trials)
    x = np.asarray(x, dtype=float).reshape(-1)
    bound = estimator.bound(mechanism, x)
    fx = mechanism.query.evaluate(x)
    chunks = []
    for size in _chunks(trials):
        y = fx + mechanism.noise.sample(rng, size)
        chunks.append(estimator.estimate(mechanism, y))
    return _summarize(mechanism.mechanism_id, estimator, bound, x, chunks)


@mc_crb_check.register
def _(model: LtiPrivacyModel, estimator, x, trials, rng):
    trials = _check_trials(trials)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.n:
        raise DimensionMismatch('x0 维数不正确', expected=model.n, got=int(x.shape[0]))
    bound = estimator.bound(model, x)
    clean = model.psi @ x
    chunks = []
    for size in _chunks(trials):
        y = clean + sample_trajectory_noise(model, rng, size)
        chunks.append(estimator.estimate(model, y))
    return _summarize(model.model_id, estimator, bound, x, chunks)


def worst_case_entry_check(result, report):
    """最坏单条目界：minᵢ MSEᵢ + k·stderr ≥ 1/Tr(I)"""
    slack = toolkit_setting('MC_SLACK_SIGMAS') * result.stderr
    return min(result.coordinate_mse) + slack >= report.worst_case_entry_bound


def projection_residual(c, x):
    """‖(I - C†C)x‖²"""
    c = as_matrix(c, 'C')
    x = np.asarray(x, dtype=float).reshape(-1)
    residual = x - moore_penrose_pinv(c) @ (c @ x)
    return float(residual @ residual)
