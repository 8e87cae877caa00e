"""
对称/半正定矩阵工具

其他模块用到的 (CCᵀ)^{1/2}、(ΨᵀΨ)^{-1/2}、伪逆等都从这里计算。
所有输入都是对称的小矩阵，统一使用对称特征值分解（numpy.linalg.eigh）。
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidMatrix, NonSymmetric, NotPsd, RankDeficient, Singular

SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10
SINGULAR_TOLERANCE = 1e-10


def as_matrix(m, name='matrix'):
    """
    把输入转换为二维浮点数组并校验

    参数:
        m: 嵌套列表、numpy数组或标量
        name: 错误信息中使用的名称

    返回:
        rows × cols 的 float64 数组（rows, cols ≥ 1，元素有限）
    """
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidMatrix(f'{name} 必须是非空二维矩阵', shape=list(arr.shape))
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f'{name} 含有非有限元素')
    return arr


@dataclass(frozen=True)
class SpectralDecomposition:
    """
    谱分解结果

    eigenvalues 按降序排列；eigenvectors 的列是对应的单位正交特征向量。
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        """返回 V·diag(λ)·Vᵀ"""
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def apply(self, func):
        """对特征值逐个作用 func 后重组矩阵"""
        v = self.eigenvectors
        return (v * func(self.eigenvalues)) @ v.T

    @property
    def min_eigenvalue(self):
        return float(self.eigenvalues[-1])


def spectral_decompose(m):
    """
    对称矩阵的特征值分解

    参数:
        m: 对称矩阵（相对非对称度不超过 1e-12）

    返回:
        SpectralDecomposition，特征值降序
    """
    arr = as_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        raise NonSymmetric('矩阵不是方阵', shape=list(arr.shape))
    scale = np.linalg.norm(arr, 'fro')
    asymmetry = np.linalg.norm(arr - arr.T, 'fro')
    if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1e-300):
        raise NonSymmetric('矩阵不对称', asymmetry=float(asymmetry))

    sym = (arr + arr.T) / 2
    values, vectors = np.linalg.eigh(sym)
    order = np.argsort(values)[::-1]
    return SpectralDecomposition(
        eigenvalues=values[order],
        eigenvectors=vectors[:, order],
    )


def _clamped(decomp):
    if decomp.min_eigenvalue < -PSD_TOLERANCE:
        raise NotPsd('矩阵不是半正定的', min_eigenvalue=decomp.min_eigenvalue)
    return np.clip(decomp.eigenvalues, 0.0, None)


def psd_sqrt(m):
    """
    半正定矩阵的对称平方根

    参数:
        m: 半正定矩阵（最小特征值 ≥ -1e-10，更小的负值截断为0）

    返回:
        对称半正定矩阵 S，满足 S·S = m
    """
    decomp = spectral_decompose(m)
    values = _clamped(decomp)
    return decomp.apply(lambda _: np.sqrt(values))


def psd_inv_sqrt(m):
    """
    正定矩阵的逆平方根 m^{-1/2}

    参数:
        m: 正定矩阵（最小特征值 > 1e-10）

    返回:
        对称矩阵 R，满足 R·psd_sqrt(m) = I
    """
    decomp = spectral_decompose(m)
    if decomp.min_eigenvalue <= SINGULAR_TOLERANCE:
        raise Singular('矩阵奇异，无法求逆平方根', min_eigenvalue=decomp.min_eigenvalue)
    return decomp.apply(lambda lam: 1.0 / np.sqrt(lam))


def psd_inverse(m):
    """正定矩阵的逆（经谱分解计算）"""
    decomp = spectral_decompose(m)
    if decomp.min_eigenvalue <= SINGULAR_TOLERANCE:
        raise Singular('矩阵奇异，无法求逆', min_eigenvalue=decomp.min_eigenvalue)
    return decomp.apply(lambda lam: 1.0 / lam)


def moore_penrose_pinv(c):
    """
    行满秩矩阵的Moore–Penrose伪逆 Cᵀ(CCᵀ)⁻¹

    参数:
        c: m × n 矩阵，CCᵀ 可逆

    返回:
        n × m 矩阵 C†，满足 C·C† = I_m
    """
    arr = as_matrix(c, 'C')
    gram = arr @ arr.T
    try:
        gram_inv = psd_inverse(gram)
    except Singular as exc:
        raise RankDeficient('C 不是行满秩的', **exc.context) from exc
    return arr.T @ gram_inv
