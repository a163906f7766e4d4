"""明文参照聚合器：逐坐标截尾和、截尾均值、中位数与均值"""
import numpy as np

from hagg.errors import ParameterError


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ParameterError(f"输入需要是非空的 n x D 矩阵，收到形状 {arr.shape}")
    return arr


def _check_trim(n: int, f: int):
    if f < 0 or 2 * f >= n:
        raise ParameterError(f"需要 0 <= f < n/2，收到 n={n}, f={f}")


def cwts(x, f: int) -> np.ndarray:
    """逐坐标排序后，去掉最小与最大各 f 个，其余求和"""
    arr = _as_matrix(x)
    n = arr.shape[0]
    _check_trim(n, f)
    return np.sort(arr, axis=0, kind="stable")[f:n - f].sum(axis=0)


def cwtm(x, f: int) -> np.ndarray:
    arr = _as_matrix(x)
    return cwts(arr, f) / (arr.shape[0] - 2 * f)


def cwmed(x) -> np.ndarray:
    """排序后下标为 n//2 的次序统计量"""
    arr = _as_matrix(x)
    return np.sort(arr, axis=0, kind="stable")[arr.shape[0] // 2]


def mean(x) -> np.ndarray:
    return _as_matrix(x).mean(axis=0)
