"""拜占庭攻击：FOE、ALIE、标签翻转、Mimic，以及 τ 的贪心线性搜索"""
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from hagg.errors import ParameterError
from utils.logger import get_logger

logger = get_logger(__name__)

ATTACK_KINDS = ("NONE", "FOE", "ALIE", "LF", "MIMIC")
TAU_ATTACKS = ("FOE", "ALIE")
DEFAULT_TAU_GRID = tuple(float(t) for t in np.linspace(-10.0, 10.0, 41))

Aggregator = Callable[[np.ndarray], np.ndarray]
Postprocess = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "NONE"
    tau_grid: Tuple[float, ...] = DEFAULT_TAU_GRID
    rng_seed: int = 0

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ATTACK_KINDS:
            raise ParameterError(f"未知的攻击 {self.kind!r}，可选 {ATTACK_KINDS}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        if kind in TAU_ATTACKS and not self.tau_grid:
            raise ParameterError(f"{kind} 攻击需要非空的 τ 网格")


@dataclass(frozen=True)
class MimicState:
    """Mimic 的方向估计，每次更新后为单位向量"""
    direction: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, dimension: int, rng: np.random.Generator) -> "MimicState":
        direction = rng.standard_normal(dimension)
        return cls(direction / np.linalg.norm(direction), 0)


def _honest_matrix(honest) -> np.ndarray:
    arr = np.asarray(honest, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ParameterError("攻击至少需要一个诚实向量")
    return arr


def foe(honest, tau: float) -> np.ndarray:
    """(1 - τ) 乘以诚实均值"""
    return (1.0 - tau) * _honest_matrix(honest).mean(axis=0)


def alie(honest, tau: float) -> np.ndarray:
    """诚实均值加 τ 倍的逐坐标总体标准差"""
    arr = _honest_matrix(honest)
    return arr.mean(axis=0) + tau * arr.std(axis=0)


_CRAFTERS = {"FOE": foe, "ALIE": alie}


def optimize_tau(kind: str, honest, aggregator: Aggregator, tau_grid: Sequence[float],
                 n: int, f: int, postprocess: Optional[Postprocess] = None) -> float:
    """在网格上线性搜索，使聚合结果离诚实均值最远的 τ；并列时取最靠前的"""
    kind = kind.upper()
    if kind not in _CRAFTERS:
        raise ParameterError(f"{kind} 攻击没有 τ 参数")
    if not tau_grid:
        raise ParameterError("τ 网格不能为空")
    arr = _honest_matrix(honest)
    if arr.shape[0] + f != n:
        raise ParameterError(f"诚实向量 {arr.shape[0]} 个加上 f={f} 不等于 n={n}")

    center = arr.mean(axis=0)
    best_tau, best_distance = float(tau_grid[0]), -1.0
    for tau in tau_grid:
        attack = _CRAFTERS[kind](arr, tau)
        if postprocess is not None:
            attack = postprocess(attack)
        stacked = np.vstack([arr, np.tile(attack, (f, 1))])
        distance = float(np.linalg.norm(center - aggregator(stacked)))
        if distance > best_distance:
            best_tau, best_distance = float(tau), distance
    return best_tau


def labelflip(label, n_classes: int):
    """l 映射为 K-1-l，可作用于单个标签或标签数组"""
    labels = np.asarray(label)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ParameterError(f"标签超出 [0, {n_classes})")
    flipped = (n_classes - 1) - labels
    return int(flipped) if flipped.ndim == 0 else flipped


def mimic(honest, state: MimicState) -> Tuple[np.ndarray, MimicState]:
    """对中心化矩阵做一步幂迭代，再复制在该方向上偏离最大的诚实向量"""
    original = np.asarray(honest)
    arr = _honest_matrix(original)
    centered = arr - arr.mean(axis=0)
    z = centered.T @ (centered @ state.direction)
    norm = np.linalg.norm(z)
    direction = z / norm if norm > 0 else state.direction
    scores = np.abs(centered @ direction)
    chosen = int(np.argmax(scores))
    source = original if original.ndim == 2 else original.reshape(-1, 1)
    return source[chosen].copy(), MimicState(direction, state.step + 1)


class ByzantineAdversary:
    """全知攻击者：看到本轮全部诚实向量，为 f 个拜占庭节点生成相同的向量

    只负责 FOE、ALIE、MIMIC；NONE 与 LF 下拜占庭节点由协议按节点方式训练。
    """

    def __init__(self, spec: AttackSpec, n: int, f: int, aggregator: Aggregator,
                 postprocess: Optional[Postprocess] = None, rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.n = n
        self.f = f
        self.aggregator = aggregator
        self.postprocess = postprocess
        self.rng = rng if rng is not None else np.random.default_rng(spec.rng_seed)
        self.mimic_state: Optional[MimicState] = None
        self.last_tau: Optional[float] = None

    @property
    def crafts_vectors(self) -> bool:
        return self.spec.kind in ("FOE", "ALIE", "MIMIC")

    def craft(self, honest) -> np.ndarray:
        """返回 f x D 的拜占庭向量矩阵"""
        arr = np.asarray(honest)
        if self.spec.kind in TAU_ATTACKS:
            tau = optimize_tau(self.spec.kind, arr, self.aggregator, self.spec.tau_grid,
                               self.n, self.f, self.postprocess)
            self.last_tau = tau
            vector = _CRAFTERS[self.spec.kind](arr, tau)
            if self.postprocess is not None:
                vector = self.postprocess(vector)
            logger.debug(f"{self.spec.kind} 选中 τ={tau}")
        elif self.spec.kind == "MIMIC":
            if self.mimic_state is None:
                self.mimic_state = MimicState.initial(arr.shape[1], self.rng)
            vector, self.mimic_state = mimic(arr, self.mimic_state)
        else:
            raise ParameterError(f"{self.spec.kind} 攻击不由攻击者直接构造向量")
        return np.tile(vector, (self.f, 1))
