"""槽向量代数：批处理后的 BGV 明文在槽层面的精确模型

每个槽是 GF(p^N) = Z_p[X]/(F) 中的元素，用长度 N 的系数向量表示。
TrackedVector 在值之外记录乘法深度和操作计数，所有电路都基于它构建。
"""
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import FrozenSet, Iterable, Tuple, Union

import galois
import numpy as np

from hagg.errors import ParameterError, RingMismatchError

# 槽乘法在 int64 中累加 (2N-1)(p-1)^2，p 需要留出余量
MAX_PLAINTEXT_MODULUS = 1 << 25

Slot = np.ndarray

CT_CT_MULT = "ct_ct_mult"
CT_PT_MULT = "ct_pt_mult"
ADD = "add"
EXTRACT = "extract"

_op_ids = itertools.count()


def multiplicative_order(p: int, m: int) -> int:
    """p 模 m 的乘法阶"""
    if m < 2 or math.gcd(p, m) != 1:
        raise ParameterError(f"p={p} 与 m={m} 不互素，乘法阶无定义")
    for k in galois.divisors(int(galois.euler_phi(m))):
        if pow(p, int(k), m) == 1:
            return int(k)
    raise ParameterError(f"未找到 p={p} 模 m={m} 的乘法阶")


@lru_cache(maxsize=None)
def prime_field(p: int):
    return galois.GF(p)


@lru_cache(maxsize=None)
def find_irreducible(p: int, N: int) -> Tuple[int, ...]:
    """Z_p 上次数为 N 的首一不可约多项式，取固定枚举顺序中的最小者（升幂系数）"""
    if not galois.is_prime(p):
        raise ParameterError(f"p={p} 不是素数")
    if N < 1:
        raise ParameterError(f"次数 N={N} 必须为正")
    poly = galois.irreducible_poly(p, N, method="min")
    return tuple(int(c) for c in poly.coeffs[::-1])


def is_irreducible(F: Tuple[int, ...], p: int) -> bool:
    poly = galois.Poly(list(reversed(F)), field=prime_field(p))
    return poly.degree == len(F) - 1 and poly.is_irreducible()


@dataclass(frozen=True)
class RingParams:
    """明文环参数：m 为分圆指数，p 为明文模数，N 为槽次数，d 为槽数，F 为槽模多项式"""
    m: int
    p: int
    N: int
    d: int
    F: Tuple[int, ...]

    def __post_init__(self):
        if not galois.is_prime(self.m):
            raise ParameterError(f"m={self.m} 不是素数")
        if not galois.is_prime(self.p):
            raise ParameterError(f"p={self.p} 不是素数")
        if self.p == self.m:
            raise ParameterError(f"p={self.p} 整除 m={self.m}")
        if self.p >= MAX_PLAINTEXT_MODULUS:
            raise ParameterError(f"p={self.p} 超过支持上限 {MAX_PLAINTEXT_MODULUS}")
        order = multiplicative_order(self.p, self.m)
        if order != self.N:
            raise ParameterError(f"ord_{self.m}({self.p})={order}，与 N={self.N} 不符")
        if self.d * self.N != self.m - 1:
            raise ParameterError(f"d*N={self.d * self.N} 不等于 m-1={self.m - 1}")
        if len(self.F) != self.N + 1 or self.F[-1] != 1:
            raise ParameterError(f"F={self.F} 不是次数为 {self.N} 的首一多项式")
        if any(not 0 <= c < self.p for c in self.F):
            raise ParameterError(f"F={self.F} 的系数不在 [0, {self.p}) 内")
        if not is_irreducible(self.F, self.p):
            raise ParameterError(f"F={self.F} 在 Z_{self.p} 上可约")

    @classmethod
    def from_primes(cls, m: int, p: int) -> "RingParams":
        N = multiplicative_order(p, m)
        return cls(m=m, p=p, N=N, d=(m - 1) // N, F=find_irreducible(p, N))

    @cached_property
    def reduction(self) -> np.ndarray:
        """第 k 行为 X^k mod F 的系数，k = 0..2N-2"""
        N, p = self.N, self.p
        rows = []
        current = [1] + [0] * (N - 1)
        for _ in range(2 * N - 1):
            rows.append(current)
            top = current[-1]
            shifted = [0] + current[:-1]
            current = [(shifted[j] - top * self.F[j]) % p for j in range(N)]
        return np.array(rows, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SlotVector:
    """d 个槽组成的向量，coeffs 形状为 (d, N)，取值在 [0, p)"""
    coeffs: np.ndarray
    ring: RingParams

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.int64)
        expected = (self.ring.d, self.ring.N)
        if arr.shape != expected:
            raise ParameterError(f"槽向量形状 {arr.shape} 与环 {expected} 不符")
        if arr.size and (arr.min() < 0 or arr.max() >= self.ring.p):
            raise ParameterError(f"槽系数超出 [0, {self.ring.p})")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, ring: RingParams) -> "SlotVector":
        return cls(np.zeros((ring.d, ring.N), dtype=np.int64), ring)

    @classmethod
    def constant(cls, ring: RingParams, values: Union[int, Iterable[int]]) -> "SlotVector":
        """常数槽：只有第 0 个系数非零"""
        arr = np.zeros((ring.d, ring.N), dtype=np.int64)
        arr[:, 0] = np.mod(np.asarray(values, dtype=np.int64), ring.p)
        return cls(arr, ring)

    def constant_terms(self) -> np.ndarray:
        return self.coeffs[:, 0].copy()

    def is_constant(self) -> bool:
        return not self.coeffs[:, 1:].any()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SlotVector):
            return NotImplemented
        return self.ring == other.ring and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None


@dataclass(frozen=True)
class OpCounters:
    ct_ct_mults: int = 0
    ct_pt_mults: int = 0
    adds: int = 0
    extractions: int = 0

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            self.ct_ct_mults + other.ct_ct_mults,
            self.ct_pt_mults + other.ct_pt_mults,
            self.adds + other.adds,
            self.extractions + other.extractions,
        )

    @property
    def total(self) -> int:
        return self.ct_ct_mults + self.ct_pt_mults + self.adds + self.extractions


def counters_of(trace: FrozenSet[Tuple[str, int]]) -> OpCounters:
    kinds = Counter(kind for kind, _ in trace)
    return OpCounters(
        ct_ct_mults=kinds[CT_CT_MULT],
        ct_pt_mults=kinds[CT_PT_MULT],
        adds=kinds[ADD],
        extractions=kinds[EXTRACT],
    )


@dataclass(frozen=True, eq=False)
class TrackedVector:
    """带代价记录的槽向量

    trace 是历史中全部操作的标识集合，共享子电路只计一次。
    """
    value: SlotVector
    depth: int = 0
    trace: FrozenSet[Tuple[str, int]] = frozenset()

    @property
    def ring(self) -> RingParams:
        return self.value.ring

    @property
    def counters(self) -> OpCounters:
        return counters_of(self.trace)


PlainOperand = Union[int, SlotVector]


def wrap(value: SlotVector) -> TrackedVector:
    """新鲜输入：深度 0，无操作记录"""
    return TrackedVector(value)


def constant(ring: RingParams, values: Union[int, Iterable[int]]) -> TrackedVector:
    """公开常数的平凡加密"""
    return TrackedVector(SlotVector.constant(ring, values))


def _check_ring(a: TrackedVector, b: Union[TrackedVector, SlotVector]):
    if a.ring != b.ring:
        raise RingMismatchError(f"环不一致: (m={a.ring.m}, p={a.ring.p}) 与 (m={b.ring.m}, p={b.ring.p})")


def _record(kind: str, *operands: TrackedVector) -> FrozenSet[Tuple[str, int]]:
    trace = frozenset().union(*(op.trace for op in operands))
    return trace | {(kind, next(_op_ids))}


def _slot_product(x: np.ndarray, y: np.ndarray, ring: RingParams) -> np.ndarray:
    N = ring.N
    prod = np.zeros((x.shape[0], 2 * N - 1), dtype=np.int64)
    for i in range(N):
        prod[:, i:i + N] += x[:, i:i + 1] * y
    prod %= ring.p
    return (prod @ ring.reduction) % ring.p


def add(a: TrackedVector, b: TrackedVector) -> TrackedVector:
    _check_ring(a, b)
    coeffs = (a.value.coeffs + b.value.coeffs) % a.ring.p
    return TrackedVector(SlotVector(coeffs, a.ring), max(a.depth, b.depth), _record(ADD, a, b))


def sub(a: TrackedVector, b: TrackedVector) -> TrackedVector:
    _check_ring(a, b)
    coeffs = (a.value.coeffs - b.value.coeffs) % a.ring.p
    return TrackedVector(SlotVector(coeffs, a.ring), max(a.depth, b.depth), _record(ADD, a, b))


def mul(a: TrackedVector, b: TrackedVector) -> TrackedVector:
    _check_ring(a, b)
    coeffs = _slot_product(a.value.coeffs, b.value.coeffs, a.ring)
    return TrackedVector(SlotVector(coeffs, a.ring), max(a.depth, b.depth) + 1, _record(CT_CT_MULT, a, b))


def mul_plain(a: TrackedVector, c: PlainOperand) -> TrackedVector:
    """与明文常数相乘，不增加深度"""
    if isinstance(c, SlotVector):
        _check_ring(a, c)
        coeffs = _slot_product(a.value.coeffs, c.coeffs, a.ring)
    else:
        coeffs = (a.value.coeffs * (int(c) % a.ring.p)) % a.ring.p
    return TrackedVector(SlotVector(coeffs, a.ring), a.depth, _record(CT_PT_MULT, a))


def add_plain(a: TrackedVector, c: PlainOperand) -> TrackedVector:
    if isinstance(c, SlotVector):
        _check_ring(a, c)
        coeffs = (a.value.coeffs + c.coeffs) % a.ring.p
    else:
        coeffs = a.value.coeffs.copy()
        coeffs[:, 0] = (coeffs[:, 0] + int(c)) % a.ring.p
    return TrackedVector(SlotVector(coeffs, a.ring), a.depth, _record(ADD, a))


def ext(a: TrackedVector, i: int) -> TrackedVector:
    """系数提取：第 j 个槽变为只含原第 i 个系数的常数槽"""
    if not 0 <= i < a.ring.N:
        raise ParameterError(f"系数下标 {i} 超出 [0, {a.ring.N})")
    coeffs = np.zeros_like(a.value.coeffs)
    coeffs[:, 0] = a.value.coeffs[:, i]
    return TrackedVector(SlotVector(coeffs, a.ring), a.depth, _record(EXTRACT, a))
