"""整数的 B 进制编码、向量打包与 BGV 参数搜索"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import galois
import numpy as np

from hagg.errors import EncodingRangeError, ParameterError, SearchExhaustedError
from hagg.slot_algebra import RingParams, Slot, SlotVector, multiplicative_order
from utils.logger import get_logger

logger = get_logger(__name__)

# 解码在 int64 中进行，p * B^N 需要留出余量
_DECODE_LIMIT = 1 << 62


@dataclass(frozen=True)
class EncodingParams:
    """编码参数

    value_range 为编码后取值的个数，即编码值位于 [0, value_range)；默认取满容量 B^N。
    sum_width 是任何时候会被相加的编码值个数上界，n_inputs 是参与排序的输入个数。
    """
    ring: RingParams
    B: int
    offset: int = 0
    sum_width: int = 1
    n_inputs: int = 1
    value_range: Optional[int] = None

    def __post_init__(self):
        p = self.ring.p
        if not 2 <= self.B <= p:
            raise ParameterError(f"基数 B={self.B} 需满足 2 <= B <= p={p}")
        if self.value_range is None:
            object.__setattr__(self, "value_range", self.capacity)
        if self.offset < 0:
            raise ParameterError(f"offset={self.offset} 不能为负")
        if self.value_range < self.offset + 1:
            raise ParameterError(f"取值范围 {self.value_range} 容不下 offset={self.offset}")
        if self.capacity < self.value_range:
            raise ParameterError(f"容量 B^N={self.capacity} 小于取值范围 {self.value_range}")
        if p < 2 * self.B - 1:
            raise ParameterError(f"p={p} < 2B-1={2 * self.B - 1}，Zero/Neg 插值点不够")
        if self.sum_width < 1 or p <= self.sum_width * (self.B - 1):
            raise ParameterError(
                f"p={p} 必须大于 sum_width*(B-1)={self.sum_width * (self.B - 1)}，否则系数求和会回绕"
            )
        if self.n_inputs < 1 or p < self.n_inputs:
            raise ParameterError(f"p={p} 小于输入个数 n={self.n_inputs}，Btw 插值点不够")
        if p * self.capacity * self.sum_width >= _DECODE_LIMIT:
            raise ParameterError(f"p*B^N 过大，解码会溢出 int64")

    @property
    def N(self) -> int:
        return self.ring.N

    @property
    def d(self) -> int:
        return self.ring.d

    @property
    def capacity(self) -> int:
        return self.B ** self.ring.N

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.B ** i for i in range(self.N)], dtype=np.int64)

    def to_lines(self):
        ring = self.ring
        return [
            f"m={ring.m}", f"p={ring.p}", f"N={ring.N}", f"d={ring.d}",
            f"B={self.B}", f"offset={self.offset}", f"capacity={self.capacity}",
            f"sum_width={self.sum_width}",
        ]


@dataclass(frozen=True)
class PackedBatch:
    """长度 D 的整数向量按 d 分块后的槽向量序列"""
    vectors: Tuple[SlotVector, ...]
    D: int
    pad: int
    enc: EncodingParams

    def __post_init__(self):
        expected = math.ceil(self.D / self.enc.d) if self.D else 0
        if len(self.vectors) != expected:
            raise ParameterError(f"D={self.D} 需要 {expected} 个槽向量，实际 {len(self.vectors)}")


def _digits(values: np.ndarray, enc: EncodingParams) -> np.ndarray:
    rest = np.asarray(values, dtype=np.int64).copy()
    out = np.zeros((rest.shape[0], enc.N), dtype=np.int64)
    for i in range(enc.N):
        rest, out[:, i] = np.divmod(rest, enc.B)
    return out


def encode_int(a: int, enc: EncodingParams) -> Slot:
    if not 0 <= a < enc.capacity:
        raise EncodingRangeError(f"{a} 超出可编码范围 [0, {enc.capacity})")
    return _digits(np.array([a]), enc)[0]


def decode_slot(s: Slot, enc: EncodingParams) -> int:
    coeffs = np.mod(np.asarray(s, dtype=np.int64), enc.ring.p)
    return int(coeffs @ enc.weights)


def encode_vector(values: Sequence[int], enc: EncodingParams) -> SlotVector:
    """编码至多 d 个已平移的非负整数，不足部分以 offset 的编码填充"""
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if arr.size > enc.d:
        raise ParameterError(f"一个槽向量最多容纳 {enc.d} 个值，收到 {arr.size}")
    if arr.size and (arr.min() < 0 or arr.max() >= enc.value_range):
        raise EncodingRangeError(f"编码值超出 [0, {enc.value_range})")
    full = np.full(enc.d, enc.offset, dtype=np.int64)
    full[:arr.size] = arr
    return SlotVector(_digits(full, enc), enc.ring)


def decode_vector(vector: SlotVector, enc: EncodingParams, offsets: int = 0) -> np.ndarray:
    """逐槽解码，再减去 offsets 个 offset"""
    return vector.coeffs @ enc.weights - offsets * enc.offset


def pack(values: Sequence[int], enc: EncodingParams) -> PackedBatch:
    raw = np.asarray(values, dtype=np.int64).reshape(-1)
    shifted = raw + enc.offset
    if raw.size and (shifted.min() < 0 or shifted.max() >= enc.value_range):
        bad = raw[(shifted < 0) | (shifted >= enc.value_range)][0]
        raise EncodingRangeError(
            f"值 {bad} 加上 offset={enc.offset} 后超出 [0, {enc.value_range})"
        )
    chunks = tuple(
        encode_vector(shifted[start:start + enc.d], enc)
        for start in range(0, raw.size, enc.d)
    )
    return PackedBatch(vectors=chunks, D=int(raw.size), pad=enc.offset, enc=enc)


def unpack(batch: PackedBatch, offsets: int = 1) -> np.ndarray:
    """解码并去掉填充；offsets 为求和时累积的 offset 个数"""
    if not batch.vectors:
        return np.zeros(0, dtype=np.int64)
    decoded = np.concatenate([decode_vector(v, batch.enc, offsets) for v in batch.vectors])
    return decoded[:batch.D]


def check_digits(batch: PackedBatch):
    """聚合前检查所有系数都是合法数字"""
    for index, vector in enumerate(batch.vectors):
        if vector.coeffs.size and vector.coeffs.max() >= batch.enc.B:
            raise EncodingRangeError(f"第 {index} 个槽向量含有不小于 B={batch.enc.B} 的系数")


@dataclass(frozen=True)
class ParamSpec:
    """参数搜索的需求；delta 与 value_range 二选一，都缺省时取满容量 B^N"""
    n: int
    f: int
    N: int
    min_d: int = 1
    delta: Optional[int] = None
    value_range: Optional[int] = None
    B: Optional[int] = None
    offset: Optional[int] = None
    sum_width: Optional[int] = None
    max_m: int = 65536
    min_p: int = 2
    max_p: int = 200


def _minimal_base(value_range: int, N: int) -> int:
    B = 2
    while B ** N < value_range:
        B += 1
    return B


def _resolve_range(spec: ParamSpec) -> Tuple[int, int, int]:
    """返回 (B, value_range, offset)"""
    if spec.delta is not None and spec.value_range is not None:
        raise ParameterError("delta 与 value_range 只能指定一个")
    if spec.delta is not None:
        if spec.delta < 2:
            raise ParameterError(f"精度 delta={spec.delta} 至少为 2")
        value_range = 2 ** spec.delta - 1
        offset = 2 ** (spec.delta - 1) - 1
    elif spec.value_range is not None:
        value_range = spec.value_range
        offset = 0
    elif spec.B is not None:
        value_range = spec.B ** spec.N
        offset = 0
    else:
        raise ParameterError("需要 delta、value_range 或 B 之一")
    if spec.offset is not None:
        offset = spec.offset
    if value_range < 1:
        raise ParameterError(f"取值范围 {value_range} 必须为正")

    B = spec.B if spec.B is not None else _minimal_base(value_range, spec.N)
    if B ** spec.N < value_range:
        raise ParameterError(f"B={B}, N={spec.N} 的容量 {B ** spec.N} 小于取值范围 {value_range}")
    return B, value_range, offset


def param_search(spec: ParamSpec) -> EncodingParams:
    """按 m 升序、再按 p 升序枚举素数对，返回第一个满足全部约束的参数"""
    if spec.n < 1 or spec.f < 0 or 2 * spec.f >= spec.n:
        raise ParameterError(f"需要 n >= 1 且 0 <= f < n/2，收到 n={spec.n}, f={spec.f}")
    if spec.N < 1 or spec.min_d < 1:
        raise ParameterError(f"N={spec.N} 与 min_d={spec.min_d} 必须为正")

    B, value_range, offset = _resolve_range(spec)
    sum_width = spec.sum_width if spec.sum_width is not None else spec.n - 2 * spec.f
    p_low = max(spec.min_p, B, 2 * B - 1, sum_width * (B - 1) + 1, spec.n, 2)
    m_low = max(3, spec.N * spec.min_d + 1)
    if m_low > spec.max_m or p_low > spec.max_p:
        raise SearchExhaustedError(
            f"搜索区间为空: m in [{m_low}, {spec.max_m}], p in [{p_low}, {spec.max_p}]"
        )

    p_candidates = [p for p in galois.primes(spec.max_p) if p >= p_low]
    for m in galois.primes(spec.max_m):
        if m < m_low or (m - 1) % spec.N:
            continue
        for p in p_candidates:
            if p == m or pow(p, spec.N, m) != 1:
                continue
            if multiplicative_order(p, m) != spec.N:
                continue
            ring = RingParams.from_primes(m, p)
            enc = EncodingParams(
                ring=ring, B=B, offset=offset, sum_width=sum_width,
                n_inputs=spec.n, value_range=value_range,
            )
            logger.info(f"参数搜索完成: m={m}, p={p}, N={ring.N}, d={ring.d}, B={B}, offset={offset}")
            return enc

    raise SearchExhaustedError(
        f"在 m <= {spec.max_m}, p <= {spec.max_p} 内找不到 N={spec.N}, d >= {spec.min_d} 的参数"
    )
