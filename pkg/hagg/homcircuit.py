"""同态电路：指示多项式、逐槽比较、排名、截尾和与中位数

所有电路只通过 slot_algebra 的操作构建，因此深度与操作计数都是实测值。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from functools import lru_cache, reduce
from typing import Dict, List, Optional, Sequence, Tuple

import galois

from hagg import slot_algebra as sa
from hagg.encoding import EncodingParams, PackedBatch
from hagg.errors import ParameterError, RingMismatchError
from hagg.slot_algebra import SlotVector, TrackedVector
from utils.logger import get_logger

logger = get_logger(__name__)

ZERO = "zero"
NEG = "neg"
BTW = "btw"


@dataclass(frozen=True)
class IndicatorPoly:
    """Z_p 上的指示多项式，coeffs 为升幂系数，domain 为其精确成立的输入"""
    kind: str
    coeffs: Tuple[int, ...]
    domain: Tuple[int, ...]
    p: int

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def evaluate(self, x: int) -> int:
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * x + c) % self.p
        return acc


def lagrange_interpolate(points: Sequence[int], values: Sequence[int], p: int) -> Tuple[int, ...]:
    """过给定点值对的唯一插值多项式（升幂系数，次数小于点数）"""
    if len(points) != len(values):
        raise ParameterError(f"插值点 {len(points)} 个，取值 {len(values)} 个，数量不一致")
    if not points:
        raise ParameterError("插值点不能为空")
    if len(points) > p:
        raise ParameterError(f"插值点数 {len(points)} 超过 p={p}")
    residues = [int(x) % p for x in points]
    if len(set(residues)) != len(residues):
        raise ParameterError(f"插值点模 {p} 后有重复")
    targets = [int(v) % p for v in values]
    if len(residues) == 1:
        return (targets[0],)

    GF = sa.prime_field(p)
    poly = galois.lagrange_poly(GF(residues), GF(targets))
    return tuple(int(c) for c in poly.coeffs[::-1])


def _signed_domain(B: int) -> Tuple[int, ...]:
    return tuple(range(-(B - 1), B))


@lru_cache(maxsize=None)
def zero_indicator(B: int, p: int) -> IndicatorPoly:
    if p < 2 * B - 1:
        raise ParameterError(f"p={p} < 2B-1={2 * B - 1}")
    domain = _signed_domain(B)
    coeffs = lagrange_interpolate(domain, [int(c == 0) for c in domain], p)
    return IndicatorPoly(ZERO, coeffs, domain, p)


@lru_cache(maxsize=None)
def neg_indicator(B: int, p: int) -> IndicatorPoly:
    if p < 2 * B - 1:
        raise ParameterError(f"p={p} < 2B-1={2 * B - 1}")
    domain = _signed_domain(B)
    coeffs = lagrange_interpolate(domain, [int(c < 0) for c in domain], p)
    return IndicatorPoly(NEG, coeffs, domain, p)


@lru_cache(maxsize=None)
def btw_indicator(n: int, f: int, p: int) -> IndicatorPoly:
    """排名窗口 {f, ..., n-f-1} 的指示多项式"""
    if f < 0 or 2 * f >= n:
        raise ParameterError(f"需要 0 <= f < n/2，收到 n={n}, f={f}")
    if p < n:
        raise ParameterError(f"p={p} < n={n}，排名插值点不够")
    domain = tuple(range(n))
    coeffs = lagrange_interpolate(domain, [int(f <= r <= n - f - 1) for r in domain], p)
    return IndicatorPoly(BTW, coeffs, domain, p)


def evaluate_poly(x: TrackedVector, poly: IndicatorPoly,
                  powers: Optional[Dict[int, TrackedVector]] = None) -> TrackedVector:
    """用平衡幂树求值：x^k = x^a * x^(k-a)，a 为小于 k 的最大 2 的幂，只计算用到的幂

    传入同一个 powers 字典的多次求值共用已算出的幂。
    """
    if powers is None:
        powers = {}
    powers.setdefault(1, x)

    def power(k: int) -> TrackedVector:
        if k not in powers:
            half = 1 << ((k - 1).bit_length() - 1)
            powers[k] = sa.mul(power(half), power(k - half))
        return powers[k]

    result = None
    for k, c in enumerate(poly.coeffs):
        if k == 0 or c == 0:
            continue
        term = sa.mul_plain(power(k), c)
        result = term if result is None else sa.add(result, term)

    c0 = poly.coeffs[0]
    if result is None:
        return sa.constant(x.ring, c0)
    if c0:
        result = sa.add_plain(result, c0)
    return result


def zero_op(x: TrackedVector, B: int,
            powers: Optional[Dict[int, TrackedVector]] = None) -> TrackedVector:
    return evaluate_poly(x, zero_indicator(B, x.ring.p), powers)


def neg_op(x: TrackedVector, B: int,
           powers: Optional[Dict[int, TrackedVector]] = None) -> TrackedVector:
    return evaluate_poly(x, neg_indicator(B, x.ring.p), powers)


def btw_op(x: TrackedVector, n: int, f: int) -> TrackedVector:
    return evaluate_poly(x, btw_indicator(n, f, x.ring.p))


def _check_encoding(inputs: Sequence[TrackedVector], enc: EncodingParams):
    for v in inputs:
        if v.ring != enc.ring:
            raise RingMismatchError(f"输入的环 (m={v.ring.m}, p={v.ring.p}) 与编码参数不一致")


def _extract_digits(v: TrackedVector, N: int) -> List[TrackedVector]:
    return [sa.ext(v, i) for i in range(N)]


def _complement(t: TrackedVector) -> TrackedVector:
    return sa.add_plain(sa.mul_plain(t, t.ring.p - 1), 1)


def _lt_from_digits(dv: List[TrackedVector], dw: List[TrackedVector], B: int) -> TrackedVector:
    """Σ_i Neg(D_i) * Π_{j>i} Zero(D_j)

    同一位差值上的 Neg 与 Zero 共用一份幂表。后缀乘积按 i 递减依次累积，
    乘法深度随 N 线性增长。
    """
    N = len(dv)
    diffs = [sa.sub(dv[i], dw[i]) for i in range(N)]
    powers = [{1: d} for d in diffs]
    result = None
    suffix = None
    for i in reversed(range(N)):
        term = neg_op(diffs[i], B, powers[i])
        if suffix is not None:
            term = sa.mul(term, suffix)
        result = term if result is None else sa.add(result, term)
        if i > 0:
            z = zero_op(diffs[i], B, powers[i])
            suffix = z if suffix is None else sa.mul(suffix, z)
    return result


def lt(v: TrackedVector, w: TrackedVector, enc: EncodingParams) -> TrackedVector:
    """逐槽小于：槽值为 1 当且仅当 decode(v) < decode(w)"""
    _check_encoding([v, w], enc)
    return _lt_from_digits(_extract_digits(v, enc.N), _extract_digits(w, enc.N), enc.B)


def comp(v: TrackedVector, w: TrackedVector, i: int, j: int, enc: EncodingParams) -> TrackedVector:
    """带下标的比较，相等值按输入下标打破平局"""
    if i >= j:
        return lt(v, w, enc)
    return _complement(lt(w, v, enc))


def ranks(inputs: Sequence[TrackedVector], enc: EncodingParams) -> List[TrackedVector]:
    """逐槽排名，每个槽上 n 个排名构成 {0, ..., n-1} 的排列

    每对 (a, b), a < b 只计算一次 LT(v_b, v_a)，两侧共用。
    """
    n = len(inputs)
    if n < 1:
        raise ParameterError("ranks 至少需要一个输入")
    _check_encoding(inputs, enc)
    if enc.ring.p < n:
        raise ParameterError(f"p={enc.ring.p} < n={n}")
    if n == 1:
        return [sa.constant(enc.ring, 0)]

    digits = [_extract_digits(v, enc.N) for v in inputs]
    terms: List[List[TrackedVector]] = [[] for _ in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            l_ba = _lt_from_digits(digits[b], digits[a], enc.B)
            terms[b].append(l_ba)
            terms[a].append(_complement(l_ba))
    return [reduce(sa.add, t) for t in terms]


def hts(inputs: Sequence[TrackedVector], f: int, enc: EncodingParams) -> TrackedVector:
    """同态截尾和：Σ_i Btw(rk_i) * v_i"""
    n = len(inputs)
    if n < 1:
        raise ParameterError("hts 至少需要一个输入")
    if f < 0 or 2 * f >= n:
        raise ParameterError(f"需要 0 <= f < n/2，收到 n={n}, f={f}")
    _check_encoding(inputs, enc)
    if n - 2 * f > enc.sum_width:
        raise ParameterError(f"窗口宽度 {n - 2 * f} 超过编码允许的 sum_width={enc.sum_width}")
    if enc.ring.p < n:
        raise ParameterError(f"p={enc.ring.p} < n={n}")

    selector = btw_indicator(n, f, enc.ring.p)
    if selector.degree == 0:
        return reduce(sa.add, inputs)

    rks = ranks(inputs, enc)
    terms = [sa.mul(btw_op(rk, n, f), v) for rk, v in zip(rks, inputs)]
    return reduce(sa.add, terms)


def hmed(inputs: Sequence[TrackedVector], enc: EncodingParams) -> TrackedVector:
    n = len(inputs)
    if n % 2 == 0:
        raise ParameterError(f"hmed 只接受奇数个输入，收到 n={n}")
    return hts(inputs, n // 2, enc)


@dataclass(frozen=True)
class CostReport:
    """电路代价：实测深度与各类操作计数"""
    depth: int
    ct_ct_mults: int
    ct_pt_mults: int
    adds: int
    extractions: int
    n: int
    f: int
    B: int
    N: int
    p: int

    @classmethod
    def from_outputs(cls, outputs: Sequence[TrackedVector], n: int, f: int,
                     enc: EncodingParams) -> "CostReport":
        trace = frozenset().union(*(o.trace for o in outputs))
        counters = sa.counters_of(trace)
        return cls(
            depth=max(o.depth for o in outputs),
            ct_ct_mults=counters.ct_ct_mults,
            ct_pt_mults=counters.ct_pt_mults,
            adds=counters.adds,
            extractions=counters.extractions,
            n=n, f=f, B=enc.B, N=enc.N, p=enc.ring.p,
        )

    def merge(self, other: "CostReport") -> "CostReport":
        """独立电路合并：计数相加，深度取最大"""
        return CostReport(
            depth=max(self.depth, other.depth),
            ct_ct_mults=self.ct_ct_mults + other.ct_ct_mults,
            ct_pt_mults=self.ct_pt_mults + other.ct_pt_mults,
            adds=self.adds + other.adds,
            extractions=self.extractions + other.extractions,
            n=self.n, f=self.f, B=self.B, N=self.N, p=self.p,
        )

    def to_lines(self) -> List[str]:
        return [f"{field.name}={getattr(self, field.name)}" for field in fields(self)]


COST_OPS = ("hts", "hmed", "ranks")


def cost_report(n: int, f: int, enc: EncodingParams, op: str = "hts") -> CostReport:
    """在全零输入上符号地运行电路，返回实测代价"""
    if n < 1:
        raise ParameterError(f"n={n} 必须为正")
    if op not in COST_OPS:
        raise ParameterError(f"未知的电路 {op!r}，可选 {COST_OPS}")
    inputs = [sa.wrap(SlotVector.zeros(enc.ring)) for _ in range(n)]
    if op == "hts":
        outputs = [hts(inputs, f, enc)]
    elif op == "hmed":
        f = n // 2
        outputs = [hmed(inputs, enc)]
    else:
        outputs = ranks(inputs, enc)
    report = CostReport.from_outputs(outputs, n, f, enc)
    logger.debug(f"{op} 代价: n={n}, f={f}, B={enc.B}, 深度={report.depth}, 密文乘法={report.ct_ct_mults}")
    return report


def hts_batch(batches: Sequence[PackedBatch], f: int, enc: EncodingParams,
              threads: int = 1) -> Tuple[PackedBatch, CostReport]:
    """按坐标块对打包输入执行 hts，块之间相互独立"""
    if not batches:
        raise ParameterError("hts_batch 至少需要一个输入")
    D = batches[0].D
    for batch in batches:
        if batch.D != D or batch.enc != enc:
            raise ParameterError("所有输入需要相同的维度与编码参数")

    def run_block(j: int) -> TrackedVector:
        return hts([sa.wrap(batch.vectors[j]) for batch in batches], f, enc)

    blocks = range(len(batches[0].vectors))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run_block, blocks))
    else:
        outputs = [run_block(j) for j in blocks]

    n = len(batches)
    reports = [CostReport.from_outputs([o], n, f, enc) for o in outputs]
    report = reduce(CostReport.merge, reports)
    result = PackedBatch(vectors=tuple(o.value for o in outputs), D=D, pad=batches[0].pad, enc=enc)
    return result, report
