import itertools

import numpy as np
import pytest

from hagg import homcircuit as hc
from hagg import slot_algebra as sa
from hagg.encoding import decode_vector, encode_vector, pack, unpack
from hagg.errors import ParameterError
from hagg.oracles import cwts
from hagg.slot_algebra import SlotVector


def _decoded(t, enc):
    return decode_vector(t.value, enc)


def _constants(values, ring):
    full = np.zeros(ring.d, dtype=np.int64)
    vals = np.asarray(values, dtype=np.int64) % ring.p
    full[:vals.size] = vals
    return sa.wrap(SlotVector.constant(ring, full))


# 插值

def test_lagrange_two_points():
    assert hc.lagrange_interpolate([0, 1], [1, 0], 7) == (1, 6)


def test_lagrange_constant_values():
    assert hc.lagrange_interpolate([0, 1, 2], [4, 4, 4], 7) == (4,)


def test_lagrange_zero_indicator_for_base_two():
    assert hc.lagrange_interpolate([-1, 0, 1], [0, 1, 0], 7) == (1, 0, 6)


def test_lagrange_rejects_duplicates_and_too_many_points():
    with pytest.raises(ParameterError, match="重复"):
        hc.lagrange_interpolate([1, 8], [0, 1], 7)
    with pytest.raises(ParameterError):
        hc.lagrange_interpolate(list(range(8)), [0] * 8, 7)
    with pytest.raises(ParameterError):
        hc.lagrange_interpolate([0, 1], [0], 7)


# 指示多项式

@pytest.mark.parametrize("B, p", [(2, 5), (3, 131), (7, 131), (7, 83)])
def test_zero_and_neg_truth_tables(B, p):
    zero, neg = hc.zero_indicator(B, p), hc.neg_indicator(B, p)
    assert zero.degree <= 2 * B - 2 and neg.degree <= 2 * B - 2
    for c in range(-(B - 1), B):
        assert zero.evaluate(c % p) == int(c == 0)
        assert neg.evaluate(c % p) == int(c < 0)


@pytest.mark.parametrize("n", range(1, 16))
def test_btw_truth_table(n):
    for f in range((n + 1) // 2):
        btw = hc.btw_indicator(n, f, 131)
        assert btw.degree <= n - 1
        for r in range(n):
            assert btw.evaluate(r) == int(f <= r <= n - f - 1)


def test_indicators_reject_small_modulus():
    with pytest.raises(ParameterError):
        hc.zero_indicator(7, 11)
    with pytest.raises(ParameterError):
        hc.btw_indicator(15, 2, 13)


def test_zero_and_neg_ops_on_full_domain(ring_n3):
    domain = np.arange(-6, 7)
    x = _constants(domain, ring_n3)
    zero = hc.zero_op(x, 7).value.constant_terms()[:domain.size]
    neg = hc.neg_op(x, 7).value.constant_terms()[:domain.size]
    assert zero.tolist() == [int(c == 0) for c in domain]
    assert neg.tolist() == [int(c < 0) for c in domain]


def test_zero_op_depth_for_base_seven(ring_n3):
    out = hc.zero_op(_constants([0], ring_n3), 7)
    assert out.depth == 4


def test_evaluate_poly_only_builds_needed_powers(ring_n3):
    poly = hc.IndicatorPoly("test", (0, 0, 0, 0, 1), (0,), ring_n3.p)
    out = hc.evaluate_poly(_constants([3], ring_n3), poly)
    assert out.value.constant_terms()[0] == 81 % ring_n3.p
    assert out.counters.ct_ct_mults == 2
    assert out.depth == 2


def test_evaluate_constant_poly_is_public(ring_n3):
    poly = hc.IndicatorPoly("test", (5,), (0,), ring_n3.p)
    out = hc.evaluate_poly(_constants([3], ring_n3), poly)
    assert out.depth == 0 and out.counters.total == 0
    assert np.all(out.value.constant_terms() == 5)


# 比较

def test_lt_is_irreflexive(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7)
    x = encode_tracked(np.arange(ring_n3.d) % 343, enc)
    assert not hc.lt(x, x, enc).value.coeffs.any()


def test_lt_examples(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7)
    three, fifty_two = encode_tracked([3], enc), encode_tracked([52], enc)
    assert _decoded(hc.lt(three, fifty_two, enc), enc)[0] == 1
    assert _decoded(hc.lt(fifty_two, three, enc), enc)[0] == 0

    out = hc.lt(encode_tracked([5, 2], enc), encode_tracked([2, 2], enc), enc)
    assert _decoded(out, enc)[:2].tolist() == [0, 0]
    out = hc.lt(encode_tracked([1, 9], enc), encode_tracked([5, 3], enc), enc)
    assert _decoded(out, enc)[:2].tolist() == [1, 0]


def test_lt_exhaustive_small_base(ring_n2, make_enc):
    enc = make_enc(ring_n2, 3)
    pairs = np.array(list(itertools.product(range(9), repeat=2)))
    for start in range(0, len(pairs), enc.d):
        chunk = pairs[start:start + enc.d]
        v = sa.wrap(encode_vector(chunk[:, 0], enc))
        w = sa.wrap(encode_vector(chunk[:, 1], enc))
        out = _decoded(hc.lt(v, w, enc), enc)[:len(chunk)]
        assert out.tolist() == (chunk[:, 0] < chunk[:, 1]).astype(int).tolist()


def test_neg_and_zero_share_one_power_table(ring_n3):
    x = _constants([0], ring_n3)
    powers = {}
    both = sa.add(hc.zero_op(x, 7, powers), hc.neg_op(x, 7, powers))
    neg_alone = hc.neg_op(_constants([0], ring_n3), 7)
    assert both.counters.ct_ct_mults == neg_alone.counters.ct_ct_mults
    assert both.counters.ct_ct_mults == len(powers) - 1


def test_lt_cost_matches_shared_digit_circuit(ring_n3, make_enc):
    enc = make_enc(ring_n3, 7)
    per_digit = hc.neg_op(_constants([0], ring_n3), 7).counters.ct_ct_mults
    out = hc.lt(_constants([0], ring_n3), _constants([0], ring_n3), enc)
    # N 位各一份幂表，加上 N-1 次项与后缀相乘和 N-2 次后缀累积
    assert out.counters.ct_ct_mults == enc.N * per_digit + 2 * enc.N - 3


@pytest.mark.parametrize("ring_name", ["ring_n2", "ring_n3"])
def test_lt_depth_adds_one_level_per_higher_digit(ring_name, request, make_enc):
    ring = request.getfixturevalue(ring_name)
    enc = make_enc(ring, 7)
    neg_depth = hc.neg_op(_constants([0], ring), 7).depth
    out = hc.lt(_constants([0], ring), _constants([0], ring), enc)
    assert out.depth == neg_depth + enc.N - 1


@pytest.mark.slow
def test_lt_exhaustive_base_seven(large_ring, make_enc):
    enc = make_enc(large_ring, 7)
    a = np.repeat(np.arange(343), 343)
    b = np.tile(np.arange(343), 343)
    for start in range(0, a.size, enc.d):
        v = sa.wrap(encode_vector(a[start:start + enc.d], enc))
        w = sa.wrap(encode_vector(b[start:start + enc.d], enc))
        count = min(enc.d, a.size - start)
        out = _decoded(hc.lt(v, w, enc), enc)[:count]
        assert np.array_equal(out, (a[start:start + count] < b[start:start + count]).astype(np.int64))


def test_comp_examples(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7)
    x = encode_tracked([4], enc)
    assert _decoded(hc.comp(x, x, 0, 0, enc), enc)[0] == 0
    assert _decoded(hc.comp(x, x, 0, 2, enc), enc)[0] == 1
    two, five = encode_tracked([2], enc), encode_tracked([5], enc)
    assert _decoded(hc.comp(two, five, 1, 0, enc), enc)[0] == 1


# 排名

def _rank_values(values, enc, encode_tracked):
    inputs = [encode_tracked([v], enc) for v in values]
    return [int(_decoded(r, enc)[0]) for r in hc.ranks(inputs, enc)]


def test_ranks_examples(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7, n_inputs=4)
    assert _rank_values([5, 2, 5, 1], enc, encode_tracked) == [1, 2, 0, 3]
    assert _rank_values([5, 5], enc, encode_tracked) == [1, 0]
    assert _rank_values([9], enc, encode_tracked) == [0]


def _check_rank_permutations(ring, make_enc, trials, seed):
    enc = make_enc(ring, 7, n_inputs=7)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        n = int(rng.integers(2, 8))
        values = rng.integers(0, 4, size=(n, ring.d))
        inputs = [sa.wrap(encode_vector(row, enc)) for row in values]
        ranks = np.stack([_decoded(r, enc) for r in hc.ranks(inputs, enc)])
        assert np.array_equal(np.sort(ranks, axis=0), np.tile(np.arange(n)[:, None], (1, ring.d)))
        # 值越大排名越小
        for a in range(n):
            for b in range(n):
                larger = values[a] > values[b]
                assert np.all(ranks[a][larger] < ranks[b][larger])


def test_rank_permutation_property(ring_n3, make_enc):
    _check_rank_permutations(ring_n3, make_enc, trials=5, seed=9)


@pytest.mark.slow
def test_rank_permutation_property_ten_thousand_lists(ring_n3, make_enc):
    # 每次试验覆盖 d=122 个列表
    _check_rank_permutations(ring_n3, make_enc, trials=83, seed=10)


# 截尾和与中位数

def test_hts_examples(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7, sum_width=4, n_inputs=4)
    values = [5, 2, 5, 1]
    inputs = [encode_tracked([v], enc) for v in values]
    assert _decoded(hc.hts(inputs, 1, enc), enc)[0] == 7
    assert _decoded(hc.hts(inputs, 0, enc), enc)[0] == 13
    for perm in itertools.permutations(range(4)):
        assert _decoded(hc.hts([inputs[i] for i in perm], 1, enc), enc)[0] == 7


def test_hts_single_input_is_identity(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7)
    x = encode_tracked([42], enc)
    assert hc.hts([x], 0, enc) is x


def test_hts_rejects_bad_trim(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7, sum_width=4, n_inputs=4)
    inputs = [encode_tracked([1], enc)] * 4
    with pytest.raises(ParameterError):
        hc.hts(inputs, 2, enc)
    narrow = make_enc(ring_n3, 7, sum_width=1, n_inputs=4)
    with pytest.raises(ParameterError, match="sum_width"):
        hc.hts(inputs, 1, narrow)


ORACLE_CASES = [
    (ring, B, n, f)
    for ring, B in (("ring_n2", 3), ("ring_n2", 7), ("ring_n3", 3), ("ring_n3", 7))
    for n in (3, 4, 5, 7, 9)
    for f in range((n + 1) // 2)
]


@pytest.mark.parametrize("ring_name, B, n, f", ORACLE_CASES)
def test_hts_matches_trimmed_sum_oracle(request, make_enc, ring_name, B, n, f):
    ring = request.getfixturevalue(ring_name)
    enc = make_enc(ring, B, sum_width=n - 2 * f, n_inputs=n)
    rng = np.random.default_rng(n * 100 + f * 10 + B)
    for tie_heavy in (False, True):
        high = 3 if tie_heavy else enc.capacity
        values = rng.integers(0, high, size=(n, ring.d))
        inputs = [sa.wrap(encode_vector(row, enc)) for row in values]
        assert np.array_equal(_decoded(hc.hts(inputs, f, enc), enc), cwts(values, f))


def test_hmed_examples(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7, n_inputs=5)
    inputs = [encode_tracked([v], enc) for v in [3, 1, 4, 1, 5]]
    assert _decoded(hc.hmed(inputs, enc), enc)[0] == 3
    same = [encode_tracked([7], enc)] * 3
    assert _decoded(hc.hmed(same, enc), enc)[0] == 7
    single = encode_tracked([11], enc)
    assert _decoded(hc.hmed([single], enc), enc)[0] == 11


def test_hmed_equals_hts_with_half_trim(ring_n3, make_enc):
    enc = make_enc(ring_n3, 7, n_inputs=7)
    values = np.random.default_rng(11).integers(0, 343, size=(7, ring_n3.d))
    inputs = [sa.wrap(encode_vector(row, enc)) for row in values]
    assert hc.hmed(inputs, enc).value == hc.hts(inputs, 3, enc).value
    assert np.array_equal(_decoded(hc.hmed(inputs, enc), enc), np.sort(values, axis=0)[3])


def test_hmed_rejects_even_count(ring_n3, make_enc, encode_tracked):
    enc = make_enc(ring_n3, 7, n_inputs=4)
    with pytest.raises(ParameterError, match="奇数"):
        hc.hmed([encode_tracked([1], enc)] * 4, enc)


def test_hts_batch_matches_oracle_and_threads_agree(ring_n2, make_enc):
    enc = make_enc(ring_n2, 7, offset=20, sum_width=3, n_inputs=5)
    values = np.random.default_rng(12).integers(-20, 29, size=(5, 13))
    batches = [pack(row, enc) for row in values]
    single, cost_single = hc.hts_batch(batches, 1, enc, threads=1)
    threaded, cost_threaded = hc.hts_batch(batches, 1, enc, threads=3)
    assert np.array_equal(unpack(single, offsets=3), cwts(values, 1))
    assert all(a == b for a, b in zip(single.vectors, threaded.vectors))
    assert cost_single == cost_threaded
    assert cost_single.ct_ct_mults == 3 * hc.cost_report(5, 1, enc).ct_ct_mults


# 代价

def test_cost_report_is_deterministic_and_consistent(ring_n3, make_enc):
    enc = make_enc(ring_n3, 7, sum_width=2, n_inputs=4)
    first, second = hc.cost_report(4, 1, enc), hc.cost_report(4, 1, enc)
    assert first == second
    assert 0 < first.depth <= first.ct_ct_mults
    assert first.extractions == 4 * 3
    assert (first.n, first.f, first.B, first.N, first.p) == (4, 1, 7, 3, 83)
    assert "depth=%d" % first.depth in first.to_lines()


def test_cost_report_merge():
    a = hc.CostReport(3, 10, 4, 5, 6, 4, 1, 7, 3, 131)
    b = hc.CostReport(5, 1, 1, 1, 1, 4, 1, 7, 3, 131)
    merged = a.merge(b)
    assert (merged.depth, merged.ct_ct_mults, merged.ct_pt_mults, merged.adds, merged.extractions) == (5, 11, 5, 6, 7)


def test_cost_grows_quadratically_in_inputs(ring_n3, make_enc):
    small = hc.cost_report(5, 1, make_enc(ring_n3, 7, sum_width=3, n_inputs=5))
    large = hc.cost_report(10, 1, make_enc(ring_n3, 7, sum_width=8, n_inputs=10))
    assert 3.5 <= large.ct_ct_mults / small.ct_ct_mults <= 5.5


@pytest.mark.slow
def test_cost_fits_quadratic_over_input_range(ring_n3, make_enc):
    """ct-ct 乘法数对 c * n^2 的拟合，n 取 4..12，相对偏差不超过 15%

    c 取使最大相对偏差最小的值：q_n = n^2 / cost(n)，c = 2 / (min q + max q)，
    此时最大相对偏差为 (max q - min q) / (max q + min q)。
    """
    sizes = range(4, 13)
    costs = [hc.cost_report(n, 1, make_enc(ring_n3, 7, sum_width=n - 2, n_inputs=n)).ct_ct_mults
             for n in sizes]
    q = np.array([n * n / c for n, c in zip(sizes, costs)])
    c = 2.0 / (q.min() + q.max())
    deviations = np.abs(c * np.array([n * n for n in sizes]) - costs) / costs
    assert deviations.max() <= 0.15


def test_ranks_cost_counts_each_pair_once(ring_n3, make_enc):
    enc = make_enc(ring_n3, 7, n_inputs=4)
    report = hc.cost_report(4, 0, enc, op="ranks")
    one_lt = hc.lt(_constants([0], ring_n3), _constants([0], ring_n3), enc)
    assert report.ct_ct_mults == 6 * one_lt.counters.ct_ct_mults


@pytest.mark.slow
def test_smaller_base_gives_smaller_depth(large_ring, make_enc):
    small = hc.cost_report(4, 1, make_enc(large_ring, 7, sum_width=2, n_inputs=4))
    large = hc.cost_report(4, 1, make_enc(large_ring, 65, sum_width=2, n_inputs=4))
    assert small.depth < large.depth


def test_depth_is_monotone_in_base(ring_n3, make_enc):
    depths = [hc.cost_report(3, 1, make_enc(ring_n3, B, n_inputs=3)).depth for B in (2, 3, 5, 9)]
    assert depths == sorted(depths)
