from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import du_loop, histogram_loop
from redysim import redy
from redysim.quant import QuantParams, ValueRange, uniform_quantize
from redysim.redy import (EXACT, EXPONENT, GroupStats, HistogramConfig, LayerDecisions,
                          PrecisionDecision, PrecisionThresholds, compute_histogram,
                          decide_precision, deviation_from_uniform, max_deviation,
                          precision_variation, random_precision_baseline, redy_quantize_group,
                          subsample_indices)

P = PrecisionThresholds()


def cfg(lo=0.0, hi=8.0, bins=8, ratio=1.0):
    return HistogramConfig.for_range(ValueRange(lo, hi), bins, ratio)


def test_even_values_fill_bins_evenly():
    vals = np.arange(16) * 0.5 + 0.25
    assert compute_histogram(vals, cfg()).hist == (2,) * 8


def test_equal_values_fill_one_bin():
    s = compute_histogram(np.full(20, 3.3), cfg())
    assert sorted(s.hist) == [0] * 7 + [20] and s.sampled_count == 20


def test_192_normal_samples_against_scalar_loop():
    rng = np.random.default_rng(11)
    vals = rng.standard_normal(192)
    s = compute_histogram(vals, cfg(0.0, 4.0, 8, 0.10), EXACT)
    assert s.sampled_count == 20
    assert list(s.hist) == histogram_loop(vals, 0.0, 4.0, 8, 0.10)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=300), st.sampled_from([2, 4, 8, 16]),
       st.sampled_from([0.05, 0.1, 0.25, 0.5, 1.0]))
def test_histogram_matches_scalar_loop(vals, bins, ratio):
    s = compute_histogram(vals, cfg(-5.0, 5.0, bins, ratio))
    assert list(s.hist) == histogram_loop(vals, -5.0, 5.0, bins, ratio)
    assert sum(s.hist) == s.sampled_count
    assert s.ed == s.sampled_count / bins


def test_du_examples():
    assert deviation_from_uniform(GroupStats((2,) * 8, 16)) == 0
    assert deviation_from_uniform(GroupStats((16,) + (0,) * 7, 16)) == 1.75
    assert deviation_from_uniform(GroupStats((4, 4, 0, 0, 0, 0, 0, 0), 8)) == 1.5
    with pytest.raises(ValueError, match="empty group"):
        deviation_from_uniform(GroupStats((0,) * 8, 0))


@given(st.lists(st.integers(0, 50), min_size=2, max_size=32).filter(lambda h: sum(h) > 0))
def test_du_bounds_and_formula(hist):
    du = deviation_from_uniform(GroupStats(tuple(hist), sum(hist)))
    assert 0 <= du <= max_deviation(len(hist)) + 1e-12
    assert du == pytest.approx(du_loop(hist), abs=1e-12)


def test_decide_examples():
    assert decide_precision(0.3, 3, P).bitwidth == 8
    assert decide_precision(0.0, 64, P).bitwidth == 3
    assert decide_precision(1.75, 64, P).bitwidth == 8
    with pytest.raises(ValueError, match="invalid DU"):
        decide_precision(1.9, 64, P)
    with pytest.raises(ValueError, match="invalid DU"):
        decide_precision(-0.1, 64, P)


def test_decide_buckets_boundaries_go_low():
    p = P.p
    expect = [(p[0], 7), (p[1], 6), (p[2], 5), (p[3], 4), (p[4], 3)]
    for du, bits in expect:
        assert decide_precision(du, 64, P).bitwidth == bits
    for du, bits in [(1.5, 8), (1.2, 7), (0.9, 6), (0.6, 5), (0.4, 4), (0.1, 3)]:
        assert decide_precision(du, 64, P).bitwidth == bits


@given(st.floats(0, 1.75), st.floats(0, 1.75))
def test_decide_monotone(a, b):
    lo, hi = sorted((a, b))
    assert decide_precision(lo, 64, P).bitwidth <= decide_precision(hi, 64, P).bitwidth


@given(st.integers(1, 7), st.floats(0, 1.75))
def test_small_depth_always_8(depth, du):
    assert decide_precision(du, depth, P).bitwidth == 8


def test_thresholds_validation():
    with pytest.raises(ValueError):
        PrecisionThresholds((1.0, 1.0, 0.5, 0.4, 0.3))
    with pytest.raises(ValueError):
        PrecisionThresholds((1.0, 0.5))
    with pytest.raises(ValueError):
        PrecisionThresholds((1.8, 1.0, 0.5, 0.4, 0.3)).validate(8)
    assert decide_precision(0.0, 64, PrecisionThresholds.force_8bit()).bitwidth == 8


def test_histogram_config_validation():
    with pytest.raises(ValueError):
        HistogramConfig(1, (), (), 0.1)
    with pytest.raises(ValueError):
        HistogramConfig(2, (1.0,), (0,), 0.0)
    with pytest.raises(ValueError):
        HistogramConfig(3, (2.0, 1.0), (0, 1), 0.5)
    with pytest.raises(ValueError):
        HistogramConfig(3, (1.0, 2.0), (1, 0), 0.5)


def test_subsample_is_strided_and_deterministic():
    assert subsample_indices(192, 0.10).tolist() == list(range(0, 200, 10))[:20]
    assert subsample_indices(10, 1.0).tolist() == list(range(10))
    # stride 3 gives 4 of the 5 needed positions, so the spacing becomes fractional
    assert subsample_indices(10, 0.45).tolist() == [0, 2, 4, 6, 8]
    rng = np.random.default_rng(0)
    g = rng.random(100)
    assert compute_histogram(g, cfg(0, 1, 8, 0.1)) == compute_histogram(g, cfg(0, 1, 8, 0.1))


@given(st.lists(st.floats(0, 1), min_size=8, max_size=100), st.integers(-8, 8))
def test_scale_invariance_exact_mode(vals, k):
    c = 2.0 ** k            # exact in binary floating point
    r = ValueRange(0.0, 1.0)
    a = compute_histogram(vals, HistogramConfig.for_range(r, 8, 1.0))
    b = compute_histogram(np.asarray(vals) * c, HistogramConfig.for_range(r.scaled(c), 8, 1.0))
    assert a == b
    assert decide_precision(a.du, len(vals), P) == decide_precision(b.du, len(vals), P)


def test_exponent_mode_bins_by_magnitude():
    hc = cfg(0.0, 8.0)                   # edges 1..7 -> exponents 0,1,1,2,2,2,2
    assert hc.exponent_boundaries == (0, 1, 1, 2, 2, 2, 2)
    s = compute_histogram([0.0, 0.5, 1.0, 3.0, 5.0, -5.0], hc, EXPONENT)
    # 0 and 0.5 stay in the lowest bin; 1.0 (exp 0) passes the first edge
    assert s.hist == (2, 1, 0, 1, 0, 0, 0, 2)


def test_exponent_boundaries_non_decreasing_for_signed_range():
    hc = cfg(-4.0, 4.0)
    assert list(hc.exponent_boundaries) == sorted(hc.exponent_boundaries)


def test_quantize_group_flat_group_gets_low_bits():
    r = ValueRange(0.0, 1.0)
    g = (np.arange(192) + 0.5) / 192
    codes, d = redy_quantize_group(g, r, P, subsample_ratio=0.1)
    assert d.bitwidth <= 5
    assert codes.max() < 2 ** d.bitwidth


def test_quantize_group_depth3_matches_static8():
    r = ValueRange(0.0, 1.0)
    g = np.array([0.1, 0.7, 0.33])
    codes, d = redy_quantize_group(g, r, P)
    assert d.bitwidth == 8
    assert np.array_equal(codes, uniform_quantize(g, QuantParams.for_range(r, 8)))


def test_quantize_group_all_zero_is_congested():
    codes, d = redy_quantize_group(np.zeros(64), ValueRange(0.0, 1.0), P, subsample_ratio=1.0)
    assert d.du == 1.75 and d.bitwidth == 8 and not codes.any()


def _decisions(bits, layer=0):
    return [PrecisionDecision(b, 0.0, (layer, i, 0, 0, 0)) for i, b in enumerate(bits)]


def test_precision_variation_examples():
    a = _decisions([3, 4, 5, 6])
    assert precision_variation(a, a) == 0
    assert precision_variation(a, _decisions([4, 5, 6, 7])) == 1.0
    assert precision_variation(a, _decisions([3, 4, 6, 6])) == 0.25
    with pytest.raises(ValueError):
        precision_variation(a, _decisions([3, 4, 5]))


def test_precision_variation_layer_decisions():
    a = LayerDecisions(0, np.array([[3, 4], [5, 6]]), np.zeros((2, 2)), (1, 2), (1, 2), 16)
    b = LayerDecisions(0, np.array([[3, 8], [5, 6]]), np.zeros((2, 2)), (1, 2), (1, 2), 16)
    assert precision_variation([a], [b]) == 0.25
    ids = [d.group_id for d in a]
    assert ids == [(0, 0, 0, 0, 0), (0, 0, 0, 0, 1), (0, 0, 1, 0, 0), (0, 0, 1, 0, 1)]


def test_random_baseline_examples():
    one = _decisions([5])
    assert random_precision_baseline(one, 0) == one
    same = _decisions([6, 6, 6])
    assert random_precision_baseline(same, 3) == same
    d = _decisions([6, 6, 6, 8])
    outs = [random_precision_baseline(d, s) for s in range(10)]
    for o in outs:
        assert Counter(x.bitwidth for x in o) == Counter({6: 3, 8: 1})
        assert [x.group_id for x in o] == [x.group_id for x in d]
    assert any([x.bitwidth for x in o] != [6, 6, 6, 8] for o in outs)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(3, 8)), min_size=1, max_size=40),
       st.integers(0, 2 ** 32))
def test_random_baseline_preserves_per_layer_multisets(items, seed):
    d = [PrecisionDecision(b, 0.0, (layer, i, 0, 0, 0)) for i, (layer, b) in enumerate(items)]
    out = random_precision_baseline(d, seed)
    for layer in {x[0] for x in items}:
        assert (Counter(x.bitwidth for x in d if x.group_id[0] == layer)
                == Counter(x.bitwidth for x in out if x.group_id[0] == layer))
    assert random_precision_baseline(d, seed) == out


def test_threshold_rescaling():
    r = P.rescaled(2, 8)
    assert r.p[0] == pytest.approx(1.40 * 1.0 / 1.75)
    r.validate(2)


def test_settings_validation():
    with pytest.raises(ValueError):
        redy.RedySettings(mode="fuzzy")
    with pytest.raises(ValueError):
        redy.RedySettings(subsample_ratio=0)
    with pytest.raises(ValueError):
        redy.RedySettings(bins=2)      # default p1 above the 2-bin maximum DU
