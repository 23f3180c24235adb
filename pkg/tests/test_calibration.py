import itertools
import warnings

import numpy as np
import pytest

from redysim import redy
from redysim.calibration import (BITWIDTHS, bit_shares, calibrate_ranges, calibrate_thresholds,
                                 collect_group_stats, default_candidates, group_errors,
                                 merge_ranges, search_thresholds, share_matched_thresholds)
from redysim.cnn import LayerSpec, Network, forward_quantized
from redysim.fixtures import random_inputs, synthetic_network
from redysim.quant import ValueRange, roundtrip, rrmse


def identity_net(shape):
    w = np.eye(shape[2]).reshape(1, 1, shape[2], shape[2])
    return Network(shape, [LayerSpec("conv", w)])


def test_single_input_identity_layer():
    x = np.array([[[0.2, -1.0], [3.0, 0.5]]])
    r = calibrate_ranges(identity_net(x.shape), [x])
    assert r == {0: ValueRange(-1.0, 3.0)}


def test_two_inputs_union():
    a = np.full((2, 2, 1), 1.0)
    b = np.full((2, 2, 1), -2.0)
    a[0, 0, 0] = 5.0
    assert calibrate_ranges(identity_net(a.shape), [a, b])[0] == ValueRange(-2.0, 5.0)


def test_empty_calibration_set():
    with pytest.raises(ValueError):
        calibrate_ranges(identity_net((2, 2, 1)), [])


def test_ranges_match_activation_dump():
    net = synthetic_network(0, size=8, channels=(3, 8, 8), classes=4)
    xs = random_inputs(10, net.input_shape, 5)
    got = calibrate_ranges(net, xs)
    # dump every layer input by running the float chain by hand
    lo, hi = {}, {}
    for x in xs:
        a = x.astype(np.float64)
        for i, layer in enumerate(net.layers):
            if layer.kind in ("conv", "fc"):
                lo[i] = min(lo.get(i, np.inf), float(a.min()))
                hi[i] = max(hi.get(i, -np.inf), float(a.max()))
                w = layer.conv_weights()
                R, S, C, K = w.shape
                inp = a.reshape(1, 1, -1) if layer.kind == "fc" else np.pad(
                    a, ((layer.padding,) * 2, (layer.padding,) * 2, (0, 0)))
                X = inp.shape[0] - R + 1
                Y = inp.shape[1] - S + 1
                out = np.zeros((X, Y, K))
                for u in range(X):
                    for v in range(Y):
                        out[u, v] = inp[u:u + R, v:v + S].ravel() @ w.reshape(-1, K)
                out += layer.bias if layer.bias is not None else 0.0
                a = np.maximum(out, 0) if layer.activation == "relu" else out
            else:
                k = layer.size
                a = a.reshape(a.shape[0] // k, k, a.shape[1] // k, k, -1).max(axis=(1, 3))
    assert got.keys() == lo.keys()
    for i in got:
        # summation order differs from the library's matmul
        assert got[i].lo == pytest.approx(lo[i], rel=1e-12, abs=1e-12)
        assert got[i].hi == pytest.approx(hi[i], rel=1e-12, abs=1e-12)


def test_merge_is_commutative_and_associative():
    a = {0: ValueRange(0, 1), 1: ValueRange(-1, 0)}
    b = {0: ValueRange(-2, 0.5)}
    c = {1: ValueRange(0, 4), 2: ValueRange(1, 2)}
    assert merge_ranges(a, b) == merge_ranges(b, a)
    assert merge_ranges(merge_ranges(a, b), c) == merge_ranges(a, merge_ranges(b, c))


def test_group_errors_drop_zero_groups_and_match_roundtrip():
    r = ValueRange(0.0, 2.0)
    g = np.array([[0.0, 0.0, 0.0], [0.1, 1.3, 1.9]])
    e, keep = group_errors(g, r)
    assert keep.tolist() == [False, True]
    for j, n in enumerate(BITWIDTHS):
        assert e[0, j] == pytest.approx(rrmse(g[1], roundtrip(g[1], r, n)))


def brute_force(du, errors, budget, cands, layers):
    best = None
    for combo in itertools.combinations(sorted(cands), 5):
        p = tuple(reversed(combo))
        bits = np.array([redy.MIN_BITS + sum(x > q for q in p) for x in du])
        per_group = errors[np.arange(len(du)), bits - redy.MIN_BITS]
        ok = all(per_group[layers == l].mean() <= budget for l in set(layers.tolist()))
        if ok:
            key = (int(bits.sum()), p)
            best = key if best is None or key < best else best
    return best


@pytest.mark.parametrize("seed", range(6))
def test_search_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 60
    du = rng.uniform(0, 1.75, n)
    # error falls with bits and rises with DU, as it does for real groups
    errors = (0.02 + du[:, None]) * 2.0 ** -np.arange(6)[None, :] * rng.uniform(0.5, 1.5, (n, 1))
    layers = rng.integers(0, 3, n)
    cands = default_candidates(8, 10)
    budget = float(rng.uniform(0.1, 0.8))
    got = search_thresholds(du, errors, budget, cands, layers)
    want = brute_force(du, errors, budget, cands, layers)
    if want is None:
        assert not got.feasible
    else:
        assert got.feasible and got.thresholds.p == want[1]
        assert got.average_bits == pytest.approx(want[0] / n)


def test_unbounded_budget_takes_lowest_bits():
    du = np.linspace(0.01, 1.7, 30)
    errors = np.ones((30, 6))
    cands = default_candidates()
    got = search_thresholds(du, errors, np.inf, cands)
    assert got.thresholds.p == tuple(sorted(cands)[-5:][::-1])


def test_zero_budget_infeasible():
    du = np.linspace(0.01, 1.7, 30)
    errors = np.full((30, 6), 0.01)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        got = search_thresholds(du, errors, 0.0, default_candidates())
    assert not got.feasible and w
    assert got.thresholds == redy.PrecisionThresholds.force_8bit()


def test_flat_vs_congested_mixture():
    # channels 0..63 of a 1x1 layer: flat groups spread over the range,
    # congested groups pile up in the lowest bin with one outlier at the top
    rng = np.random.default_rng(0)
    C = 64
    net = identity_net((4, 4, C))
    xs = []
    for _ in range(6):
        x = np.empty((4, 4, C))
        x[:2] = rng.uniform(0, 1, (2, 4, C))
        x[2:] = np.abs(rng.standard_normal((2, 4, C))) * 0.01
        x[2:, :, 0] = 1.0
        xs.append(x)
    cal = calibrate_thresholds(net, xs, 0.02, settings=redy.RedySettings(subsample_ratio=1.0))
    assert cal.feasible
    ranges = calibrate_ranges(net, xs)
    s = redy.RedySettings(subsample_ratio=1.0, thresholds=cal.thresholds)
    bits = forward_quantized(net, xs[0], ranges, "redy", s).decisions[0].bits.reshape(4, 4)
    assert np.all(bits[:2] <= 5)
    assert np.all(bits[2:] >= 7)


def test_collect_group_stats_skips_shallow_layers():
    net = synthetic_network(0, size=8, channels=(3, 8, 8), classes=4)
    xs = random_inputs(2, net.input_shape, 0)
    du, err, layers = collect_group_stats(net, xs, calibrate_ranges(net, xs), redy.RedySettings())
    assert set(layers.tolist()) <= {1, 3} and 0 not in layers
    assert du.shape[0] == err.shape[0] == layers.shape[0]


def test_share_matching_reproduces_shares():
    rng = np.random.default_rng(1)
    du = rng.uniform(0, 1.75, 1000)
    shares = np.array([0.1, 0.1, 0.2, 0.2, 0.2, 0.2])
    t = share_matched_thresholds(du, shares, 8)
    assert np.allclose(bit_shares(du, t, 8), shares)
