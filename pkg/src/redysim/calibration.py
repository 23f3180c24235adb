"""Offline calibration: per-layer activation ranges and the DU thresholds."""
import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from . import redy
from .cnn import CHANNELWISE, extract_groups, forward_float
from .quant import MAX_BITS, ValueRange, grid_params, quantize_raw

BITWIDTHS = tuple(range(redy.MIN_BITS, MAX_BITS + 1))


def calibrate_ranges(network, inputs):
    """Exact min/max of every conv/fc layer's input over all calibration inputs."""
    ranges = {}
    n = 0
    for x in inputs:
        n += 1
        trace = {}
        forward_float(network, x, trace)
        for i, act in trace.items():
            r = ValueRange(float(act.min()), float(act.max()))
            ranges[i] = ranges[i].union(r) if i in ranges else r
    if n == 0:
        raise ValueError("calibration needs at least one input")
    return ranges


def merge_ranges(a, b):
    """Union of two range tables (associative and commutative)."""
    out = dict(a)
    for i, r in b.items():
        out[i] = out[i].union(r) if i in out else r
    return out


def default_candidates(bins=8, steps=18):
    return tuple(float(v) for v in np.arange(1, steps) * redy.max_deviation(bins) / steps)


def group_errors(groups, value_range, bitwidths=BITWIDTHS):
    """RRMSE of each group (rows) at each bitwidth on the layer grid.

    Groups whose values are all zero are dropped; returns (errors, kept mask).
    """
    groups = np.asarray(groups, dtype=np.float64)
    grid = value_range.with_zero()
    ref = np.sqrt(np.mean(groups ** 2, axis=1))
    keep = ref > 0
    g = groups[keep]
    errs = np.empty((g.shape[0], len(bitwidths)))
    for j, n in enumerate(bitwidths):
        scale, zero = grid_params(n, grid.lo, grid.width)
        codes, _ = quantize_raw(g, scale, zero, (1 << n) - 1)
        deq = (codes + zero) / scale
        errs[:, j] = np.sqrt(np.mean((deq - g) ** 2, axis=1)) / ref[keep]
    return errs, keep


def collect_group_stats(network, inputs, ranges, settings):
    """DU, per-bitwidth RRMSE and layer index of every ReDy-eligible group in the float path."""
    dus, errs, layers = [], [], []
    for x in inputs:
        trace = {}
        forward_float(network, x, trace)
        for i, act in trace.items():
            layer = network.layers[i]
            if layer.kernel[2] < settings.bins:
                continue
            groups = extract_groups(act, layer, CHANNELWISE)
            flat = groups.reshape(-1, groups.shape[-1])
            hcfg = redy.HistogramConfig.for_range(ranges[i], settings.bins, settings.subsample_ratio)
            du = redy.deviation_batch(redy.histogram_batch(flat, hcfg, settings.mode))
            e, keep = group_errors(flat, ranges[i])
            dus.append(du[keep])
            errs.append(e)
            layers.append(np.full(e.shape[0], i))
    if not dus:
        return np.zeros(0), np.zeros((0, len(BITWIDTHS))), np.zeros(0, dtype=np.int64)
    return np.concatenate(dus), np.concatenate(errs), np.concatenate(layers)


@dataclass(frozen=True)
class ThresholdCalibration:
    thresholds: redy.PrecisionThresholds
    feasible: bool
    average_bits: float
    mean_rrmse: float


def search_thresholds(du, errors, error_budget, candidates, layers=None):
    """Grid search over descending 5-tuples drawn from ``candidates``.

    Minimises the average bitwidth subject to the mean group RRMSE of every
    layer staying within the budget (``layers`` gives each group's layer; all
    groups form one layer when omitted).  Ties go to the lexicographically
    smallest tuple (p1 first).
    """
    if not error_budget >= 0:
        raise ValueError("error budget must be non-negative")
    cands = np.array(sorted(set(candidates)))
    n = du.size
    if n == 0:
        raise ValueError("no eligible groups in the calibration set")
    layers = np.zeros(n, dtype=np.int64) if layers is None else np.asarray(layers)
    _, lid = np.unique(layers, return_inverse=True)
    n_layers = int(lid.max()) + 1
    J = cands.size + 1
    # interval j holds groups with cands[j-1] < du <= cands[j]
    interval = np.searchsorted(cands, du, side="left")
    n_j = np.bincount(interval, minlength=J)
    n_l = np.bincount(lid, minlength=n_layers)
    e_lj = np.zeros((n_layers, J, errors.shape[1]))
    np.add.at(e_lj, (lid, interval), errors)
    e_j = e_lj.sum(axis=0)
    rows = np.arange(J)

    best = None
    for combo in itertools.combinations(range(cands.size), 5):
        idx = np.array(combo)
        # p_i < du exactly when p_i's index is below the group's interval
        bits_j = redy.MIN_BITS + (idx[None, :] < rows[:, None]).sum(axis=1)
        col = bits_j - redy.MIN_BITS
        layer_err = e_lj[:, rows, col].sum(axis=1) / n_l
        if np.any(layer_err > error_budget):
            continue
        total_bits = int((n_j * bits_j).sum())
        p = tuple(float(cands[i]) for i in reversed(combo))
        key = (total_bits, p)
        if best is None or key < best[0]:
            best = (key, e_j[rows, col].sum() / n)
    if best is None:
        err8 = errors[:, -1].mean()
        warnings.warn(f"no threshold tuple meets RRMSE budget {error_budget}; forcing 8 bits")
        return ThresholdCalibration(redy.PrecisionThresholds.force_8bit(), False,
                                    float(MAX_BITS), float(err8))
    (total_bits, p), err = best
    return ThresholdCalibration(redy.PrecisionThresholds(p), True, total_bits / n, float(err))


def calibrate_thresholds(network, inputs, error_budget, ranges=None, settings=None,
                         candidates=None):
    settings = settings or redy.RedySettings()
    inputs = list(inputs)
    ranges = ranges if ranges is not None else calibrate_ranges(network, inputs)
    du, errors, layers = collect_group_stats(network, inputs, ranges, settings)
    cands = candidates if candidates is not None else default_candidates(settings.bins)
    return search_thresholds(du, errors, error_budget, cands, layers)


def bit_shares(du, thresholds, bins=8):
    """Fraction of eligible groups at each bitwidth 3..8 under ``thresholds``."""
    bits = redy.decide_batch(np.asarray(du), bins, thresholds, bins)
    return np.bincount(bits - redy.MIN_BITS, minlength=len(BITWIDTHS)) / max(du.size, 1)


def share_matched_thresholds(du, shares, bins):
    """Thresholds that split ``du`` into the given bitwidth shares (3..8 bits).

    Each cut sits midway between the neighbouring sorted DU values; ties fall
    to the lower bitwidth.  Cuts are nudged apart by 1e-12 so the tuple stays
    strictly descending.
    """
    d = np.sort(np.asarray(du, dtype=np.float64))
    n = d.size
    if n == 0:
        raise ValueError("no eligible groups to match")
    top = redy.max_deviation(bins)
    cum_high = np.cumsum(np.asarray(shares, dtype=np.float64)[::-1])  # share with bits >= 8, 7, ...
    p = []
    for k in range(5):
        c = n - int(round(cum_high[k] * n))
        if c <= 0:
            q = d[0] - 1.0
        elif c >= n:
            q = top
        else:
            q = 0.5 * (d[c - 1] + d[c])
        p.append(q - (k + 1) * 1e-12)
    return redy.PrecisionThresholds(tuple(p))
