"""Per-group dynamic precision selection.

A group is the vector of activations sharing one kernel offset (r, s) over
all input channels of a window.  Its histogram over the layer range is
compared with a flat histogram; the mean absolute deviation (DU) picks the
bitwidth through five descending thresholds.
"""
import math
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .quant import MAX_BITS, QuantParams, uniform_quantize

MIN_BITS = 3
EXACT = "exact"
EXPONENT = "exponent"
HISTOGRAM_MODES = (EXACT, EXPONENT)

# smallest normal float32; keeps log2 finite for an edge at 0.0
_EXP_EPS = 2.0 ** -126


def max_deviation(bins):
    """DU of a histogram with every sample in a single bin."""
    return 2.0 * (bins - 1) / bins


@dataclass(frozen=True)
class HistogramConfig:
    bins: int = 8
    boundaries: tuple = ()
    exponent_boundaries: tuple = ()
    subsample_ratio: float = 0.10

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if not 0 < self.subsample_ratio <= 1:
            raise ValueError(f"subsample_ratio must be in (0, 1], got {self.subsample_ratio}")
        for name in ("boundaries", "exponent_boundaries"):
            edges = getattr(self, name)
            if len(edges) != self.bins - 1:
                raise ValueError(f"{name} needs {self.bins - 1} entries, got {len(edges)}")
        if np.any(np.diff(self.boundaries) <= 0):
            raise ValueError("boundaries must be strictly ascending")
        if np.any(np.diff(self.exponent_boundaries) < 0):
            raise ValueError("exponent_boundaries must be non-decreasing")

    @classmethod
    def for_range(cls, value_range, bins=8, subsample_ratio=0.10):
        """Equal-width bins over the layer range, plus their exponent thresholds."""
        edges = value_range.lo + value_range.width * np.arange(1, bins) / bins
        exps = np.floor(np.log2(np.maximum(np.abs(edges), _EXP_EPS))).astype(int)
        # |edge| is not monotone when the range straddles zero
        exps = np.maximum.accumulate(exps)
        return cls(bins, tuple(float(e) for e in edges), tuple(int(e) for e in exps),
                   subsample_ratio)


@dataclass(frozen=True)
class GroupStats:
    hist: tuple
    sampled_count: int

    @property
    def bins(self):
        return len(self.hist)

    @property
    def ed(self):
        return self.sampled_count / self.bins

    @property
    def du(self):
        return deviation_from_uniform(self)


@dataclass(frozen=True)
class PrecisionThresholds:
    """Descending DU cut points p1 > ... > p5 (8 bits above p1, 3 bits at or below p5)."""

    p: tuple = (1.40, 1.10, 0.80, 0.55, 0.35)

    def __post_init__(self):
        if len(self.p) != 5:
            raise ValueError(f"need exactly five thresholds, got {len(self.p)}")
        if any(a <= b for a, b in zip(self.p, self.p[1:])):
            raise ValueError(f"thresholds must be strictly descending: {self.p}")

    def validate(self, bins):
        if not self.p[0] < max_deviation(bins):
            raise ValueError(f"p1={self.p[0]} must be below the maximum DU {max_deviation(bins)}")
        return self

    @classmethod
    def force_8bit(cls):
        # DU >= 0 always exceeds a negative p1
        return cls((-1.0, -2.0, -3.0, -4.0, -5.0))

    def rescaled(self, bins, reference_bins=8):
        """Same thresholds as fractions of the maximum DU, moved to another bin count."""
        f = max_deviation(bins) / max_deviation(reference_bins)
        return PrecisionThresholds(tuple(x * f for x in self.p))


@dataclass(frozen=True)
class PrecisionDecision:
    bitwidth: int
    du: float
    group_id: tuple = None


@dataclass
class LayerDecisions:
    """Decisions of one layer for one input, as (windows, groups) arrays.

    ``kernel`` is (R, S) for channel-wise groups; ``None`` marks a layer
    executed with whole-window groups (conventional mapping).
    """

    layer: int
    bits: np.ndarray
    du: np.ndarray
    window_shape: tuple
    kernel: tuple = None
    depth: int = 0
    excluded: bool = False

    def __iter__(self):
        X, Y = self.window_shape
        for p in range(self.bits.shape[0]):
            x, y = divmod(p, Y)
            for g in range(self.bits.shape[1]):
                if self.kernel is None:
                    rs = (None, None)
                else:
                    rs = divmod(g, self.kernel[1])
                yield PrecisionDecision(int(self.bits[p, g]), float(self.du[p, g]),
                                        (self.layer, x, y) + rs)

    def breakdown(self):
        return Counter({int(k): int(v) for k, v in zip(*np.unique(self.bits, return_counts=True))})


def subsample_indices(length, ratio):
    """Strided selection of ceil(length * ratio) channel indices.

    Takes every k-th index with k = round(1 / ratio); if that runs short, the
    stride becomes fractional (evenly spaced floor positions).
    """
    m = max(1, math.ceil(length * ratio - 1e-9))
    if m >= length:
        return np.arange(length)
    k = max(1, int(round(1.0 / ratio)))
    idx = np.arange(0, length, k)[:m]
    if idx.size < m:
        idx = (np.arange(m) * length) // m
    return idx


def bin_indices(values, cfg, mode=EXACT):
    values = np.asarray(values, dtype=np.float64)
    if mode == EXACT:
        return np.searchsorted(np.asarray(cfg.boundaries), values, side="right")
    if mode == EXPONENT:
        mant, exp = np.frexp(np.abs(values))
        exp = np.where(mant == 0, np.iinfo(np.int32).min, exp - 1)
        return np.searchsorted(np.asarray(cfg.exponent_boundaries), exp, side="right")
    raise ValueError(f"unknown histogram mode {mode!r}")


def histogram_batch(groups, cfg, mode=EXACT):
    """Histograms of many equal-depth groups: (N, depth) -> (N, bins) counts."""
    groups = np.asarray(groups, dtype=np.float64)
    n, depth = groups.shape
    sample = groups[:, subsample_indices(depth, cfg.subsample_ratio)]
    idx = bin_indices(sample, cfg, mode)
    flat = idx + cfg.bins * np.arange(n)[:, None]
    return np.bincount(flat.ravel(), minlength=n * cfg.bins).reshape(n, cfg.bins)


def deviation_batch(hist):
    # sum|b*h - N| / (b*N) in integers: one rounding, so the extremes are exact
    hist = np.asarray(hist, dtype=np.int64)
    b = hist.shape[1]
    n = hist.sum(axis=1)
    return np.abs(b * hist - n[:, None]).sum(axis=1) / (b * n)


def decide_batch(du, depth, thresholds, bins):
    du = np.asarray(du, dtype=np.float64)
    if depth < bins:
        return np.full(du.shape, MAX_BITS, dtype=np.int64)
    p = np.asarray(thresholds.p)
    return MIN_BITS + (du[..., None] > p).sum(axis=-1)


def compute_histogram(group, cfg, mode=EXACT):
    group = np.asarray(group, dtype=np.float64).ravel()
    if group.size == 0:
        raise ValueError("empty group")
    hist = histogram_batch(group[None, :], cfg, mode)[0]
    return GroupStats(tuple(int(h) for h in hist), int(hist.sum()))


def deviation_from_uniform(stats):
    if stats.sampled_count <= 0:
        raise ValueError("empty group")
    return float(deviation_batch(np.asarray([stats.hist]))[0])


def decide_precision(du, depth, thresholds, bins=8, group_id=None):
    if not -1e-12 <= du <= max_deviation(bins) + 1e-12:
        raise ValueError(f"invalid DU {du} for {bins} bins")
    bits = int(decide_batch(du, depth, thresholds, bins))
    return PrecisionDecision(bits, float(du), group_id)


def redy_quantize_group(group, layer_range, thresholds, bins=8, subsample_ratio=0.10,
                        mode=EXACT, group_id=None):
    """Histogram -> DU -> bitwidth -> uniform codes for one activation group.

    Codes use the layer's quantization grid (the range widened to include
    zero), so every group of a layer shares one real-valued scale up to a
    power of two.
    """
    group = np.asarray(group, dtype=np.float64).ravel()
    if group.size < bins:
        decision = PrecisionDecision(MAX_BITS, float("nan"), group_id)
    else:
        cfg = HistogramConfig.for_range(layer_range, bins, subsample_ratio)
        du = compute_histogram(group, cfg, mode).du
        decision = decide_precision(du, group.size, thresholds, bins, group_id)
    params = QuantParams.for_range(layer_range.with_zero(), decision.bitwidth)
    return uniform_quantize(group, params), decision


def _decision_map(decisions):
    out = {}
    for d in decisions:
        if isinstance(d, LayerDecisions):
            out[("layer", d.layer)] = d
        else:
            out[d.group_id] = d
    return out


def precision_variation(run_a, run_b):
    """Fraction of groups whose bitwidth differs between two runs."""
    a, b = _decision_map(run_a), _decision_map(run_b)
    if a.keys() != b.keys():
        raise ValueError("decision sets cover different groups")
    changed = total = 0
    for key, da in a.items():
        db = b[key]
        if isinstance(da, LayerDecisions):
            if da.bits.shape != db.bits.shape:
                raise ValueError(f"layer {da.layer}: group grids differ")
            changed += int(np.count_nonzero(da.bits != db.bits))
            total += da.bits.size
        else:
            changed += da.bitwidth != db.bitwidth
            total += 1
    if total == 0:
        raise ValueError("no groups to compare")
    return changed / total


def random_precision_baseline(decisions, seed):
    """Shuffle bitwidths among the groups of each layer, keeping each layer's breakdown."""
    rng = np.random.default_rng(seed)
    decisions = list(decisions)
    if decisions and isinstance(decisions[0], LayerDecisions):
        out = []
        for d in decisions:
            bits = rng.permutation(d.bits.ravel()).reshape(d.bits.shape)
            out.append(replace(d, bits=bits))
        return out
    by_layer = {}
    for i, d in enumerate(decisions):
        layer = d.group_id[0] if d.group_id is not None else None
        by_layer.setdefault(layer, []).append(i)
    out = list(decisions)
    for idx in by_layer.values():
        bits = rng.permutation([decisions[i].bitwidth for i in idx])
        for i, bw in zip(idx, bits):
            out[i] = replace(decisions[i], bitwidth=int(bw))
    return out


@dataclass(frozen=True)
class RedySettings:
    """Histogram and threshold settings shared by every layer of a run."""

    bins: int = 8
    subsample_ratio: float = 0.10
    thresholds: PrecisionThresholds = PrecisionThresholds()
    mode: str = EXACT

    def __post_init__(self):
        if self.mode not in HISTOGRAM_MODES:
            raise ValueError(f"histogram mode must be one of {HISTOGRAM_MODES}, got {self.mode!r}")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if not 0 < self.subsample_ratio <= 1:
            raise ValueError(f"subsample_ratio must be in (0, 1], got {self.subsample_ratio}")
        self.thresholds.validate(self.bins)
