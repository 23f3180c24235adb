"""Histogram, deviation from uniform (DU) and the bitwidth decision."""
import numpy as np

from redysim import (HistogramConfig, PrecisionThresholds, ValueRange, compute_histogram,
                     decide_precision, redy_quantize_group)

rng = np.random.default_rng(2)
layer_range = ValueRange(0.0, 4.0)
hcfg = HistogramConfig.for_range(layer_range, bins=8, subsample_ratio=1.0)
thresholds = PrecisionThresholds()
print("thresholds p1..p5:", thresholds.p)

groups = {
    "uniform": rng.uniform(0, 4, 256),
    "gaussian": np.clip(rng.normal(2, 0.6, 256), 0, 4),
    "relu-like": np.maximum(rng.normal(0, 1, 256), 0),
    "constant": np.full(256, 1.3),
}
print(f"\n{'group':<10} {'histogram':<42} {'DU':>6} bits")
for name, g in groups.items():
    stats = compute_histogram(g, hcfg)
    d = decide_precision(stats.du, g.size, thresholds)
    print(f"{name:<10} {str(stats.hist):<42} {stats.du:6.3f} {d.bitwidth}")

print("\nA 10% strided subsample gives a cheaper, noisier estimate:")
sub = HistogramConfig.for_range(layer_range, bins=8, subsample_ratio=0.1)
for name, g in groups.items():
    print(f"{name:<10} DU {compute_histogram(g, sub).du:.3f}")

print("\nGroups shallower than the bin count always stay at 8 bits:")
codes, d = redy_quantize_group(rng.uniform(0, 4, 3), layer_range, thresholds)
print("depth 3 ->", d.bitwidth, "bits, codes", codes)
