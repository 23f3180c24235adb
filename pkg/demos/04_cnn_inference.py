"""A small CNN run three ways: float, static 8-bit, and per-group dynamic."""
import numpy as np

from redysim import RedySettings, calibrate_ranges, forward_float, forward_quantized, map_network
from redysim.fixtures import random_inputs, synthetic_network

net = synthetic_network(0, size=12, channels=(3, 32, 64), classes=10)
for i, layer in enumerate(net.layers):
    print(i, layer.kind, getattr(layer.weights, "shape", ""))

xs = random_inputs(16, net.input_shape, seed=3)
ranges = calibrate_ranges(net, xs)
mapped = map_network(net)
print("\nmapping per compute layer:", {i: m.mapping for i, m in mapped.items()})

settings = RedySettings(subsample_ratio=1.0)
x = xs[0]
ref = forward_float(net, x)
q8 = forward_quantized(net, x, ranges, "static8", settings, mapped=mapped)
qr = forward_quantized(net, x, ranges, "redy", settings, mapped=mapped)
print("\nfloat   :", np.round(ref, 3))
print("static8 :", np.round(q8.output, 3))
print("dynamic :", np.round(qr.output, 3))

for d in qr.decisions:
    values, counts = np.unique(d.bits, return_counts=True)
    print(f"layer {d.layer}: depth {d.depth:3d}, excluded={d.excluded}, bits",
          dict(zip(values.tolist(), counts.tolist())))
print("\nactivations: static8", q8.counters.crossbar_activations,
      " dynamic", qr.counters.crossbar_activations)
