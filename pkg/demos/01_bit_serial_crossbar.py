"""Weights live in ReRAM cells, inputs arrive one bit per cycle."""
import numpy as np

from redysim import ActivityCounters, CrossbarConfig, mvm_bit_serial, program_weights

rng = np.random.default_rng(0)
cfg = CrossbarConfig()          # 128x128 cells, 2 bits per cell, 8-bit weights
print(cfg)

w = rng.integers(-128, 128, size=(100, 10))
x = rng.integers(0, 256, size=100)
arrays = program_weights(w, cfg, signed=True)
print(f"\n{w.shape} signed weights -> {len(arrays)} array(s), "
      f"{arrays[0].occupied_cols} columns used (4 cell slices per weight)")

counters = ActivityCounters()
y = mvm_bit_serial(arrays[0], x, 8, cfg, counters)
print("\ncrossbar result:", y)
print("numpy x @ w    :", x @ w)
print("identical:", np.array_equal(y, x @ w))
print(counters.crossbar_activations, "activations,", counters.adc_conversions, "A/D conversions")

print("\nThe same inputs streamed at 5 bits cost 5/8 of the activity:")
small = x >> 3
c5 = ActivityCounters()
y5 = mvm_bit_serial(arrays[0], small, 5, cfg, c5)
print("5-bit result matches:", np.array_equal(y5, small @ w))
print(c5.crossbar_activations, "activations,", c5.adc_conversions, "A/D conversions")
