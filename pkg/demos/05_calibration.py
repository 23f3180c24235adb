"""Pick thresholds offline: the fewest bits that keep group error within a budget."""
from redysim import RedySettings, calibrate_ranges, calibrate_thresholds, forward_quantized
from redysim.fixtures import random_inputs, synthetic_network

net = synthetic_network(0)
calib = random_inputs(64, net.input_shape, seed=4)
ranges = calibrate_ranges(net, calib)
print("layer input ranges:")
for i, r in sorted(ranges.items()):
    print(f"  layer {i}: [{r.lo:.3f}, {r.hi:.3f}]")

for budget in (0.005, 0.02, 0.05):
    cal = calibrate_thresholds(net, calib, budget, ranges)
    print(f"\nbudget {budget:.1%}: thresholds {tuple(round(p, 3) for p in cal.thresholds.p)}")
    print(f"  feasible={cal.feasible}  avg bits {cal.average_bits:.2f}  "
          f"mean group RRMSE {cal.mean_rrmse:.4f}")

cal = calibrate_thresholds(net, calib, 0.02, ranges)
settings = RedySettings(thresholds=cal.thresholds)
held_out = random_inputs(50, net.input_shape, seed=5)
agree = sum(
    forward_quantized(net, x, ranges, "static8", settings).output.argmax()
    == forward_quantized(net, x, ranges, "redy", settings).output.argmax()
    for x in held_out)
print(f"\ntop-class agreement with static 8-bit on held-out inputs: {agree}/{len(held_out)}")
