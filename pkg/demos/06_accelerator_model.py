"""Floorplan, pipeline speedup and energy for static vs dynamic precision."""
from redysim import EnergyModel, RedySettings, build_floorplan, calibrate_ranges, estimate_energy
from redysim import accel, runner
from redysim.config import RunConfig
from redysim.fixtures import random_inputs, synthetic_network

net = synthetic_network(0, size=12, channels=(3, 32, 64))
fp = build_floorplan(net)
print(f"{'layer':>5} {'mapping':>12} {'arrays':>6} {'units':>5}")
for i, plan in fp.layers.items():
    print(f"{i:5d} {plan.mapping:>12} {plan.arrays:6d} {accel.redy_unit_count(plan):5d}")
print(f"memory utilization {fp.memory_utilization:.2%}")

xs = random_inputs(8, net.input_shape, seed=6)
cfg = RunConfig(ranges=calibrate_ranges(net, xs), redy=RedySettings(subsample_ratio=1.0))
run = runner.run_policy(net, [(str(i), x) for i, x in enumerate(xs)], cfg)
base = accel.baseline_counters(fp, len(xs))
avg = runner.average_bits(run)
print("\naverage bits per layer:", {k: round(v, 2) for k, v in avg.items()})

pipe, pipe8 = accel.estimate_pipeline(fp, avg), accel.estimate_pipeline(fp, {})
print("latency per layer (cycles):", pipe.latency)
print(f"bottleneck layer {pipe.bottleneck}, speedup {pipe.speedup:.3f}x")

model = EnergyModel()
e8 = estimate_energy(base, fp, model, len(xs) * pipe8.cycles_per_input)
e = estimate_energy(run.counters, fp, model, len(xs) * pipe.cycles_per_input, e8)
print(f"\nactivity reduction {accel.activity_reduction(run.counters, base):.2%}")
print(f"normalized energy  {e.normalized:.4f}")
print(e)
