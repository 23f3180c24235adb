"""How many bins and how large a subsample does the decision need?"""
from redysim import RedySettings, calibrate_ranges, report, runner
from redysim.config import RunConfig
from redysim.fixtures import random_inputs, synthetic_network

net = synthetic_network(0, size=12, channels=(32, 64, 64))
xs = random_inputs(6, net.input_shape, seed=8)
cfg = RunConfig(ranges=calibrate_ranges(net, xs), redy=RedySettings())
result = runner.sweep(net, [(str(i), x) for i, x in enumerate(xs)], cfg)
print("reference:", result["reference"])
print(report.render_sweep(result))
print("divergence = share of group bitwidths that differ from the reference")
