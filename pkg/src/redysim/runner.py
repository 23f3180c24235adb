"""Batch execution of a policy over many inputs, plus the sensitivity sweep."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import accel, calibration, redy
from .cnn import forward_quantized, map_network
from .counters import ActivityCounters


@dataclass
class RunResult:
    policy: str
    names: list
    outputs: list
    decisions: list                 # per input, list of LayerDecisions
    counters: ActivityCounters
    saturation: dict = field(default_factory=dict)
    rrmse: dict = field(default_factory=dict)


def run_policy(network, inputs, cfg, policy=None, settings=None, mapped=None):
    """Run ``policy`` over ``inputs`` (a list of (name, array)) in input order.

    Inputs may run on ``cfg.threads`` threads; results are merged in input
    order so the outcome does not depend on the thread count.
    """
    policy = policy or cfg.policy
    settings = settings or cfg.redy
    missing = [i for i in network.compute_layers() if i not in cfg.ranges]
    if missing:
        raise KeyError(f"missing calibration for layers {missing}")
    mapped = mapped if mapped is not None else map_network(network, cfg.xbar, settings.bins)

    def one(item):
        idx, (_, x) = item
        seed = np.random.SeedSequence([cfg.seed, idx])
        return forward_quantized(network, x, cfg.ranges, policy, settings, cfg.xbar, mapped,
                                 seed=int(seed.generate_state(1)[0]))

    items = list(enumerate(inputs))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]

    out = RunResult(policy, [n for n, _ in inputs], [], [], ActivityCounters())
    for r in results:
        out.outputs.append(r.output)
        out.decisions.append(r.decisions)
        out.counters = out.counters.merge(r.counters)
        for k, v in r.saturation.items():
            out.saturation[k] = out.saturation.get(k, 0) + v
        for k, (s, n, m) in r.rrmse.items():
            s0, n0, m0 = out.rrmse.get(k, (0.0, 0, 0.0))
            out.rrmse[k] = (s0 + s, n0 + n, max(m0, m))
    return out


def consecutive_variation(decisions):
    """Share of group precisions that change between consecutive inputs (None if < 2 inputs)."""
    changed = total = 0
    for prev, cur in zip(decisions, decisions[1:]):
        n = sum(d.bits.size for d in cur)
        if n == 0:
            continue
        changed += round(redy.precision_variation(prev, cur) * n)
        total += n
    return changed / total if total else None


def average_bits(run):
    bits = {}
    for per_input in run.decisions:
        for d in per_input:
            s, n = bits.get(d.layer, (0, 0))
            bits[d.layer] = (s + int(d.bits.sum()), n + d.bits.size)
    return {k: s / n for k, (s, n) in bits.items()}


def sweep(network, inputs, cfg, bins_grid=(2, 4, 8, 16, 32), ratio_grid=(0.05, 0.1, 0.25, 0.5, 1.0)):
    """Histogram sensitivity: bins and subsample ratio against an exact reference.

    The reference is exact mode at the largest bin count with no subsampling.
    DU values from different bin counts are not on a common scale, so on the
    bins axis each bin count gets thresholds that reproduce the bitwidth
    shares of the configured settings on the float path; divergence then
    measures only how differently the coarser histogram ranks the groups.
    The ratio axis keeps the configured bins and thresholds.
    """
    base = cfg.redy
    mapped = map_network(network, cfg.xbar, base.bins)
    fp = accel.build_floorplan(network, cfg.xbar, base.bins, cfg.chip)
    baseline = accel.baseline_counters(fp, len(inputs))
    xs = [x for _, x in inputs]
    target = calibration.bit_shares(
        calibration.collect_group_stats(network, xs, cfg.ranges,
                                        replace(base, subsample_ratio=1.0, mode=redy.EXACT))[0],
        base.thresholds, base.bins)

    def matched(bins):
        s = replace(base, bins=bins, subsample_ratio=1.0, mode=redy.EXACT,
                    thresholds=redy.PrecisionThresholds.force_8bit())
        du = calibration.collect_group_stats(network, xs, cfg.ranges, s)[0]
        if du.size == 0:
            return s
        return replace(s, thresholds=calibration.share_matched_thresholds(du, target, bins))

    def execute(s):
        # the crossbar mapping stays fixed; layers shallower than the swept bin
        # count simply run at 8 bits
        return run_policy(network, inputs, cfg, "redy", s, mapped)

    ref_bins = max(bins_grid)
    reference = execute(matched(ref_bins))

    def row(axis, value, s):
        run = execute(s)
        div = np.mean([redy.precision_variation(a, b)
                       for a, b in zip(reference.decisions, run.decisions)])
        return {"axis": axis, "value": value, "mode": s.mode, "bins": s.bins,
                "subsample_ratio": s.subsample_ratio, "thresholds": list(s.thresholds.p),
                "average_bitwidth": _mean_bits(run),
                "activity_reduction": accel.activity_reduction(run.counters, baseline),
                "divergence": float(div)}

    rows = [row("bins", b, matched(b)) for b in bins_grid]
    rows += [row("subsample_ratio", r, replace(base, subsample_ratio=r)) for r in ratio_grid]
    return {"reference": {"bins": ref_bins, "subsample_ratio": 1.0, "mode": redy.EXACT},
            "target_shares": [float(v) for v in target], "rows": rows}


def _mean_bits(run):
    s = n = 0
    for per_input in run.decisions:
        for d in per_input:
            s += int(d.bits.sum())
            n += d.bits.size
    return s / n if n else 0.0
