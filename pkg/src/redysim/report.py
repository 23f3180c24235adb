"""Run summaries as versioned JSON plus aligned text tables."""
import json
from collections import Counter
from pathlib import Path

from . import accel
from .runner import consecutive_variation

SCHEMA = "redysim-report"
SCHEMA_VERSION = 1
BIT_ROWS = (8, 7, 6, 5)


def breakdown(counts):
    """{bits: percent of groups}, highest bitwidth first."""
    total = sum(counts.values())
    if not total:
        return {}
    return {str(b): 100.0 * counts[b] / total for b in sorted(counts, reverse=True)}


def average_bitwidth(counts):
    total = sum(counts.values())
    return sum(b * n for b, n in counts.items()) / total if total else 0.0


def _rrmse_summary(entries):
    s = sum(e[0] for e in entries)
    n = sum(e[1] for e in entries)
    m = max((e[2] for e in entries), default=0.0)
    return {"mean": s / n if n else None, "max": m if n else None, "groups": n}


def summarize(run, floorplan, cfg):
    """Per-layer and total metrics of one policy run."""
    n_inputs = len(run.outputs)
    baseline = accel.baseline_counters(floorplan, n_inputs)
    counts = {}
    for per_input in run.decisions:
        for d in per_input:
            counts.setdefault(d.layer, Counter()).update(d.breakdown())
    avg = {i: average_bitwidth(c) for i, c in counts.items()}
    pipe = accel.estimate_pipeline(floorplan, avg, cfg.energy.clock_hz)
    base_pipe = accel.estimate_pipeline(floorplan, {}, cfg.energy.clock_hz)
    base_energy = accel.estimate_energy(baseline, floorplan, cfg.energy,
                                        n_inputs * base_pipe.cycles_per_input)
    energy = accel.estimate_energy(run.counters, floorplan, cfg.energy,
                                   n_inputs * pipe.cycles_per_input, base_energy)

    layers = []
    for i, plan in sorted(floorplan.layers.items()):
        c = counts.get(i, Counter())
        row = run.counters.per_layer.get(i, {})
        layers.append({
            "layer": i,
            "mapping": plan.mapping,
            "excluded": plan.excluded,
            "groups": sum(c.values()),
            "breakdown": breakdown(c),
            "average_bitwidth": avg.get(i, 0.0),
            "activity_reduction": 1.0 - row.get("crossbar_activations", 0)
            / baseline.per_layer[i]["crossbar_activations"] if n_inputs else 0.0,
            "arrays": plan.arrays,
            "redy_units": accel.redy_unit_count(plan),
            "latency_cycles": pipe.latency[i],
            "baseline_latency_cycles": pipe.baseline_latency[i],
            "counters": dict(row),
            "rrmse": _rrmse_summary([run.rrmse[i]] if i in run.rrmse else []),
            "saturation": run.saturation.get(i, 0),
        })

    total_counts = sum(counts.values(), Counter())
    total = {
        "groups": sum(total_counts.values()),
        "breakdown": breakdown(total_counts),
        "average_bitwidth": average_bitwidth(total_counts),
        "activity_reduction": accel.activity_reduction(run.counters, baseline),
        "adc_reduction": accel.activity_reduction(run.counters, baseline, "adc_conversions"),
        "counters": run.counters.as_dict()["total"],
        "baseline_counters": baseline.as_dict()["total"],
        "speedup": pipe.speedup,
        "bottleneck_layer": pipe.bottleneck,
        "energy": energy.as_dict(),
        "baseline_energy": base_energy.as_dict(),
        "normalized_energy": energy.normalized,
        "precision_variation": consecutive_variation(run.decisions),
        "rrmse": _rrmse_summary(list(run.rrmse.values())),
        "saturation": sum(run.saturation.values()),
        "memory_utilization": floorplan.memory_utilization,
        "redy_units": floorplan.redy_units(),
    }
    return {"policy": run.policy, "inputs": run.names, "layers": layers, "total": total}


def build_report(run, floorplan, cfg):
    return {"schema": SCHEMA, "schema_version": SCHEMA_VERSION, "config": _config_echo(cfg),
            **summarize(run, floorplan, cfg)}


def build_compare(runs, floorplan, cfg):
    return {"schema": SCHEMA, "schema_version": SCHEMA_VERSION, "kind": "compare",
            "config": _config_echo(cfg),
            "policies": {r.policy: summarize(r, floorplan, cfg) for r in runs}}


def _config_echo(cfg):
    return {"bins": cfg.redy.bins, "subsample_ratio": cfg.redy.subsample_ratio,
            "thresholds": list(cfg.redy.thresholds.p), "histogram_mode": cfg.redy.mode,
            "adc_mode": cfg.xbar.adc_mode, "seed": cfg.seed}


def _pct(v):
    return f"{v:.2f}%"


def _table(header, rows):
    widths = [max(len(str(r[j])) for r in [header] + rows) for j in range(len(header))]
    line = lambda r: "  ".join(str(v).ljust(w) if j == 0 else str(v).rjust(w)
                               for j, (v, w) in enumerate(zip(r, widths)))
    return "\n".join([line(header), "  ".join("-" * w for w in widths)] + [line(r) for r in rows])


def _precision_rows(columns):
    """Rows in the order of the published breakdown table."""
    rows = []
    for b in BIT_ROWS:
        rows.append([f"{b}-bits"] + [_pct(c["breakdown"].get(str(b), 0.0)) for c in columns])
    rows.append(["Equal or Less than 4-bits"]
                + [_pct(sum(v for k, v in c["breakdown"].items() if int(k) <= 4)) for c in columns])
    return rows


def _summary_rows(columns):
    return [
        ["Average Bitwidth"] + [f"{c['average_bitwidth']:.2f}-bits" for c in columns],
        ["Activity Reduction"] + [_pct(100 * c["activity_reduction"]) for c in columns],
    ]


def render_text(report):
    if report.get("kind") == "compare":
        names = list(report["policies"])
        cols = [report["policies"][n]["total"] for n in names]
        header = ["Numerical Precision"] + names
        rows = _precision_rows(cols) + _summary_rows(cols) + [
            ["Normalized Energy"] + [f"{c['normalized_energy']:.4f}" for c in cols],
            ["Speedup"] + [f"{c['speedup']:.3f}x" for c in cols],
        ]
        return _table(header, rows) + "\n"

    total = report["total"]
    cols = [l for l in report["layers"]]
    header = ["Numerical Precision"] + [f"L{l['layer']}" for l in cols] + ["Total"]
    rows = []
    if total["groups"]:
        rows = _precision_rows(cols + [total]) + _summary_rows(cols + [total])
    text = _table(header, rows) if rows else "(no conv/fc layers)"
    extra = [
        f"policy: {report['policy']}",
        f"normalized energy: {total['normalized_energy']:.4f}",
        f"speedup: {total['speedup']:.3f}x",
    ]
    if total["precision_variation"] is not None:
        extra.append(f"precision variation: {_pct(100 * total['precision_variation'])}")
    return text + "\n\n" + "\n".join(extra) + "\n"


def emit_report(report, out_dir, name="report"):
    """Write ``name.json`` and ``name.txt``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, tpath = out / f"{name}.json", out / f"{name}.txt"
    jpath.write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")
    tpath.write_text(render_text(report))
    return jpath, tpath


def render_sweep(result):
    header = ["axis", "value", "mode", "avg bits", "activity red.", "divergence"]
    rows = [[r["axis"], r["value"], r["mode"], f"{r['average_bitwidth']:.3f}",
             _pct(100 * r["activity_reduction"]), f"{r['divergence']:.4f}"] for r in result["rows"]]
    return _table(header, rows) + "\n"
