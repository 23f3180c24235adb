"""``redysim`` command line: fixture, calibrate, run, compare, sweep.

Exit codes: 0 success, 2 configuration error (including missing
calibration), 3 model or tensor error.
"""
import argparse
import glob
import json
import sys
import warnings
from pathlib import Path

from . import accel, calibration, report, runner
from .cnn import map_network
from .config import ConfigError, POLICY_NAMES, calibration_patch, load_config
from .fixtures import random_inputs, synthetic_network
from .redy import EXACT, EXPONENT
from .tensor_io import ModelError, load_model, read_tensor, save_model, write_tensor

EXIT_OK, EXIT_CONFIG, EXIT_MODEL = 0, 2, 3


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="PATH",
                        help="config file layered over the defaults (repeatable)")
    common.add_argument("--model", metavar="DIR", help="model directory with manifest.json")
    common.add_argument("--inputs", metavar="GLOB", help="RDTN input tensors")
    common.add_argument("--out", metavar="DIR", default="out")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--histogram-mode", choices=(EXACT, EXPONENT))

    p = argparse.ArgumentParser(prog="redysim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    fx = sub.add_parser("fixture", help="write a synthetic model and random inputs")
    fx.add_argument("--out", metavar="DIR", default="fixture")
    fx.add_argument("--seed", type=int, default=0)
    fx.add_argument("--n-inputs", type=int, default=8)
    fx.add_argument("--size", type=int, default=12)
    fx.add_argument("--channels", type=int, nargs=2, default=[32, 64], metavar=("C1", "C2"),
                    help="channels of the two conv layers")
    fx.add_argument("--kind", choices=("uniform", "congested"), default="uniform")

    cal = sub.add_parser("calibrate", parents=[common], help="ranges + thresholds to a config patch")
    cal.add_argument("--error-budget", type=float, default=0.02,
                     help="mean relative RMS error allowed per group")
    cal.add_argument("--ranges-only", action="store_true",
                     help="keep the configured thresholds")

    run = sub.add_parser("run", parents=[common], help="inference plus reports")
    run.add_argument("--policy", choices=POLICY_NAMES)

    sub.add_parser("compare", parents=[common], help="static8 vs redy vs random")

    sw = sub.add_parser("sweep", parents=[common], help="histogram bins / subsample sensitivity")
    sw.add_argument("--bins", type=int, nargs="+", default=[2, 4, 8, 16, 32])
    sw.add_argument("--ratios", type=float, nargs="+", default=[0.05, 0.1, 0.25, 0.5, 1.0])
    return p


def _load(args, require_ranges=True):
    cfg = load_config(args.config).with_overrides(
        seed=args.seed, threads=args.threads, histogram_mode=args.histogram_mode,
        policy=getattr(args, "policy", None))
    if not args.model:
        raise ConfigError("--model is required")
    network = load_model(args.model)
    pattern = args.inputs or cfg.inputs
    if not pattern:
        raise ConfigError("no inputs: pass --inputs or set [run] inputs")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ModelError(f"no input tensors match {pattern!r}")
    inputs = []
    for path in paths:
        x = read_tensor(path)
        if x.shape != tuple(network.input_shape):
            raise ModelError(f"{path}: shape {x.shape} does not match model input "
                             f"{tuple(network.input_shape)}")
        inputs.append((Path(path).stem, x))
    if require_ranges:
        missing = [i for i in network.compute_layers() if i not in cfg.ranges]
        if missing:
            raise ConfigError(f"missing calibration for layers {missing}; run `redysim calibrate`")
    return cfg, network, inputs


def cmd_fixture(args):
    out = Path(args.out)
    network = synthetic_network(args.seed, size=args.size, channels=(3, *args.channels))
    save_model(out / "model", network)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    xs = random_inputs(args.n_inputs, network.input_shape, args.seed + 1, args.kind)
    for i, x in enumerate(xs):
        write_tensor(out / "inputs" / f"input{i:04d}.rdtn", x)
    print(f"wrote model and {len(xs)} inputs to {out}")


def cmd_calibrate(args):
    cfg, network, inputs = _load(args, require_ranges=False)
    xs = [x for _, x in inputs]
    ranges = calibration.calibrate_ranges(network, xs)
    thresholds = None
    if not args.ranges_only:
        with warnings.catch_warnings():
            # reported below in the CLI's own words
            warnings.simplefilter("ignore", UserWarning)
            result = calibration.calibrate_thresholds(network, xs, args.error_budget, ranges,
                                                      cfg.redy)
        if not result.feasible:
            print(f"warning: no threshold tuple meets error budget {args.error_budget}; "
                  "all groups fall back to 8 bits", file=sys.stderr)
        thresholds = result.thresholds
        print(f"thresholds: {', '.join(f'{p:.4f}' for p in thresholds.p)}  "
              f"avg bits {result.average_bits:.3f}  mean rrmse {result.mean_rrmse:.5f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "calibration.ini"
    with open(path, "w") as fh:
        calibration_patch(ranges, thresholds).write(fh)
    print(f"wrote {path}")


def _write_outputs(run, out):
    (out / "outputs").mkdir(parents=True, exist_ok=True)
    for name, y in zip(run.names, run.outputs):
        write_tensor(out / "outputs" / f"{name}.rdtn", y)


def cmd_run(args):
    cfg, network, inputs = _load(args)
    fp = accel.build_floorplan(network, cfg.xbar, cfg.redy.bins, cfg.chip)
    result = runner.run_policy(network, inputs, cfg)
    out = Path(args.out)
    _write_outputs(result, out)
    jpath, tpath = report.emit_report(report.build_report(result, fp, cfg), out)
    print(tpath.read_text(), end="")


def cmd_compare(args):
    cfg, network, inputs = _load(args)
    fp = accel.build_floorplan(network, cfg.xbar, cfg.redy.bins, cfg.chip)
    mapped = map_network(network, cfg.xbar, cfg.redy.bins)
    runs = [runner.run_policy(network, inputs, cfg, p, mapped=mapped) for p in POLICY_NAMES]
    _, tpath = report.emit_report(report.build_compare(runs, fp, cfg), Path(args.out), "compare")
    print(tpath.read_text(), end="")


def cmd_sweep(args):
    cfg, network, inputs = _load(args)
    result = runner.sweep(network, inputs, cfg, tuple(args.bins), tuple(args.ratios))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema": report.SCHEMA, "schema_version": report.SCHEMA_VERSION, "kind": "sweep",
           **result}
    (out / "sweep.json").write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")
    text = report.render_sweep(result)
    (out / "sweep.txt").write_text(text)
    print(text, end="")


COMMANDS = {"fixture": cmd_fixture, "calibrate": cmd_calibrate, "run": cmd_run,
            "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, accel.CapacityError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
