"""INI run configuration: accelerator, precision-unit and run sections.

Files are layered over the packaged defaults; a ``[calibration]`` section
(written by ``redysim calibrate``) holds per-layer input ranges.
"""
import configparser
from dataclasses import dataclass, field, replace
from importlib import resources

from .accel import ChipConfig, EnergyModel
from .crossbar import CrossbarConfig
from .quant import ValueRange
from .redy import PrecisionThresholds, RedySettings

SCHEMA = {
    "accelerator": {
        "rows": int, "cols": int, "cell_bits": int, "weight_bits": int, "adc_bits": int,
        "adcs_per_xbar": int, "adc_mode": str, "frequency_hz": float,
        "apus_per_pe": int, "pes_per_tile": int, "max_tiles": int,
        "e_xbar_event": float, "e_adc_conversion": float, "e_buffer_per_byte": float,
        "chip_static_power": float, "redy_dynamic_power": float, "redy_static_power": float,
        "redy_latency": float, "redy_area_um2": float,
    },
    "redy": {"bins": int, "subsample_ratio": float, "thresholds": "floats",
             "histogram_mode": str},
    "run": {"policy": str, "seed": int, "threads": int, "inputs": str},
    "calibration": None,    # free-form: layer.<index> = lo, hi
}
POLICY_NAMES = ("static8", "redy", "random")


class ConfigError(ValueError):
    """Unreadable config or a violated invariant; the message names it."""


@dataclass
class RunConfig:
    xbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    chip: ChipConfig = field(default_factory=ChipConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)
    redy: RedySettings = field(default_factory=RedySettings)
    policy: str = "redy"
    seed: int = 0
    threads: int = 1
    inputs: str = ""
    ranges: dict = field(default_factory=dict)

    def with_overrides(self, **kw):
        """Copy with run-section fields and/or ``histogram_mode`` replaced."""
        mode = kw.pop("histogram_mode", None)
        out = replace(self, **{k: v for k, v in kw.items() if v is not None})
        if mode is not None:
            try:
                out.redy = replace(out.redy, mode=mode)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if out.policy not in POLICY_NAMES:
            raise ConfigError(f"policy must be one of {POLICY_NAMES}, got {out.policy!r}")
        if out.threads < 1:
            raise ConfigError("threads must be >= 1")
        return out


def _parse(value, kind, where):
    try:
        if kind == "floats":
            return tuple(float(v) for v in value.split(","))
        if kind is int:
            return int(float(value)) if float(value).is_integer() else int(value)
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {value!r}") from exc


def read_parser(paths=()):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    default = resources.files("redysim").joinpath("defaults.ini").read_text()
    parser.read_string(default, source="defaults.ini")
    for path in paths:
        try:
            with open(path) as fh:
                parser.read_file(fh, source=str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    return parser


def load_config(paths=()):
    parser = read_parser(paths)
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        keys = SCHEMA[section]
        if keys is None:
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[(section, key)] = _parse(raw, keys[key], f"[{section}] {key}")

    def pick(section, *names):
        return {n: values[(section, n)] for n in names if (section, n) in values}

    a = "accelerator"
    try:
        xbar = CrossbarConfig(**pick(a, "rows", "cols", "cell_bits", "weight_bits", "adc_bits",
                                     "adcs_per_xbar", "adc_mode"))
        chip = ChipConfig(**pick(a, "apus_per_pe", "pes_per_tile", "max_tiles"))
        energy = EnergyModel(clock_hz=values[(a, "frequency_hz")],
                             **pick(a, "e_xbar_event", "e_adc_conversion", "e_buffer_per_byte",
                                    "chip_static_power", "redy_dynamic_power",
                                    "redy_static_power", "redy_latency", "redy_area_um2"))
        settings = RedySettings(values[("redy", "bins")], values[("redy", "subsample_ratio")],
                                PrecisionThresholds(values[("redy", "thresholds")]),
                                values[("redy", "histogram_mode")])
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc

    ranges = {}
    if parser.has_section("calibration"):
        for key, raw in parser.items("calibration"):
            prefix, _, idx = key.partition(".")
            if prefix != "layer" or not idx.isdigit():
                raise ConfigError(f"unknown key {key!r} in [calibration]")
            bounds = _parse(raw, "floats", f"[calibration] {key}")
            if len(bounds) != 2:
                raise ConfigError(f"[calibration] {key}: expected 'lo, hi'")
            try:
                ranges[int(idx)] = ValueRange(*bounds)
            except ValueError as exc:
                raise ConfigError(f"[calibration] {key}: {exc}") from exc

    cfg = RunConfig(xbar, chip, energy, settings, ranges=ranges,
                    **{k: values[("run", k)] for k in ("policy", "seed", "threads", "inputs")
                       if ("run", k) in values})
    return cfg.with_overrides()


def calibration_patch(ranges, thresholds=None):
    """ConfigParser holding calibrated ranges (and thresholds) to layer over a config."""
    parser = configparser.ConfigParser()
    if thresholds is not None:
        parser["redy"] = {"thresholds": ", ".join(repr(float(p)) for p in thresholds.p)}
    parser["calibration"] = {f"layer.{i}": f"{r.lo!r}, {r.hi!r}" for i, r in sorted(ranges.items())}
    return parser
