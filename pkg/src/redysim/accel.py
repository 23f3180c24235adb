"""Accelerator-level accounting: floorplan, pipeline latency and energy."""
import math
from dataclasses import dataclass, field

from .counters import ActivityCounters
from .crossbar import CrossbarConfig
from .quant import MAX_BITS

# Table-4 figures of one precision unit
REDY_UNIT_AREA_UM2 = 768.8
REDY_UNIT_LATENCY_S = 2.19e-9
REDY_UNIT_STATIC_W = 9.3e-6
REDY_UNIT_DYNAMIC_W = 62.9e-6
CLOCK_HZ = 400e6


class CapacityError(ValueError):
    """A layer does not fit in the configured chip."""


@dataclass(frozen=True)
class ChipConfig:
    apus_per_pe: int = 4
    pes_per_tile: int = 4
    max_tiles: int = 0          # 0 = as many as the network needs


@dataclass
class LayerPlan:
    index: int
    mapping: str
    depth: int
    group_len: int
    kernels: int
    windows: int
    positions: int
    row_segments: int
    col_segments: int
    occupied_cols: int          # busiest array's occupied bitlines
    stride: int
    kernel_rs: tuple
    excluded: bool
    pes: int = 0
    tiles: int = 0
    first_tile: int = 0

    @property
    def arrays_per_group(self):
        return self.row_segments * self.col_segments

    @property
    def arrays(self):
        return self.positions * self.arrays_per_group


@dataclass
class Floorplan:
    layers: dict
    tiles_used: int
    memory_utilization: float
    xbar: CrossbarConfig
    chip: ChipConfig = field(default_factory=ChipConfig)

    @property
    def total_arrays(self):
        return sum(p.arrays for p in self.layers.values())

    def redy_units(self):
        return sum(redy_unit_count(p) for p in self.layers.values())


def build_floorplan(network, cfg=None, bins=8, chip=None):
    """Array counts per conv/fc layer, packed greedily into PEs and tiles."""
    cfg = cfg or CrossbarConfig()
    chip = chip or ChipConfig()
    shapes = network.shapes()
    layers = {}
    next_tile = 0
    programmed = 0
    for i in network.compute_layers():
        layer = network.layers[i]
        R, S, C, K = layer.kernel
        X, Y = shapes[i + 1][:2]
        excluded = C < bins
        group_len = R * S * C if excluded else C
        positions = 1 if excluded else R * S
        cells_per_row = K * cfg.slices
        plan = LayerPlan(
            i, "conventional" if excluded else "channelwise", C, group_len, K, X * Y, positions,
            math.ceil(group_len / cfg.rows), math.ceil(cells_per_row / cfg.cols),
            min(cfg.cols, cells_per_row), layer.stride if layer.kind == "conv" else 1,
            (R, S), excluded)
        plan.pes = math.ceil(plan.arrays / chip.apus_per_pe)
        plan.tiles = math.ceil(plan.pes / chip.pes_per_tile)
        plan.first_tile = next_tile
        next_tile += plan.tiles
        if chip.max_tiles and next_tile > chip.max_tiles:
            raise CapacityError(f"layer {i} needs tiles up to {next_tile}, chip has {chip.max_tiles}")
        programmed += positions * group_len * cells_per_row
        layers[i] = plan
    total_cells = sum(p.arrays for p in layers.values()) * cfg.rows * cfg.cols
    util = programmed / total_cells if total_cells else 0.0
    return Floorplan(layers, next_tile, util, cfg, chip)


def redy_unit_count(plan):
    """Precision units a layer needs to keep up: stride x window size (0 if excluded)."""
    if plan.excluded:
        return 0
    R, S = plan.kernel_rs
    return plan.stride * R * S


def baseline_counters(floorplan, n_inputs=1):
    """Counters of a static 8-bit run, derived from the floorplan alone."""
    c = ActivityCounters()
    for i, p in floorplan.layers.items():
        planes = n_inputs * p.windows * p.positions * MAX_BITS
        c.add(i, crossbar_activations=planes * p.arrays_per_group,
              adc_conversions=planes * p.arrays_per_group * floorplan.xbar.cols,
              streamed_bits=planes * p.group_len)
    return c


def activity_reduction(counters, baseline, field_name="crossbar_activations"):
    base = baseline.total(field_name)
    return 1.0 - counters.total(field_name) / base if base else 0.0


@dataclass
class PipelineEstimate:
    latency: dict               # layer -> cycles with the given bitwidths
    baseline_latency: dict      # layer -> cycles at 8 bits
    bottleneck: int
    baseline_bottleneck: int
    clock_hz: float = CLOCK_HZ

    @property
    def cycles_per_input(self):
        return self.latency[self.bottleneck] if self.latency else 0.0

    @property
    def throughput(self):
        """Inputs per cycle in steady state."""
        return 1.0 / self.cycles_per_input if self.cycles_per_input else 0.0

    @property
    def speedup(self):
        if not self.latency:
            return 1.0
        return self.baseline_latency[self.baseline_bottleneck] / self.latency[self.bottleneck]


def layer_cycles(plan, avg_bits, cfg):
    mux = math.ceil(plan.occupied_cols / cfg.adcs_per_xbar)
    return plan.windows * plan.positions * avg_bits * plan.arrays_per_group * mux


def estimate_pipeline(floorplan, per_layer_avg_bits, clock_hz=CLOCK_HZ):
    """Deep-pipeline latency: every layer runs concurrently, the slowest sets the pace.

    Layers excluded from dynamic precision keep their 8-bit latency.
    """
    lat, base = {}, {}
    for i, p in floorplan.layers.items():
        bits = MAX_BITS if p.excluded else per_layer_avg_bits.get(i, MAX_BITS)
        lat[i] = layer_cycles(p, bits, floorplan.xbar)
        base[i] = layer_cycles(p, MAX_BITS, floorplan.xbar)
    # ties resolve to the earliest layer
    bottleneck = max(lat, key=lambda i: (lat[i], -i)) if lat else None
    base_bottleneck = max(base, key=lambda i: (base[i], -i)) if base else None
    return PipelineEstimate(lat, base, bottleneck, base_bottleneck, clock_hz)


@dataclass(frozen=True)
class EnergyModel:
    e_xbar_event: float = 3.0e-11       # J per bit plane applied to one 128x128 array
    e_adc_conversion: float = 1.0e-12   # J per 5-bit conversion
    e_buffer_per_byte: float = 0.0
    chip_static_power: float = 0.05     # W
    redy_dynamic_power: float = REDY_UNIT_DYNAMIC_W
    redy_static_power: float = REDY_UNIT_STATIC_W
    redy_latency: float = REDY_UNIT_LATENCY_S
    redy_area_um2: float = REDY_UNIT_AREA_UM2
    clock_hz: float = CLOCK_HZ

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be positive")

    @property
    def redy_op_energy(self):
        return self.redy_dynamic_power * self.redy_latency


@dataclass
class EnergyReport:
    crossbar: float
    adc: float
    buffer: float
    redy_dynamic: float
    static: float
    normalized: float = None

    @property
    def dynamic(self):
        return self.crossbar + self.adc + self.buffer + self.redy_dynamic

    @property
    def total(self):
        return self.dynamic + self.static

    def as_dict(self):
        out = {"crossbar": self.crossbar, "adc": self.adc, "buffer": self.buffer,
               "redy_dynamic": self.redy_dynamic, "static": self.static,
               "dynamic": self.dynamic, "total": self.total}
        if self.normalized is not None:
            out["normalized"] = self.normalized
        return out


def estimate_energy(counters, floorplan, model, wall_cycles, baseline=None):
    """Event energy plus static power over ``wall_cycles``.

    Precision units draw static power only when the run made decisions.
    """
    seconds = wall_cycles / model.clock_hz
    units = floorplan.redy_units() if counters.group_decisions else 0
    report = EnergyReport(
        crossbar=counters.crossbar_activations * model.e_xbar_event,
        adc=counters.adc_conversions * model.e_adc_conversion,
        buffer=counters.streamed_bits / 8 * model.e_buffer_per_byte,
        redy_dynamic=(counters.histogram_samples + counters.group_decisions) * model.redy_op_energy,
        static=(model.chip_static_power + units * model.redy_static_power) * seconds,
    )
    if baseline is not None:
        report.normalized = report.total / baseline.total if baseline.total else 0.0
    return report
