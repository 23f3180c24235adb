"""Simulator for ReRAM crossbar CNN accelerators with dynamic per-group activation precision."""
from .accel import (ChipConfig, EnergyModel, build_floorplan, estimate_energy,
                    estimate_pipeline)
from .calibration import calibrate_ranges, calibrate_thresholds
from .cnn import LayerSpec, Network, forward_float, forward_quantized, map_network
from .config import ConfigError, RunConfig, load_config
from .counters import ActivityCounters
from .crossbar import CrossbarConfig, adc_sample, mvm_bit_serial, program_weights
from .quant import QuantParams, ValueRange, dequantize, rrmse, uniform_quantize
from .redy import (HistogramConfig, PrecisionThresholds, RedySettings, compute_histogram,
                   decide_precision, deviation_from_uniform, precision_variation,
                   random_precision_baseline, redy_quantize_group)
from .tensor_io import ModelError, load_model, read_tensor, save_model, write_tensor

__version__ = "0.1.0"
