"""Linear uniform quantization of activations and the RRMSE error metric.

Codes are unsigned: ``code = clamp(round(v * scale) - zero_point, 0, 2**n - 1)``
and ``v ~= (code + zero_point) / scale``.  The scale of an ``n``-bit grid
over a range is ``2**n / (hi - lo)``, so grids at different bitwidths nest
and a code at ``n`` bits becomes an 8-bit code by a left shift of
``8 - n`` bits.
"""
from dataclasses import dataclass

import numpy as np

MAX_BITS = 8


def round_half_away(x):
    """Round to nearest, ties away from zero (numpy's rint rounds ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ValueRange:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"invalid range: lo={self.lo} > hi={self.hi}")

    @property
    def width(self):
        # a constant activation (e.g. a dead layer) still needs a usable grid
        w = self.hi - self.lo
        return w if w > 0 else 1.0

    def union(self, other):
        return ValueRange(min(self.lo, other.lo), max(self.hi, other.hi))

    def with_zero(self):
        """Smallest range containing both this one and 0.0."""
        return ValueRange(min(self.lo, 0.0), max(self.hi, 0.0))

    def scaled(self, factor):
        return ValueRange(self.lo * factor, self.hi * factor)


@dataclass(frozen=True)
class QuantParams:
    bitwidth: int
    scale: float
    zero_point: int

    def __post_init__(self):
        if not 1 <= self.bitwidth <= MAX_BITS:
            raise ValueError(f"bitwidth must be in [1, {MAX_BITS}], got {self.bitwidth}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def clip_min(self):
        return 0

    @property
    def clip_max(self):
        return (1 << self.bitwidth) - 1

    @classmethod
    def for_range(cls, value_range, bitwidth):
        scale = 2.0 ** bitwidth / value_range.width
        zero_point = int(round_half_away(value_range.lo * scale))
        return cls(bitwidth, scale, zero_point)


def grid_params(bits, lo, width):
    """Vectorised (scale, zero_point) for arrays of bitwidths over one range."""
    scale = np.exp2(np.asarray(bits, dtype=np.float64)) / width
    zero = round_half_away(lo * scale).astype(np.int64)
    return scale, zero


def quantize_raw(values, scale, zero_point, qmax):
    """Broadcasting core of uniform_quantize; returns (codes, n_saturated)."""
    unclipped = round_half_away(np.asarray(values, dtype=np.float64) * scale) - zero_point
    codes = np.clip(unclipped, 0, qmax).astype(np.int64)
    saturated = int(np.count_nonzero((unclipped < 0) | (unclipped > qmax)))
    return codes, saturated


def uniform_quantize(values, params, return_saturation=False):
    codes, saturated = quantize_raw(values, params.scale, params.zero_point, params.clip_max)
    if return_saturation:
        return codes, saturated
    return codes


def dequantize(codes, params):
    return (np.asarray(codes, dtype=np.float64) + params.zero_point) / params.scale


def rrmse(reference, approx):
    """Root mean squared error relative to the RMS of ``reference`` (a fraction)."""
    ref = np.asarray(reference, dtype=np.float64).ravel()
    app = np.asarray(approx, dtype=np.float64).ravel()
    if ref.shape != app.shape:
        raise ValueError(f"length mismatch: {ref.size} vs {app.size}")
    denom = np.sqrt(np.mean(ref ** 2)) if ref.size else 0.0
    if denom == 0:
        raise ValueError("undefined relative error: reference is all zero")
    return float(np.sqrt(np.mean((ref - app) ** 2)) / denom)


def roundtrip(values, value_range, bitwidth):
    """Quantize then dequantize ``values`` on the ``bitwidth`` grid of ``value_range``."""
    params = QuantParams.for_range(value_range, bitwidth)
    return dequantize(uniform_quantize(values, params), params)
