"""Functional model of bit-serial dot products on multi-bit ReRAM crossbars.

Weights are split into ``cell_bits`` slices over consecutive columns (most
significant slice first); inputs are applied one bit plane at a time and
column sums are recombined by shift-and-add over slices and planes.
"""
from dataclasses import dataclass

import numpy as np

from .quant import MAX_BITS

ADC_MODES = ("ideal", "clip", "quantize")


@dataclass(frozen=True)
class CrossbarConfig:
    rows: int = 128
    cols: int = 128
    cell_bits: int = 2
    weight_bits: int = 8
    adc_bits: int = 5
    adcs_per_xbar: int = 16
    adc_mode: str = "ideal"

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rows and cols must be positive")
        if self.cell_bits <= 0 or self.weight_bits % self.cell_bits:
            raise ValueError(f"weight_bits={self.weight_bits} not divisible by cell_bits={self.cell_bits}")
        if self.adc_mode not in ADC_MODES:
            raise ValueError(f"adc_mode must be one of {ADC_MODES}, got {self.adc_mode!r}")
        if self.adcs_per_xbar <= 0 or self.adc_bits <= 0:
            raise ValueError("adc_bits and adcs_per_xbar must be positive")

    @property
    def slices(self):
        return self.weight_bits // self.cell_bits

    @property
    def weight_offset(self):
        """Offset-binary bias for signed weights."""
        return 1 << (self.weight_bits - 1)

    @property
    def full_scale(self):
        return self.rows * ((1 << self.cell_bits) - 1)


@dataclass(frozen=True)
class ProgrammedArray:
    """One physical crossbar.

    ``cells`` is rows x cols; ``column_map[j] = (kernel, slice)`` for the
    occupied columns.  The array holds input rows ``row_start`` to
    ``row_start + occupied_rows`` of the mapped weight matrix.
    """

    cells: np.ndarray
    column_map: tuple
    occupied_rows: int
    row_start: int
    n_kernels: int
    offset: int = 0
    combine: np.ndarray = None
    # kernels whose most significant slice lives here; the digital offset
    # correction is applied once per kernel, on this array
    offset_kernels: np.ndarray = None

    @property
    def occupied_cols(self):
        return len(self.column_map)


def combine_matrix(column_map, cfg, n_kernels):
    """(cols, n_kernels) matrix folding slice columns into kernel sums."""
    m = np.zeros((cfg.cols, n_kernels))
    for j, (k, s) in enumerate(column_map):
        m[j, k] = float(1 << (cfg.cell_bits * (cfg.slices - 1 - s)))
    return m


def weight_slices(codes, cell_bits, n_slices):
    """Split unsigned codes into base-2**cell_bits digits, most significant first."""
    codes = np.asarray(codes, dtype=np.int64)
    mask = (1 << cell_bits) - 1
    shifts = cell_bits * np.arange(n_slices - 1, -1, -1)
    return (codes[..., None] >> shifts) & mask


def program_weights(weights, cfg, signed=False):
    """Map a (depth, K) integer weight matrix onto a grid of crossbars.

    Rows split every ``cfg.rows`` inputs, columns every ``cfg.cols`` cells;
    arrays are returned row segment major.  Signed codes are stored with an
    offset of 2**(weight_bits - 1).
    """
    w = np.asarray(weights)
    if w.ndim == 1:
        w = w[:, None]
    if not np.issubdtype(w.dtype, np.integer):
        if not np.all(w == np.round(w)):
            raise ValueError("weight codes must be integers")
    w = w.astype(np.int64)
    offset = cfg.weight_offset if signed else 0
    lo, hi = -offset, (1 << cfg.weight_bits) - 1 - offset
    if w.size and (w.min() < lo or w.max() > hi):
        raise ValueError(f"weight code out of range [{lo}, {hi}]")
    depth, n_kernels = w.shape
    cells_all = weight_slices(w + offset, cfg.cell_bits, cfg.slices).reshape(depth, -1)
    col_ids = [(k, s) for k in range(n_kernels) for s in range(cfg.slices)]

    arrays = []
    for r0 in range(0, depth, cfg.rows):
        r1 = min(r0 + cfg.rows, depth)
        for c0 in range(0, len(col_ids), cfg.cols):
            c1 = min(c0 + cfg.cols, len(col_ids))
            cells = np.zeros((cfg.rows, cfg.cols), dtype=np.int64)
            cells[: r1 - r0, : c1 - c0] = cells_all[r0:r1, c0:c1]
            cmap = tuple(col_ids[c0:c1])
            anchors = np.zeros(n_kernels, dtype=bool)
            anchors[[k for k, sl in cmap if sl == 0]] = True
            arrays.append(ProgrammedArray(cells, cmap, r1 - r0, r0, n_kernels, offset,
                                          combine_matrix(cmap, cfg, n_kernels), anchors))
    return arrays


def adc_sample(column_sum, cfg):
    """Digitise a bitline sum (scalar or array) according to ``cfg.adc_mode``.

    ``quantize`` returns the reconstructed (real-valued) level.
    """
    s = np.asarray(column_sum)
    if cfg.adc_mode == "ideal":
        out = s
    elif cfg.adc_mode == "clip":
        out = np.minimum(s, (1 << cfg.adc_bits) - 1)
    else:
        levels = (1 << cfg.adc_bits) - 1
        full = cfg.full_scale
        level = np.floor(s * levels / full + 0.5)
        out = level * full / levels
    return out if out.ndim else out.item()


def _bit_planes(codes, n_bits):
    """(n_bits, ...) array of bit planes, plane t holding bit t."""
    codes = np.asarray(codes, dtype=np.int64)
    shifts = np.arange(n_bits).reshape((-1,) + (1,) * codes.ndim)
    return (codes[None] >> shifts) & 1


def mvm_bit_serial(array, codes, bits, cfg, counters=None, layer=0, signed_inputs=False):
    """Dot products of one n-bit input vector with the weights on one array.

    Returns a length ``array.n_kernels`` integer vector (zeros for kernels not
    stored on this array).  Signed inputs are streamed in two's complement,
    the top plane carrying weight -2**(n-1).
    """
    codes = np.asarray(codes, dtype=np.int64).ravel()
    if codes.size > cfg.rows:
        raise ValueError(f"input length {codes.size} exceeds {cfg.rows} rows")
    out = mvm_batch(array, codes[None, :], np.asarray([bits]), cfg, counters, layer,
                    signed_inputs)[0]
    if cfg.adc_mode == "quantize":
        return out
    return out.astype(np.int64)


def mvm_batch(array, codes, bits, cfg, counters=None, layer=0, signed_inputs=False):
    """Vectorised mvm_bit_serial over many input vectors.

    ``codes`` is (P, n_rows) with n_rows <= rows; ``bits[p]`` is the stream
    length of vector p.  Codes must fit in their bitwidth.
    """
    codes = np.asarray(codes, dtype=np.int64)
    bits = np.broadcast_to(np.asarray(bits, dtype=np.int64), codes.shape[:1])
    n_rows = codes.shape[1]
    if n_rows > cfg.rows:
        raise ValueError(f"input length {n_rows} exceeds {cfg.rows} rows")
    if signed_inputs:
        lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    else:
        lo, hi = np.zeros_like(bits), (1 << bits) - 1
    if codes.size and (np.any(codes < lo[:, None]) or np.any(codes > hi[:, None])):
        raise ValueError("input code does not fit its bitwidth")
    if signed_inputs:
        codes_u = codes & ((1 << bits) - 1)[:, None]
    else:
        codes_u = codes
    n_planes = int(bits.max()) if bits.size else 0
    n_planes = max(n_planes, 1)
    if n_planes > MAX_BITS:
        raise ValueError(f"bitwidth above {MAX_BITS}")

    planes = _bit_planes(codes_u, n_planes).astype(np.float64)        # (T, P, n_rows)
    col_sums = planes @ array.cells[:n_rows].astype(np.float64)     # (T, P, cols)
    col_sums = adc_sample(np.rint(col_sums).astype(np.int64), cfg)
    per_kernel = np.asarray(col_sums, dtype=np.float64) @ array.combine
    weights = np.exp2(np.arange(n_planes))[:, None] * np.ones(len(bits))
    if signed_inputs:
        weights[bits - 1, np.arange(len(bits))] *= -1
    result = (per_kernel * weights[:, :, None]).sum(axis=0)         # (P, K)
    if array.offset:
        # digital correction from the input popcount of every plane
        result -= (array.offset * codes.sum(axis=1, dtype=np.float64)[:, None]
                   * array.offset_kernels)
    if counters is not None:
        total_bits = int(bits.sum())
        counters.add(layer, crossbar_activations=total_bits,
                     adc_conversions=total_bits * cfg.cols,
                     streamed_bits=total_bits * n_rows)
    if cfg.adc_mode == "quantize":
        return result
    return np.rint(result).astype(np.int64)


def mvm_arrays(arrays, codes, bits, cfg, counters=None, layer=0, signed_inputs=False):
    """Sum of mvm_batch over the arrays holding one mapped weight matrix."""
    codes = np.asarray(codes, dtype=np.int64)
    total = None
    for arr in arrays:
        part = mvm_batch(arr, codes[:, arr.row_start: arr.row_start + arr.occupied_rows],
                         bits, cfg, counters, layer, signed_inputs)
        total = part if total is None else total + part
    return total


def rescale_partial_sum(value, group_bits, max_bits=MAX_BITS):
    """Move a partial sum from a ``group_bits`` grid onto the ``max_bits`` grid."""
    group_bits = np.asarray(group_bits)
    if np.any(group_bits < 1) or np.any(group_bits > max_bits):
        raise ValueError(f"group_bits must be in [1, {max_bits}]")
    out = np.left_shift(np.asarray(value, dtype=np.int64), max_bits - group_bits)
    return out if out.ndim else int(out)
