"""Small CNN engine: a float reference path and the fixed-point crossbar path.

Tensors are numpy arrays indexed ``[x, y, c]`` (width, height, channel, with
the channel innermost); conv kernels are ``[r, s, c, k]`` and FC weights
``[c, k]``.  A network is a linear chain of layers, where a layer may add
the output of an earlier layer before its activation function.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import redy
from .counters import ActivityCounters
from .crossbar import CrossbarConfig, mvm_arrays, program_weights, rescale_partial_sum
from .quant import MAX_BITS, grid_params, quantize_raw, round_half_away

COMPUTE_KINDS = ("conv", "fc")
LAYER_KINDS = COMPUTE_KINDS + ("pool_max", "pool_avg", "activation")
ACTIVATIONS = ("relu", "sigmoid", "none")
POLICIES = ("static8", "redy", "random")
CHANNELWISE = "channelwise"
CONVENTIONAL = "conventional"


@dataclass(eq=False)
class LayerSpec:
    kind: str
    weights: np.ndarray = None
    bias: np.ndarray = None
    stride: int = 1
    padding: int = 0
    activation: str = "none"
    size: int = 2
    skip_from: int = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind in COMPUTE_KINDS:
            if self.weights is None:
                raise ValueError(f"{self.kind} layer needs weights")
            want = 4 if self.kind == "conv" else 2
            if np.ndim(self.weights) != want:
                raise ValueError(f"{self.kind} weights must have rank {want}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")

    @property
    def kernel(self):
        """(R, S, C, K); an FC layer is a 1x1 convolution over the flattened input."""
        if self.kind == "fc":
            return (1, 1) + tuple(np.shape(self.weights))
        return tuple(np.shape(self.weights))

    def conv_weights(self):
        return np.asarray(self.weights, dtype=np.float64).reshape(self.kernel)


@dataclass
class Network:
    input_shape: tuple
    layers: list = field(default_factory=list)

    def shapes(self):
        """Input shape of every layer plus the output shape, validated."""
        shapes = [tuple(self.input_shape)]
        for i, layer in enumerate(self.layers):
            W, H, C = shapes[-1]
            if layer.kind == "conv":
                R, S, Cw, K = layer.kernel
                if Cw != C:
                    raise ValueError(f"layer {i}: kernel depth {Cw} != input channels {C}")
                X, rx = divmod(W - R + 2 * layer.padding, layer.stride)
                Y, ry = divmod(H - S + 2 * layer.padding, layer.stride)
                if rx or ry or X < 0 or Y < 0:
                    raise ValueError(f"layer {i}: output size is not integral for input {W}x{H}")
                out = (X + 1, Y + 1, K)
            elif layer.kind == "fc":
                Cw, K = np.shape(layer.weights)
                if Cw != W * H * C:
                    raise ValueError(f"layer {i}: fc expects {Cw} inputs, got {W * H * C}")
                out = (1, 1, K)
            elif layer.kind in ("pool_max", "pool_avg"):
                if layer.size > W or layer.size > H:
                    raise ValueError(f"layer {i}: pool larger than input")
                out = ((W - layer.size) // layer.stride + 1, (H - layer.size) // layer.stride + 1, C)
            else:
                out = (W, H, C)
            if layer.skip_from is not None:
                if not 0 <= layer.skip_from < i:
                    raise ValueError(f"layer {i}: skip_from must name an earlier layer")
                if shapes[layer.skip_from + 1] != out:
                    raise ValueError(f"layer {i}: skip shape {shapes[layer.skip_from + 1]} != {out}")
            shapes.append(out)
        return shapes

    def compute_layers(self):
        return [i for i, layer in enumerate(self.layers) if layer.kind in COMPUTE_KINDS]


def activate(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    return x


def pad(ifmap, padding, value=0.0):
    if padding == 0:
        return ifmap
    return np.pad(ifmap, ((padding, padding), (padding, padding), (0, 0)), constant_values=value)


def windows(ifmap, R, S, stride):
    """(X, Y, R, S, C) view of every kernel window of an already padded ifmap."""
    v = sliding_window_view(ifmap, (R, S), axis=(0, 1))        # (X', Y', C, R, S)
    v = v[::stride, ::stride]
    return v.transpose(0, 1, 3, 4, 2)


def _as_conv_input(ifmap, layer):
    ifmap = np.asarray(ifmap, dtype=np.float64)
    if layer.kind == "fc":
        return ifmap.reshape(1, 1, -1)
    return ifmap


def extract_groups(ifmap, layer, mapping=CHANNELWISE):
    """Activation groups of a conv/fc layer in execution order.

    Channel-wise: (X*Y, R*S, C), one group per window and kernel offset.
    Conventional: (X*Y, R*S*C), one unrolled vector per window.  Windows are
    ordered x-major, kernel offsets (r, s) row-major.
    """
    R, S, C, _ = layer.kernel
    x = pad(_as_conv_input(ifmap, layer), layer.padding)
    win = windows(x, R, S, layer.stride)
    P = win.shape[0] * win.shape[1]
    if mapping == CHANNELWISE:
        return win.reshape(P, R * S, C)
    if mapping == CONVENTIONAL:
        return win.reshape(P, R * S * C)
    raise ValueError(f"unknown mapping {mapping!r}")


def conv_forward_float(ifmap, weights, layer, bias=None, skip=None):
    """sigma(sum_{r,s,c} f_in(x*stride + r, y*stride + s, c) * w_k(r, s, c)) with zero padding."""
    weights = np.asarray(weights, dtype=np.float64)
    R, S, C, K = layer.kernel
    x = _as_conv_input(ifmap, layer)
    if x.shape[2] != C:
        raise ValueError(f"ifmap has {x.shape[2]} channels, kernel expects {C}")
    win = windows(pad(x, layer.padding), R, S, layer.stride)
    X, Y = win.shape[:2]
    out = win.reshape(X * Y, R * S * C) @ weights.reshape(R * S * C, K)
    out = out.reshape(X, Y, K)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    if skip is not None:
        out = out + skip
    return activate(out, layer.activation)


def fc_forward(x, weights, bias=None, activation="none"):
    layer = LayerSpec("fc", weights=weights, activation=activation)
    return conv_forward_float(x, weights, layer, bias)


def pool_forward(ifmap, layer):
    win = windows(np.asarray(ifmap, dtype=np.float64), layer.size, layer.size, layer.stride)
    if layer.kind == "pool_max":
        return win.max(axis=(2, 3))
    return win.mean(axis=(2, 3))


def _run_other(x, layer, skip):
    if layer.kind in ("pool_max", "pool_avg"):
        out = pool_forward(x, layer)
        return out if skip is None else out + skip
    out = x if skip is None else x + skip
    return activate(out, layer.activation)


def forward_float(network, x, trace=None):
    """Float64 reference inference.  ``trace`` (a dict) receives each compute layer's input."""
    outputs = []
    x = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(network.layers):
        skip = outputs[layer.skip_from] if layer.skip_from is not None else None
        if layer.kind in COMPUTE_KINDS:
            if trace is not None:
                trace[i] = x
            x = conv_forward_float(x, layer.conv_weights(), layer, layer.bias, skip)
        else:
            x = _run_other(x, layer, skip)
        outputs.append(x)
    return x


def quantize_weights(weights, bits=MAX_BITS):
    """Symmetric per-layer weight quantization: (integer codes, scale)."""
    w = np.asarray(weights, dtype=np.float64)
    qmax = (1 << (bits - 1)) - 1
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    scale = qmax / peak if peak > 0 else 1.0
    return np.clip(round_half_away(w * scale), -qmax, qmax).astype(np.int64), scale


@dataclass
class MappedLayer:
    index: int
    mapping: str
    depth: int              # input channels C, the ReDy group depth
    group_len: int          # rows streamed per group (C, or R*S*C when conventional)
    arrays: list            # per group position, the crossbars holding its weights
    codes: np.ndarray       # (positions, group_len, K) weight codes
    scale: float
    window_shape: tuple

    @property
    def positions(self):
        return len(self.arrays)

    @property
    def arrays_per_group(self):
        return len(self.arrays[0])


def map_network(network, cfg=None, bins=8):
    """Quantize and program every conv/fc layer onto crossbars.

    Layers with fewer input channels than histogram bins stay on the
    conventional (whole-window) mapping and always run at 8 bits.
    """
    cfg = cfg or CrossbarConfig()
    shapes = network.shapes()
    mapped = {}
    for i in network.compute_layers():
        layer = network.layers[i]
        R, S, C, K = layer.kernel
        codes, scale = quantize_weights(layer.conv_weights(), cfg.weight_bits)
        X, Y = shapes[i + 1][:2]
        if C < bins:
            mats = codes.reshape(1, R * S * C, K)
            mapping = CONVENTIONAL
        else:
            mats = codes.reshape(R * S, C, K)
            mapping = CHANNELWISE
        arrays = [program_weights(m, cfg, signed=True) for m in mats]
        mapped[i] = MappedLayer(i, mapping, C, mats.shape[1], arrays, mats, scale, (X, Y))
    return mapped


@dataclass
class QuantizedResult:
    output: np.ndarray
    decisions: list
    counters: ActivityCounters
    saturation: dict
    rrmse: dict             # layer -> (sum of group RRMSE, groups counted, max)


def _layer_bits(groups, mlayer, value_range, settings, policy, seed, counters):
    """Bitwidth and DU per group (positions x groups)."""
    P, G = groups.shape[:2]
    nan = np.full((P, G), np.nan)
    if policy == "static8" or mlayer.depth < settings.bins:
        return np.full((P, G), MAX_BITS, dtype=np.int64), nan
    hcfg = redy.HistogramConfig.for_range(value_range, settings.bins, settings.subsample_ratio)
    flat = groups.reshape(P * G, -1)
    hist = redy.histogram_batch(flat, hcfg, settings.mode)
    du = redy.deviation_batch(hist).reshape(P, G)
    bits = redy.decide_batch(du, mlayer.depth, settings.thresholds, settings.bins)
    counters.add(mlayer.index, histogram_samples=int(hist.sum()), group_decisions=P * G)
    if policy == "random":
        layer_seed = np.random.SeedSequence([seed, mlayer.index])
        dec = redy.LayerDecisions(mlayer.index, bits, du, mlayer.window_shape)
        bits = redy.random_precision_baseline([dec], layer_seed)[0].bits
    return bits, du


def _quantized_layer(x, layer, mlayer, value_range, settings, cfg, policy, seed,
                     counters, result, skip):
    grid = value_range.with_zero()
    if mlayer.mapping == CHANNELWISE:
        groups = extract_groups(x, layer, CHANNELWISE)
    else:
        groups = extract_groups(x, layer, CONVENTIONAL)[:, None, :]
    P, G, _ = groups.shape
    bits, du = _layer_bits(groups, mlayer, value_range, settings, policy, seed, counters)

    scale, zero = grid_params(bits, grid.lo, grid.width)
    qmax = (np.int64(1) << bits) - 1
    codes, saturated = quantize_raw(groups, scale[..., None], zero[..., None], qmax[..., None])
    result.saturation[mlayer.index] = result.saturation.get(mlayer.index, 0) + saturated

    deq = (codes + zero[..., None]) / scale[..., None]
    ref_rms = np.sqrt(np.mean(groups ** 2, axis=-1))
    err_rms = np.sqrt(np.mean((deq - groups) ** 2, axis=-1))
    ok = ref_rms > 0
    if np.any(ok):
        vals = err_rms[ok] / ref_rms[ok]
        s, n, m = result.rrmse.get(mlayer.index, (0.0, 0, 0.0))
        result.rrmse[mlayer.index] = (s + float(vals.sum()), n + int(vals.size), max(m, float(vals.max())))

    K = mlayer.codes.shape[-1]
    acc = np.zeros((P, K), dtype=np.int64)
    for g in range(G):
        dot = mvm_arrays(mlayer.arrays[g], codes[:, g, :], bits[:, g], cfg, counters, mlayer.index)
        dot = np.rint(dot).astype(np.int64)
        wsum = mlayer.codes[g].sum(axis=0)
        acc += rescale_partial_sum(dot + zero[:, g, None] * wsum, bits[:, g, None])
    if np.abs(acc).max(initial=0) >= 2 ** 31:
        raise OverflowError(f"layer {mlayer.index}: accumulator exceeds 32 bits")

    scale8 = 2.0 ** MAX_BITS / grid.width
    out = acc / (scale8 * mlayer.scale)
    out = out.reshape(mlayer.window_shape + (K,))
    if layer.bias is not None:
        out = out + np.asarray(layer.bias, dtype=np.float64)
    if skip is not None:
        out = out + skip
    decisions = redy.LayerDecisions(
        mlayer.index, bits, du, mlayer.window_shape,
        None if mlayer.mapping == CONVENTIONAL else layer.kernel[:2],
        mlayer.depth, mlayer.depth < settings.bins)
    return activate(out, layer.activation), decisions


def forward_quantized(network, x, ranges, policy="redy", settings=None, cfg=None,
                      mapped=None, seed=0, counters=None):
    """Fixed-point inference through the crossbar model.

    Every conv/fc input is split into groups, each group quantized on the
    layer grid at its own bitwidth, multiplied bit-serially, shifted to the
    8-bit grid, accumulated and dequantized.  ``ranges`` maps layer index to
    the calibrated ValueRange of that layer's input.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    settings = settings or redy.RedySettings()
    cfg = cfg or CrossbarConfig()
    mapped = mapped if mapped is not None else map_network(network, cfg, settings.bins)
    counters = counters if counters is not None else ActivityCounters()
    result = QuantizedResult(None, [], counters, {}, {})
    outputs = []
    x = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(network.layers):
        skip = outputs[layer.skip_from] if layer.skip_from is not None else None
        if layer.kind in COMPUTE_KINDS:
            if i not in ranges:
                raise KeyError(f"no calibrated range for layer {i}")
            x, dec = _quantized_layer(x, layer, mapped[i], ranges[i], settings, cfg,
                                      policy, seed, counters, result, skip)
            result.decisions.append(dec)
        else:
            x = _run_other(x, layer, skip)
        outputs.append(x)
    result.output = x
    return result
