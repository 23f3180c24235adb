"""RDTN tensor container and the JSON model manifest.

RDTN layout: magic ``b"RDTN"``, version byte, rank byte, ``rank`` dims as
uint32 little-endian, then the float32 little-endian payload in row-major,
channel-innermost order.
"""
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RDTN"
VERSION = 1
MANIFEST = "manifest.json"


class ModelError(Exception):
    """Malformed model directory, manifest or tensor file."""


def write_tensor(path, array):
    a = np.array(array, dtype="<f4", order="C")      # keeps rank 0, unlike ascontiguousarray
    if a.ndim > 255:
        raise ValueError("rank too large")
    header = MAGIC + struct.pack("<BB", VERSION, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.tobytes())


def read_tensor(path):
    data = Path(path).read_bytes()
    if len(data) < 6 or data[:4] != MAGIC:
        raise ModelError(f"{path}: not an RDTN tensor")
    version, rank = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise ModelError(f"{path}: unsupported RDTN version {version}")
    head = 6 + 4 * rank
    if len(data) < head:
        raise ModelError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", data, 6)
    n = int(np.prod(dims, dtype=np.int64))
    if len(data) != head + 4 * n:
        raise ModelError(f"{path}: payload holds {(len(data) - head) // 4} values, dims need {n}")
    return np.frombuffer(data, dtype="<f4", offset=head).reshape(dims).astype(np.float32)


def save_model(directory, network):
    from .cnn import COMPUTE_KINDS

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, layer in enumerate(network.layers):
        entry = {"kind": layer.kind}
        if layer.kind in COMPUTE_KINDS:
            entry["kernel"] = list(layer.weights.shape)
            entry["stride"] = layer.stride
            entry["padding"] = layer.padding
            entry["activation"] = layer.activation
            entry["weights"] = f"layer{i}_weights.rdtn"
            write_tensor(d / entry["weights"], layer.weights)
            if layer.bias is not None:
                entry["bias"] = f"layer{i}_bias.rdtn"
                write_tensor(d / entry["bias"], layer.bias)
        elif layer.kind in ("pool_max", "pool_avg"):
            entry["size"] = layer.size
            entry["stride"] = layer.stride
        else:
            entry["activation"] = layer.activation
        if layer.skip_from is not None:
            entry["skip_from"] = layer.skip_from
        layers.append(entry)
    manifest = {"format": "redysim-model", "version": VERSION,
                "input_shape": list(network.input_shape), "layers": layers}
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")


def load_model(directory):
    from .cnn import COMPUTE_KINDS, LayerSpec, Network

    d = Path(directory)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise ModelError(f"missing {MANIFEST} in {d}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed manifest: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != "redysim-model":
        raise ModelError(f"{d / MANIFEST}: not a redysim model manifest")
    if manifest.get("version") != VERSION:
        raise ModelError(f"unsupported manifest version {manifest.get('version')!r}")
    try:
        layers = []
        for i, entry in enumerate(manifest["layers"]):
            kind = entry["kind"]
            if kind in COMPUTE_KINDS:
                w = read_tensor(d / entry["weights"])
                if list(w.shape) != list(entry["kernel"]):
                    raise ModelError(f"layer {i}: weights {w.shape} != kernel {entry['kernel']}")
                b = read_tensor(d / entry["bias"]) if "bias" in entry else None
                layers.append(LayerSpec(kind, weights=w, bias=b, stride=entry.get("stride", 1),
                                        padding=entry.get("padding", 0),
                                        activation=entry.get("activation", "none"),
                                        skip_from=entry.get("skip_from")))
            elif kind in ("pool_max", "pool_avg"):
                layers.append(LayerSpec(kind, size=entry["size"], stride=entry.get("stride", entry["size"]),
                                        skip_from=entry.get("skip_from")))
            elif kind == "activation":
                layers.append(LayerSpec(kind, activation=entry["activation"],
                                        skip_from=entry.get("skip_from")))
            else:
                raise ModelError(f"layer {i}: unknown kind {kind!r}")
        net = Network(tuple(manifest["input_shape"]), layers)
        net.shapes()
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed manifest: missing or bad field {exc}") from exc
    except ValueError as exc:
        raise ModelError(str(exc)) from exc
    except OSError as exc:
        raise ModelError(f"cannot read tensor: {exc}") from exc
    return net
