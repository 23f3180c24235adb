"""Synthetic networks and inputs for tests, demos and the CLI fixture command."""
import numpy as np

from .cnn import LayerSpec, Network


def he_weights(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def synthetic_network(seed=0, size=12, channels=(3, 16, 32), classes=10):
    """conv(3x3, RGB) -> relu -> conv(3x3) -> relu -> maxpool(2) -> fc.

    The first layer has fewer input channels than histogram bins, so it
    always runs at 8 bits on the conventional mapping.
    """
    rng = np.random.default_rng(seed)
    c0, c1, c2 = channels
    half = size // 2
    layers = [
        LayerSpec("conv", he_weights(rng, (3, 3, c0, c1), 9 * c0),
                  (0.05 * rng.standard_normal(c1)).astype(np.float32), padding=1, activation="relu"),
        LayerSpec("conv", he_weights(rng, (3, 3, c1, c2), 9 * c1),
                  (0.05 * rng.standard_normal(c2)).astype(np.float32), padding=1, activation="relu"),
        LayerSpec("pool_max", size=2, stride=2),
        LayerSpec("fc", he_weights(rng, (half * half * c2, classes), half * half * c2),
                  np.zeros(classes, dtype=np.float32)),
    ]
    return Network((size, size, c0), layers)


def residual_network(seed=0, size=8, channels=16, classes=10):
    """Stem conv plus one residual block (additive skip) and an FC head."""
    rng = np.random.default_rng(seed)
    c = channels
    layers = [
        LayerSpec("conv", he_weights(rng, (3, 3, 3, c), 27), padding=1, activation="relu"),
        LayerSpec("conv", he_weights(rng, (3, 3, c, c), 9 * c), padding=1, activation="relu"),
        LayerSpec("conv", 0.5 * he_weights(rng, (3, 3, c, c), 9 * c), padding=1,
                  activation="relu", skip_from=0),
        LayerSpec("pool_avg", size=2, stride=2),
        LayerSpec("fc", he_weights(rng, ((size // 2) ** 2 * c, classes), (size // 2) ** 2 * c)),
    ]
    return Network((size, size, 3), layers)


def random_inputs(n, shape, seed=0, kind="uniform"):
    """``uniform`` images in [0, 1); ``congested`` piles most pixels near zero."""
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        data = rng.random((n,) + tuple(shape))
    elif kind == "congested":
        data = np.minimum(np.abs(rng.standard_normal((n,) + tuple(shape))) * 0.08, 1.0)
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    return [d.astype(np.float32) for d in data]
