"""Random shape-valid models for fixtures and property tests."""

from __future__ import annotations

import numpy as np

from .netspec import ACTIVATIONS, LayerSpec, NetworkSpec, resolve, resolve_layer
from .weightfile import WeightFile


def random_weights(spec: NetworkSpec, rng: np.random.Generator) -> WeightFile:
    """Plausible parameters: small weights, positive variances, scales near 1."""
    arrays = []
    for layer in resolve(spec):
        if not layer.spec.weighted:
            continue
        parts = []
        fan_in = max(1, layer.in_dims[0] * layer.spec.size ** 2 // max(layer.spec.groups, 1))
        if layer.spec.kind == "connected":
            c, h, w = layer.in_dims
            fan_in = c * h * w
        for name, n in layer.params:
            if name == "weights":
                parts.append(rng.standard_normal(n) * np.sqrt(2.0 / fan_in))
            elif name == "scales":
                parts.append(1.0 + 0.1 * rng.standard_normal(n))
            elif name == "rolling_variance":
                parts.append(0.5 + rng.random(n))
            else:
                parts.append(0.1 * rng.standard_normal(n))
        arrays.append(np.concatenate(parts).astype(np.float32))
    return WeightFile.from_arrays(arrays)


def _random_layer(rng, index, dims, resolved) -> LayerSpec:
    c, h, w = dims
    options = ["convolutional", "convolutional"]
    if h >= 2 and w >= 2:
        options.append("maxpool")
    if any(r.out_dims == dims for r in resolved):
        options.append("shortcut")
    kind = options[rng.integers(len(options))]
    act = ACTIVATIONS[rng.integers(len(ACTIVATIONS))]
    if kind == "convolutional":
        size = int(rng.choice([1, 3])) if min(h, w) >= 3 else 1
        filters = int(rng.integers(1, 9))
        groups = 1
        if rng.random() < 0.3:
            groups, filters = c, c
        return LayerSpec("convolutional", filters=filters, size=size, stride=int(rng.integers(1, 3)),
                         pad=size // 2, groups=groups, batch_normalize=int(rng.integers(2)), activation=act)
    if kind == "maxpool":
        return LayerSpec("maxpool", size=2, stride=2)
    sources = [r.index for r in resolved if r.out_dims == dims]
    return LayerSpec("shortcut", from_=int(rng.choice(sources)) - index, activation=act)


def random_spec(rng: np.random.Generator, layers: int, classes: int = 10) -> NetworkSpec:
    """``layers`` layers ending in connected + softmax (just softmax when layers == 1)."""
    spec = NetworkSpec(3, int(rng.integers(4, 17)), int(rng.integers(4, 17)))
    resolved = []
    dims = spec.input_dims
    for i in range(max(0, layers - 2)):
        layer = _random_layer(rng, i, dims, resolved)
        info = resolve_layer(i, layer, dims, resolved)
        spec.layers.append(layer)
        resolved.append(info)
        dims = info.out_dims
    if layers >= 2:
        spec.layers.append(LayerSpec("connected", outputs=classes, activation="linear"))
    if layers >= 1:
        spec.layers.append(LayerSpec("softmax"))
    resolve(spec)
    return spec


def random_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
