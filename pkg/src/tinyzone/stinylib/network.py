"""Network construction, layer-wise weight loading and forward inference."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, ProtocolError, ShapeError
from ..netspec import NetworkSpec, ResolvedLayer, resolve
from ..tinylibm import t_cos, t_log, t_sqrt
from . import ops

F32 = np.float32
BN_EPSILON = 1e-6


@dataclass
class Layer:
    info: ResolvedLayer
    params: dict[str, np.ndarray]
    output: np.ndarray

    @property
    def kind(self) -> str:
        return self.info.spec.kind

    @property
    def spec(self):
        return self.info.spec


@dataclass
class Network:
    input_dims: tuple[int, int, int]
    layers: list[Layer]
    workspace: np.ndarray
    weights_loaded: list[bool] = field(default_factory=list)

    @property
    def ready(self) -> bool:
        return all(self.weights_loaded)

    def expected_bytes(self, index: int) -> int:
        return 4 * self.layers[index].info.param_count


class _Uniform:
    """Seeded splitmix64 stream of uniforms in [0, 1)."""

    def __init__(self, seed: int):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next(self) -> float:
        self.state = (self.state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        z ^= z >> 31
        return (z >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        # Box-Muller
        u1 = 1.0 - self.next()
        return t_sqrt(-2.0 * t_log(u1)) * t_cos(6.283185307179586 * self.next())


def _legacy_fill(layer: Layer, rng: _Uniform) -> None:
    """Per-weight pseudo-random init in the style of a training framework."""
    spec, info = layer.spec, layer.info
    weights = layer.params["weights"]
    if spec.kind == "convolutional":
        c_in = info.in_dims[0] // spec.groups
        scale = t_sqrt(2.0 / (spec.size * spec.size * c_in))
        for i in range(weights.size):
            weights[i] = scale * rng.normal()
        if spec.batch_normalize:
            layer.params["scales"].fill(1)
    else:
        c, h, w = info.in_dims
        scale = t_sqrt(2.0 / (c * h * w))
        for i in range(weights.size):
            weights[i] = scale * (2.0 * rng.next() - 1.0)


def build_network(spec: NetworkSpec, legacy_random_init: bool = False, seed: int = 0) -> Network:
    """Allocate every buffer of ``spec``.

    By default parameters are left zeroed because the weight stream overwrites
    them anyway. ``legacy_random_init`` reproduces the slow per-weight random
    initialisation for benchmarking.
    """
    resolved = resolve(spec)
    rng = _Uniform(seed)
    layers = []
    for info in resolved:
        params = {name: np.zeros(n, dtype=F32) for name, n in info.params}
        layer = Layer(info, params, np.zeros(info.out_dims, dtype=F32))
        if legacy_random_init and info.spec.weighted:
            _legacy_fill(layer, rng)
        layers.append(layer)
    workspace = np.zeros(max((i.workspace for i in resolved), default=0), dtype=F32)
    loaded = [not info.spec.weighted for info in resolved]
    return Network(spec.input_dims, layers, workspace, loaded)


def load_layer_weights(net: Network, layer_index: int, data: bytes) -> None:
    """Fill one layer's tensors from a little-endian float32 stream."""
    if not 0 <= layer_index < len(net.layers):
        raise IndexError(f"layer index {layer_index} out of range [0, {len(net.layers)})")
    layer = net.layers[layer_index]
    expected = net.expected_bytes(layer_index)
    if len(data) != expected:
        raise FormatError(f"layer {layer_index}: expected {expected} weight bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4")
    offset = 0
    for name, n in layer.info.params:
        layer.params[name][:] = values[offset:offset + n]
        offset += n
    net.weights_loaded[layer_index] = True


def _conv(net: Network, layer: Layer, x: np.ndarray) -> np.ndarray:
    spec = layer.spec
    groups = spec.groups
    c_in = x.shape[0] // groups
    f = spec.filters // groups
    _, oh, ow = layer.info.out_dims
    out = layer.output.reshape(spec.filters, oh * ow)
    weights = layer.params["weights"].reshape(groups, f, c_in * spec.size * spec.size)
    for g in range(groups):
        cols = ops.im2col(x[g * c_in:(g + 1) * c_in], spec.size, spec.stride, spec.pad, out=net.workspace)
        ops.gemm(weights[g], cols, 0.0, out[g * f:(g + 1) * f])
    p = layer.params
    if spec.batch_normalize:
        std = np.array([t_sqrt(float(v) + BN_EPSILON) for v in p["rolling_variance"]], dtype=F32)
        out -= p["rolling_mean"][:, None]
        out /= std[:, None]
        out *= p["scales"][:, None]
    out += p["biases"][:, None]
    ops.activate(out, spec.activation)
    return layer.output


def _connected(layer: Layer, x: np.ndarray) -> np.ndarray:
    n = layer.spec.outputs
    out = layer.output.reshape(n, 1)
    weights = layer.params["weights"].reshape(n, x.size)
    ops.gemm(weights, x.reshape(-1, 1), 0.0, out)
    out += layer.params["biases"][:, None]
    ops.activate(out, layer.spec.activation)
    return layer.output


def forward_layer(net: Network, layer_index: int, x: np.ndarray) -> np.ndarray:
    layer = net.layers[layer_index]
    if not net.weights_loaded[layer_index]:
        raise ProtocolError(f"layer {layer_index}: weights not loaded")
    if x.shape != layer.info.in_dims:
        raise ShapeError(f"layer {layer_index}: input {x.shape} != {layer.info.in_dims}")
    x = np.asarray(x, dtype=F32)
    spec = layer.spec
    kind = spec.kind
    if kind == "convolutional":
        return _conv(net, layer, x)
    if kind == "connected":
        return _connected(layer, x)
    if kind == "maxpool":
        layer.output[...] = ops.maxpool(x, spec.size, spec.stride, spec.pad)
    elif kind == "avgpool":
        layer.output[...] = ops.avgpool(x)
    elif kind == "softmax":
        layer.output[...] = ops.softmax(x)
    elif kind == "shortcut":
        np.add(x, net.layers[layer.info.from_index].output, out=layer.output)
        ops.activate(layer.output, spec.activation)
    return layer.output


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    if not net.ready:
        missing = [i for i, ok in enumerate(net.weights_loaded) if not ok]
        raise ProtocolError(f"weights missing for layers {missing}")
    x = np.asarray(x, dtype=F32)
    if x.shape != tuple(net.input_dims):
        raise ShapeError(f"input {x.shape} != network input {tuple(net.input_dims)}")
    for i in range(len(net.layers)):
        x = forward_layer(net, i, x)
    return x.copy()
