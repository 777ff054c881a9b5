"""Network topology description and build-time shape resolution.

A :class:`NetworkSpec` carries layer hyperparameters only (no weights).
:func:`resolve` walks it once and produces per-layer input/output dims,
parameter tensor lengths in wire order and im2col workspace needs. Both the
normal-world client and the secure-side engine use it, so it must stay free
of host math calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ShapeError

LAYER_KINDS = ("convolutional", "maxpool", "avgpool", "connected", "softmax", "shortcut")
ACTIVATIONS = ("linear", "relu", "leaky")
WEIGHTED_KINDS = ("convolutional", "connected")

Dims = tuple[int, int, int]


@dataclass
class LayerSpec:
    kind: str
    filters: int = 0
    size: int = 1
    stride: int = 1
    pad: int = 0
    groups: int = 1
    batch_normalize: int = 0
    activation: str = "linear"
    outputs: int = 0
    from_: int = 0

    @property
    def weighted(self) -> bool:
        return self.kind in WEIGHTED_KINDS


@dataclass
class NetworkSpec:
    channels: int
    height: int
    width: int
    layers: list[LayerSpec] = field(default_factory=list)

    @property
    def input_dims(self) -> Dims:
        return (self.channels, self.height, self.width)

    def weighted_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.weighted]


@dataclass
class ResolvedLayer:
    index: int
    spec: LayerSpec
    in_dims: Dims
    out_dims: Dims
    # (name, length) in the order the weight stream fills them
    params: list[tuple[str, int]]
    workspace: int = 0
    from_index: Optional[int] = None

    @property
    def param_count(self) -> int:
        return sum(n for _, n in self.params)

    @property
    def out_size(self) -> int:
        c, h, w = self.out_dims
        return c * h * w


def _window_out(extent: int, size: int, stride: int, pad: int, what: str) -> int:
    span = extent + 2 * pad - size
    if span < 0 or stride < 1:
        raise ShapeError(f"{what}: window {size} (pad {pad}) does not fit extent {extent}")
    return span // stride + 1


def conv_params(filters: int, in_c: int, size: int, groups: int, bn: bool) -> list[tuple[str, int]]:
    nweights = filters * (in_c // groups) * size * size
    if bn:
        return [("biases", filters), ("scales", filters), ("rolling_mean", filters),
                ("rolling_variance", filters), ("weights", nweights)]
    return [("biases", filters), ("weights", nweights)]


def resolve_layer(index: int, spec: LayerSpec, in_dims: Dims, previous: list[ResolvedLayer]) -> ResolvedLayer:
    c, h, w = in_dims
    kind = spec.kind
    where = f"layer {index} ({kind})"
    if kind == "convolutional":
        if spec.filters < 1 or spec.size < 1:
            raise ShapeError(f"{where}: filters and size must be positive")
        if spec.groups < 1 or c % spec.groups or spec.filters % spec.groups:
            raise ShapeError(f"{where}: groups={spec.groups} must divide channels {c} and filters {spec.filters}")
        oh = _window_out(h, spec.size, spec.stride, spec.pad, where)
        ow = _window_out(w, spec.size, spec.stride, spec.pad, where)
        params = conv_params(spec.filters, c, spec.size, spec.groups, bool(spec.batch_normalize))
        workspace = (c // spec.groups) * spec.size * spec.size * oh * ow
        return ResolvedLayer(index, spec, in_dims, (spec.filters, oh, ow), params, workspace)
    if kind == "maxpool":
        oh = _window_out(h, spec.size, spec.stride, spec.pad, where)
        ow = _window_out(w, spec.size, spec.stride, spec.pad, where)
        return ResolvedLayer(index, spec, in_dims, (c, oh, ow), [])
    if kind == "avgpool":
        return ResolvedLayer(index, spec, in_dims, (c, 1, 1), [])
    if kind == "connected":
        if spec.outputs < 1:
            raise ShapeError(f"{where}: outputs must be positive")
        params = [("biases", spec.outputs), ("weights", spec.outputs * c * h * w)]
        return ResolvedLayer(index, spec, in_dims, (spec.outputs, 1, 1), params)
    if kind == "softmax":
        return ResolvedLayer(index, spec, in_dims, in_dims, [])
    if kind == "shortcut":
        src = spec.from_ + index if spec.from_ < 0 else spec.from_
        if not 0 <= src < index:
            raise ShapeError(f"{where}: from={spec.from_} must reference an earlier layer")
        if previous[src].out_dims != in_dims:
            raise ShapeError(f"{where}: from-layer dims {previous[src].out_dims} != input dims {in_dims}")
        return ResolvedLayer(index, spec, in_dims, in_dims, [], from_index=src)
    raise ShapeError(f"{where}: unknown layer kind")


def resolve(net: NetworkSpec) -> list[ResolvedLayer]:
    """Resolve every layer's dims; raises ShapeError on any inconsistency."""
    dims = net.input_dims
    if min(dims) < 1:
        raise ShapeError(f"input dims must be positive, got {dims}")
    out: list[ResolvedLayer] = []
    for i, spec in enumerate(net.layers):
        if spec.activation not in ACTIVATIONS:
            raise ShapeError(f"layer {i}: unknown activation {spec.activation!r}")
        layer = resolve_layer(i, spec, dims, out)
        out.append(layer)
        dims = layer.out_dims
    return out


def output_dims(net: NetworkSpec) -> Dims:
    layers = resolve(net)
    return layers[-1].out_dims if layers else net.input_dims


def weight_lengths(net: NetworkSpec) -> list[int]:
    """Float count per weighted layer, in layer order."""
    return [r.param_count for r in resolve(net) if r.spec.weighted]
