"""TA command set and the BuildLayer record encoding."""

from __future__ import annotations

import enum
import struct

from ..errors import FormatError
from ..netspec import ACTIVATIONS, LAYER_KINDS, LayerSpec


class Command(enum.IntEnum):
    BUILD_LAYER = 1
    WEIGHT_CHUNK = 2
    SEND_INPUT = 3
    INFER = 4
    FETCH_RESULT = 5


FLAG_LEGACY_INIT = 1

# index, count, in_c, in_h, in_w, flags, kind, activation,
# filters, size, stride, pad, groups, batch_normalize, outputs, from
_RECORD = struct.Struct("<5IBBB8i")
RECORD_SIZE = _RECORD.size


def encode_layer(index: int, count: int, input_dims, layer: LayerSpec, flags: int = 0) -> bytes:
    c, h, w = input_dims
    return _RECORD.pack(
        index, count, c, h, w, flags,
        LAYER_KINDS.index(layer.kind), ACTIVATIONS.index(layer.activation),
        layer.filters, layer.size, layer.stride, layer.pad, layer.groups,
        layer.batch_normalize, layer.outputs, layer.from_,
    )


def decode_layer(payload: bytes):
    """Returns (index, count, input_dims, flags, LayerSpec)."""
    if len(payload) != _RECORD.size:
        raise FormatError(f"layer record must be {_RECORD.size} bytes, got {len(payload)}")
    (index, count, c, h, w, flags, kind, act,
     filters, size, stride, pad, groups, bn, outputs, from_) = _RECORD.unpack(payload)
    if kind >= len(LAYER_KINDS) or act >= len(ACTIVATIONS):
        raise FormatError(f"layer record {index}: unknown kind/activation code")
    layer = LayerSpec(LAYER_KINDS[kind], filters=filters, size=size, stride=stride, pad=pad,
                      groups=groups, batch_normalize=bn, activation=ACTIVATIONS[act],
                      outputs=outputs, from_=from_)
    return index, count, (c, h, w), flags, layer
