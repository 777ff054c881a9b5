"""The ``TZWT`` cleartext weight container.

Layout (little-endian): magic ``TZWT``, u32 version, u32 layer_count, then per
weighted layer a u32 byte length followed by that many bytes of float32 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MAGIC = b"TZWT"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_LEN = struct.Struct("<I")


@dataclass
class WeightFile:
    layers: list[bytes]
    version: int = VERSION

    @classmethod
    def from_arrays(cls, arrays) -> "WeightFile":
        return cls([np.asarray(a, dtype="<f4").tobytes() for a in arrays])

    def arrays(self) -> list[np.ndarray]:
        return [np.frombuffer(b, dtype="<f4") for b in self.layers]

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, self.version, len(self.layers))]
        for payload in self.layers:
            parts.append(_LEN.pack(len(payload)))
            parts.append(payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightFile":
        if len(data) < _HEADER.size:
            raise FormatError("weight file truncated before header end")
        magic, version, count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad weight file magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported weight file version {version}")
        offset = _HEADER.size
        layers = []
        for i in range(count):
            if offset + _LEN.size > len(data):
                raise FormatError(f"weight file truncated at layer {i} length")
            (n,) = _LEN.unpack_from(data, offset)
            offset += _LEN.size
            if n % 4 or offset + n > len(data):
                raise FormatError(f"layer {i}: declared {n} bytes does not fit the file")
            layers.append(bytes(data[offset:offset + n]))
            offset += n
        if offset != len(data):
            raise FormatError(f"{len(data) - offset} trailing bytes after last layer")
        return cls(layers, version)


def container_size(lengths) -> int:
    """Serialized size for layers of the given float counts."""
    return _HEADER.size + sum(_LEN.size + 4 * n for n in lengths)
