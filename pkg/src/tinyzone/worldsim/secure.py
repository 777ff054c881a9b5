"""The trusted application running inside the simulated secure world.

It owns the decryption engine and the S-side network. Everything it
materialises in cleartext is registered in the session's buffer registry
under the ``secure`` tag.
"""

from __future__ import annotations

import enum

import numpy as np

from ..errors import FormatError, IntegrityError, ProtocolError
from ..netspec import NetworkSpec, weight_lengths
from ..stinylib import build_network, forward, load_layer_weights
from ..weightfile import WeightFile, container_size
from . import cipher
from .protocol import FLAG_LEGACY_INIT, Command, decode_layer

RESULT_NONCE_TWEAK = 0xA5A5A5A5A5A5A5A5


class State(enum.Enum):
    EMPTY = "empty"
    BUILDING = "building"
    BUILT = "built"
    READY = "ready"
    HAS_INPUT = "has-input"
    DONE = "done"
    DESTROYED = "destroyed"


class TrustedApp:
    def __init__(self, key: int, registry):
        self.key = key
        self.registry = registry
        self.state = State.EMPTY
        self.spec: NetworkSpec | None = None
        self.count = 0
        self.flags = 0
        self.net = None
        self.stream: cipher.StreamDecryptor | None = None
        self.staging: bytearray | None = None
        self.input: np.ndarray | None = None
        self.input_nonce = 0
        self.result: np.ndarray | None = None

    def handle(self, command: Command, payload: bytes) -> bytes:
        if self.state is State.DESTROYED:
            raise ProtocolError("trusted application already destroyed")
        handler = {
            Command.BUILD_LAYER: self._build_layer,
            Command.WEIGHT_CHUNK: self._weight_chunk,
            Command.SEND_INPUT: self._send_input,
            Command.INFER: self._infer,
            Command.FETCH_RESULT: self._fetch_result,
        }[Command(command)]
        return handler(payload)

    def _require(self, *states: State) -> None:
        if self.state not in states:
            names = "/".join(s.value for s in states)
            raise ProtocolError(f"command needs TA state {names}, TA is {self.state.value}")

    def _build_layer(self, payload: bytes) -> bytes:
        self._require(State.EMPTY, State.BUILDING)
        index, count, dims, flags, layer = decode_layer(payload)
        if self.state is State.EMPTY:
            if index != 0 or count < 1:
                raise ProtocolError(f"first layer record must be 0 of n, got {index} of {count}")
            self.spec = NetworkSpec(*dims)
            self.count, self.flags = count, flags
            self.state = State.BUILDING
        elif index != len(self.spec.layers) or count != self.count:
            raise ProtocolError(f"layer record {index}/{count} out of sequence")
        self.spec.layers.append(layer)
        if len(self.spec.layers) == self.count:
            self._finish_build()
        return b""

    def _finish_build(self) -> None:
        self.net = build_network(self.spec, legacy_random_init=bool(self.flags & FLAG_LEGACY_INIT))
        for i, layer in enumerate(self.net.layers):
            for name, arr in layer.params.items():
                self.registry.register(f"ta.layer{i}.{name}", "secure", arr)
            self.registry.register(f"ta.layer{i}.output", "secure", layer.output)
        plain = container_size(weight_lengths(self.spec))
        self.staging = bytearray(plain)
        self.registry.register("ta.weight_staging", "secure", self.staging)
        self._reset_stream()
        self.state = State.BUILT

    def _reset_stream(self) -> None:
        self.staging[:] = bytes(len(self.staging))
        self.stream = cipher.StreamDecryptor(self.key, len(self.staging) + cipher.OVERHEAD, self.staging)

    def _weight_chunk(self, payload: bytes) -> bytes:
        self._require(State.BUILT)
        try:
            self.stream.feed(payload)
            if not self.stream.complete:
                return b""
            plaintext = self.stream.finish()
            weights = WeightFile.from_bytes(plaintext)
            weighted = self.spec.weighted_indices()
            if len(weights.layers) != len(weighted):
                raise FormatError(f"weight file has {len(weights.layers)} layers, model needs {len(weighted)}")
            for index, data in zip(weighted, weights.layers):
                load_layer_weights(self.net, index, data)
        except (IntegrityError, FormatError):
            self._reset_stream()
            raise
        self.staging[:] = bytes(len(self.staging))
        self.state = State.READY
        return b""

    def _send_input(self, payload: bytes) -> bytes:
        self._require(State.READY, State.HAS_INPUT, State.DONE)
        blob = cipher.EncryptedBlob.from_bytes(payload)
        data = cipher.decrypt_blob(blob, self.key)
        c, h, w = self.spec.input_dims
        if len(data) != 4 * c * h * w:
            raise FormatError(f"input is {len(data)} bytes, network expects {4 * c * h * w}")
        self.input = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(c, h, w)
        self.registry.register("ta.input", "secure", self.input)
        self.input_nonce = blob.nonce
        self.result = None
        self.state = State.HAS_INPUT
        return b""

    def _infer(self, payload: bytes) -> bytes:
        self._require(State.HAS_INPUT)
        self.result = forward(self.net, self.input)
        self.registry.register("ta.result", "secure", self.result)
        self.state = State.DONE
        return b""

    def _fetch_result(self, payload: bytes) -> bytes:
        self._require(State.DONE)
        data = self.result.astype("<f4").tobytes()
        return cipher.encrypt(data, self.key, self.input_nonce ^ RESULT_NONCE_TWEAK).to_bytes()

    def destroy(self) -> None:
        """Wipe every cleartext buffer, then drop the network."""
        self.registry.wipe("secure")
        self.net = None
        self.spec = None
        self.stream = None
        self.staging = None
        self.input = None
        self.result = None
        self.state = State.DESTROYED
