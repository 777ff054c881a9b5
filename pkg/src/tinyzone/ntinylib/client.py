"""Normal-world driver: builds the model in the TA, streams encrypted weights,
sends the encrypted input and decrypts the returned result."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..netspec import NetworkSpec, output_dims
from ..stinylib import top_k
from ..worldsim import cipher
from ..worldsim.cipher import EncryptedBlob
from ..worldsim.protocol import FLAG_LEGACY_INIT, Command, encode_layer
from ..worldsim.session import Session


def encrypt_weights(weight_file_bytes: bytes, key: int, nonce: int) -> EncryptedBlob:
    return cipher.encrypt(weight_file_bytes, key, nonce)


def chunk_count(total: int, chunk: int) -> int:
    if chunk < 1:
        raise DomainError(f"chunk size must be positive, got {chunk}")
    return -(-total // chunk)


def build_model(session: Session, spec: NetworkSpec, legacy_init: bool = False) -> int:
    """Send one BuildLayer invoke per layer; returns the number of invokes."""
    flags = FLAG_LEGACY_INIT if legacy_init else 0
    n = len(spec.layers)
    for i, layer in enumerate(spec.layers):
        session.invoke(Command.BUILD_LAYER, encode_layer(i, n, spec.input_dims, layer, flags))
    return n


def stream_weights(session: Session, spec: NetworkSpec, blob: EncryptedBlob | bytes,
                   chunk_size: int | None = None) -> int:
    """Push the serialized ciphertext through shared memory in chunks.

    ``chunk_size`` defaults to the shared window. Returns the invoke count.
    """
    data = blob.to_bytes() if isinstance(blob, EncryptedBlob) else bytes(blob)
    chunk = chunk_size or session.shm_capacity
    sent = 0
    for start in range(0, len(data), chunk):
        session.invoke(Command.WEIGHT_CHUNK, data[start:start + chunk])
        sent += 1
    return sent


def send_input(session: Session, tensor: np.ndarray, key: int, nonce: int) -> None:
    payload = np.asarray(tensor, dtype="<f4").tobytes()
    session.invoke(Command.SEND_INPUT, cipher.encrypt(payload, key, nonce).to_bytes())


def fetch_result(session: Session, spec: NetworkSpec, key: int) -> np.ndarray:
    session.invoke(Command.INFER)
    raw = session.invoke(Command.FETCH_RESULT)
    plain = cipher.decrypt_blob(EncryptedBlob.from_bytes(raw), key)
    return np.frombuffer(plain, dtype="<f4").astype(np.float32).reshape(output_dims(spec))


def run_inference(session: Session, spec: NetworkSpec, weights: EncryptedBlob | bytes,
                  image: np.ndarray, key: int, input_nonce: int = 1, legacy_init: bool = False,
                  chunk_size: int | None = None) -> np.ndarray:
    """Full flow on an open session; returns the decrypted network output."""
    build_model(session, spec, legacy_init)
    stream_weights(session, spec, weights, chunk_size)
    send_input(session, image, key, input_nonce)
    return fetch_result(session, spec, key)


def default_labels(n: int) -> list[str]:
    return [f"class_{i}" for i in range(n)]


def classify(probs: np.ndarray, labels: list[str] | None, k: int) -> list[tuple[str, float]]:
    flat = np.asarray(probs).reshape(-1)
    return top_k(flat, labels or default_labels(flat.size), k)
