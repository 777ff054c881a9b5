"""Provisioning cipher: splitmix64 keystream XOR plus an FNV-1a-64 checksum.

This is plumbing that lets the simulator model "only the secure side can
read the weights" and tamper detection. It is not real cryptography.

Encrypted file layout: magic ``TZWE``, u64 nonce, ciphertext, u64 checksum,
all integers little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, IntegrityError

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MAGIC = b"TZWE"
_HEAD = struct.Struct("<4sQ")
_TAIL = struct.Struct("<Q")
OVERHEAD = _HEAD.size + _TAIL.size


def splitmix64(state: int) -> tuple[int, int]:
    """One scalar step: returns (new_state, output)."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def keystream(key: int, nonce: int, nbytes: int, offset: int = 0) -> bytes:
    """Keystream bytes ``[offset, offset + nbytes)`` for ``key``/``nonce``.

    Block ``i`` is the mix of ``(key ^ nonce) + (i + 1) * GOLDEN``, so any
    window can be produced without replaying the earlier blocks.
    """
    if nbytes <= 0:
        return b""
    first = offset // 8
    last = (offset + nbytes + 7) // 8
    s0 = np.uint64((key ^ nonce) & MASK64)
    with np.errstate(over="ignore"):
        idx = np.arange(first + 1, last + 1, dtype=np.uint64)
        z = s0 + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    raw = z.astype("<u8").tobytes()
    start = offset - first * 8
    return raw[start:start + nbytes]


def xor_bytes(data: bytes, stream: bytes) -> bytes:
    a = np.frombuffer(data, dtype=np.uint8)
    b = np.frombuffer(stream, dtype=np.uint8)
    return (a ^ b).tobytes()


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


@dataclass(frozen=True)
class EncryptedBlob:
    nonce: int
    ciphertext: bytes
    checksum: int

    def to_bytes(self) -> bytes:
        return _HEAD.pack(MAGIC, self.nonce) + self.ciphertext + _TAIL.pack(self.checksum)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncryptedBlob":
        if len(data) < OVERHEAD:
            raise FormatError(f"encrypted blob too short ({len(data)} bytes)")
        magic, nonce = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad encrypted blob magic {magic!r}")
        (checksum,) = _TAIL.unpack_from(data, len(data) - _TAIL.size)
        return cls(nonce, bytes(data[_HEAD.size:len(data) - _TAIL.size]), checksum)


def encrypt(plaintext: bytes, key: int, nonce: int) -> EncryptedBlob:
    ct = xor_bytes(plaintext, keystream(key, nonce, len(plaintext)))
    return EncryptedBlob(nonce & MASK64, ct, fnv1a64(plaintext))


def decrypt_blob(blob: EncryptedBlob, key: int) -> bytes:
    plaintext = xor_bytes(blob.ciphertext, keystream(key, blob.nonce, len(blob.ciphertext)))
    if fnv1a64(plaintext) != blob.checksum:
        raise IntegrityError("checksum mismatch: ciphertext or key is wrong")
    return plaintext


class StreamDecryptor:
    """Decrypts a serialized blob that arrives in arbitrary chunks.

    Plaintext accumulates in ``buffer``; the checksum is checked in
    :meth:`finish` once the whole blob has arrived.
    """

    def __init__(self, key: int, total_size: int, buffer: bytearray):
        if total_size < OVERHEAD:
            raise FormatError("encrypted stream shorter than its framing")
        self.key = key
        self.total = total_size
        self.body = total_size - OVERHEAD
        self.buffer = buffer
        self.received = 0
        self._head = bytearray()
        self._tail = bytearray()
        self.nonce = None
        self._hash = FNV_OFFSET

    @property
    def complete(self) -> bool:
        return self.received == self.total

    def feed(self, chunk: bytes) -> None:
        if self.received + len(chunk) > self.total:
            raise FormatError(f"stream overrun: {self.received + len(chunk)} > {self.total} bytes")
        pos = 0
        while pos < len(chunk):
            at = self.received
            if at < _HEAD.size:
                take = min(_HEAD.size - at, len(chunk) - pos)
                self._head += chunk[pos:pos + take]
                if len(self._head) == _HEAD.size:
                    magic, self.nonce = _HEAD.unpack(bytes(self._head))
                    if magic != MAGIC:
                        raise FormatError(f"bad encrypted blob magic {magic!r}")
            elif at < _HEAD.size + self.body:
                off = at - _HEAD.size
                take = min(self.body - off, len(chunk) - pos)
                plain = xor_bytes(chunk[pos:pos + take], keystream(self.key, self.nonce, take, off))
                self.buffer[off:off + take] = plain
                self._hash = fnv1a64(plain, self._hash)
            else:
                take = min(self.total - at, len(chunk) - pos)
                self._tail += chunk[pos:pos + take]
            pos += take
            self.received += take

    def finish(self) -> bytes:
        if not self.complete:
            raise FormatError(f"stream incomplete: {self.received}/{self.total} bytes")
        (checksum,) = _TAIL.unpack(bytes(self._tail))
        if checksum != self._hash:
            raise IntegrityError("weight stream checksum mismatch")
        return bytes(self.buffer[:self.body])
