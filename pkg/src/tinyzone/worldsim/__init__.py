"""Simulated secure world: session lifecycle, invoke cost and decryption engine."""

from .cipher import EncryptedBlob, decrypt_blob, encrypt, fnv1a64, keystream, splitmix64
from .cost import CostLedger, InvokeCostModel, invoke_cost, mapping_cost
from .protocol import Command
from .session import BufferRegistry, Session, close_session, invoke, open_session

__all__ = [
    "EncryptedBlob", "decrypt_blob", "encrypt", "fnv1a64", "keystream", "splitmix64",
    "CostLedger", "InvokeCostModel", "invoke_cost", "mapping_cost", "Command",
    "BufferRegistry", "Session", "close_session", "invoke", "open_session",
]
