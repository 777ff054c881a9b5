"""REE <-> TEE session lifecycle over a shared-memory window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ProtocolError, ShmCapacityError
from ..memlayout import MB, MemoryPlan, World, check_access
from .cost import CostLedger, InvokeCostModel, invoke_cost, mapping_cost
from .protocol import Command
from .secure import TrustedApp

TAGS = ("normal", "shared", "secure")


@dataclass
class _Entry:
    name: str
    tag: str
    buffer: object


class BufferRegistry:
    """Every buffer the simulator creates, tagged with the world that owns it."""

    def __init__(self):
        self.entries: list[_Entry] = []

    def register(self, name: str, tag: str, buffer) -> None:
        if tag not in TAGS:
            raise ValueError(f"unknown buffer tag {tag!r}")
        self.entries = [e for e in self.entries if e.name != name]
        self.entries.append(_Entry(name, tag, buffer))

    def tagged(self, *tags: str) -> list[_Entry]:
        return [e for e in self.entries if e.tag in tags]

    @staticmethod
    def raw(buffer) -> bytes:
        if isinstance(buffer, np.ndarray):
            return buffer.tobytes()
        return bytes(buffer)

    def contains(self, needle: bytes, *tags: str) -> list[str]:
        """Names of buffers under ``tags`` whose bytes contain ``needle``."""
        return [e.name for e in self.tagged(*tags) if needle in self.raw(e.buffer)]

    def wipe(self, tag: str) -> None:
        for e in self.tagged(tag):
            if isinstance(e.buffer, np.ndarray):
                e.buffer.fill(0)
            else:
                e.buffer[:] = bytes(len(e.buffer))
        self.entries = [e for e in self.entries if e.tag != tag]


def usable_shm(plan: MemoryPlan) -> int:
    """Bytes from the start of the shared window that the normal world may write.

    A shared window that runs into the secure region loses the overlapped part.
    """
    shared, secure = plan.shared, plan.secure
    if not check_access(plan, shared.base, World.NON_SECURE).allowed:
        return 0
    if shared.base < secure.base < shared.end:
        return secure.base - shared.base
    return shared.size


class Session:
    """One client <-> one trusted application; one command in flight."""

    def __init__(self, plan: MemoryPlan, cost_model: InvokeCostModel | None = None,
                 remap_per_invoke: bool = False, key: int = 0, registry: BufferRegistry | None = None):
        self.plan = plan
        self.cost_model = cost_model or InvokeCostModel()
        self.remap_per_invoke = remap_per_invoke
        self.registry = registry or BufferRegistry()
        self.ledger = CostLedger()
        self.shm = bytearray(plan.shm_size)
        self.shm_capacity = usable_shm(plan)
        self.registry.register("shm", "shared", self.shm)
        self.secure_state = TrustedApp(key, self.registry)
        self.is_open = True
        self.page_tables_mapped = not remap_per_invoke
        if self.page_tables_mapped:
            self.ledger.total_invoke_ms += mapping_cost(self.cost_model, self.tee_ram_mb)

    @property
    def tee_ram_mb(self) -> float:
        return self.plan.tee_ram / MB

    def invoke(self, command: Command, payload: bytes = b"") -> bytes:
        if not self.is_open:
            raise ProtocolError("session is closed")
        if len(payload) > self.shm_capacity:
            raise ShmCapacityError(f"payload of {len(payload)} bytes exceeds shared memory ({self.shm_capacity})")
        n = len(payload)
        self.shm[:n] = payload
        response = self.secure_state.handle(Command(command), bytes(self.shm[:n]))
        if len(response) > self.shm_capacity:
            raise ShmCapacityError(f"response of {len(response)} bytes exceeds shared memory")
        self.shm[:len(response)] = response
        out = bytes(self.shm[:len(response)])
        ms = invoke_cost(self.cost_model, self.tee_ram_mb, self.remap_per_invoke, n + len(out))
        led = self.ledger
        led.invoke_count += 1
        led.total_invoke_ms += ms
        led.bytes_in += n
        led.bytes_out += len(out)
        led.history.append((Command(command).name, n, len(out), ms))
        return out

    def close(self) -> CostLedger:
        if not self.is_open:
            raise ProtocolError("session already closed")
        self.secure_state.destroy()
        self.page_tables_mapped = False
        self.is_open = False
        return self.ledger


def open_session(plan: MemoryPlan, cost_model: InvokeCostModel | None = None,
                 remap_per_invoke: bool = False, key: int = 0,
                 registry: BufferRegistry | None = None) -> Session:
    """Open a session; in optimized mode the page tables are mapped here, once."""
    return Session(plan, cost_model, remap_per_invoke, key, registry)


def invoke(session: Session, command: Command, payload: bytes = b"") -> bytes:
    return session.invoke(command, payload)


def close_session(session: Session) -> CostLedger:
    return session.close()
