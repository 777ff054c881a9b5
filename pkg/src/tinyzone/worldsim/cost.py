"""Simulated world-switch cost.

Calibrated so a remapping invoke costs 57.084 ms at 500 MB of secure memory
and an invoke without remapping costs a flat 0.142 ms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import DomainError

MB = 1 << 20
T_FIXED_MS = 0.142
T_PER_MB_MS = (57.084 - T_FIXED_MS) / 500
COPY_BANDWIDTH = 200 * MB


@dataclass(frozen=True)
class InvokeCostModel:
    t_fixed_ms: float = T_FIXED_MS
    t_per_mb_ms: float = T_PER_MB_MS
    copy_bandwidth: float = COPY_BANDWIDTH  # bytes per second

    def __post_init__(self):
        if min(self.t_fixed_ms, self.t_per_mb_ms, self.copy_bandwidth) <= 0:
            raise DomainError("cost model parameters must all be positive")


def copy_ms(model: InvokeCostModel, payload_bytes: int) -> float:
    return 1000.0 * payload_bytes / model.copy_bandwidth


def mapping_cost(model: InvokeCostModel, tee_ram_mb: float) -> float:
    """Cost of establishing the secure page tables once."""
    return model.t_per_mb_ms * tee_ram_mb


def invoke_cost(model: InvokeCostModel, tee_ram_mb: float, remap: bool, payload_bytes: int = 0) -> float:
    ms = model.t_fixed_ms + copy_ms(model, payload_bytes)
    if remap:
        ms += mapping_cost(model, tee_ram_mb)
    return ms


@dataclass
class CostLedger:
    invoke_count: int = 0
    total_invoke_ms: float = 0.0
    bytes_in: int = 0
    bytes_out: int = 0
    # (command, bytes_in, bytes_out, ms) for every successful invoke
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"invoke_count": self.invoke_count, "total_invoke_ms": self.total_invoke_ms,
                "bytes_in": self.bytes_in, "bytes_out": self.bytes_out}
