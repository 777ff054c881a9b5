"""Secure memory sizing and TZASC-style region planning.

Sizes are in bytes unless a name says otherwise. ``MB`` is 2**20 bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .errors import AddressError, CapacityError, DomainError
from .netspec import NetworkSpec, resolve

MB = 1 << 20
FLOAT_BYTES = 4
DEFAULT_TEE_CORE = 8 * MB


class Access(str, enum.Enum):
    NORMAL = "normal"
    SHARED = "shared"
    SECURE = "secure"


class World(str, enum.Enum):
    SECURE = "secure"
    NON_SECURE = "non-secure"


class Reason(str, enum.Enum):
    SECURE_OWNER = "secure world owns secure region"
    SECURE_ONLY = "secure region denies non-secure world"
    SHARED = "shared region open to both worlds"
    NORMAL = "normal region open to both worlds"


@dataclass(frozen=True)
class MemCost:
    m_s: int
    f_gc: int
    param_count: int


@dataclass(frozen=True)
class Region:
    id: int
    base: int
    size: int
    access: Access
    priority: int

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.end

    def to_dict(self) -> dict:
        return {"id": self.id, "base": self.base, "size": self.size,
                "access": self.access.value, "priority": self.priority}


@dataclass
class MemoryPlan:
    total_ram: int
    regions: list[Region]
    tee_ram: int
    shm_size: int
    num_pgt: int

    def region(self, access: Access) -> Region:
        return next(r for r in self.regions if r.access is access)

    @property
    def secure(self) -> Region:
        return self.region(Access.SECURE)

    @property
    def shared(self) -> Region:
        return self.region(Access.SHARED)


@dataclass(frozen=True)
class AccessVerdict:
    allowed: bool
    deciding_region: int
    reason: Reason


@dataclass(frozen=True)
class Overlap:
    pair: tuple[int, int]
    start: int
    end: int
    winner: int

    def to_dict(self) -> dict:
        return {"regions": list(self.pair), "start": self.start, "end": self.end, "winner": self.winner}


def model_memory_cost(net: NetworkSpec) -> MemCost:
    """Parameter storage and forward-pass buffer demand of ``net``.

    ``f_gc`` counts the input buffer, one output buffer per layer and a single
    im2col workspace shared by all convolutions.
    """
    layers = resolve(net)
    c, h, w = net.input_dims
    params = sum(layer.param_count for layer in layers)
    outputs = sum(layer.out_size for layer in layers)
    workspace = max((layer.workspace for layer in layers), default=0)
    f_gc = FLOAT_BYTES * (c * h * w + outputs + workspace)
    return MemCost(m_s=FLOAT_BYTES * params, f_gc=f_gc, param_count=params)


def tee_ram_size(cost: MemCost, tee_core: int = DEFAULT_TEE_CORE) -> int:
    if tee_core <= 0:
        raise DomainError(f"tee_core must be positive, got {tee_core}")
    return cost.m_s + cost.f_gc + tee_core


def num_page_tables(tee_ram_mb: float) -> int:
    """Page tables needed when each MMU entry maps 2 MB."""
    if not tee_ram_mb > 0:
        raise DomainError(f"tee_ram_mb must be positive, got {tee_ram_mb}")
    return int(tee_ram_mb // 2) + 1


def plan_layout(total_ram: int, tee_ram: int, shm_size: int, shm_base: Optional[int] = None) -> MemoryPlan:
    """Three-region layout: normal covers RAM, secure sits at the top, shared below it.

    ``shm_base`` overrides where the shared window starts. A shared window that
    runs into the secure region is legal; the secure region wins the overlap.
    """
    if total_ram <= 0 or tee_ram <= 0 or shm_size <= 0:
        raise DomainError("total_ram, tee_ram and shm_size must all be positive")
    if tee_ram + shm_size > total_ram:
        raise CapacityError(f"tee_ram + shm_size = {tee_ram + shm_size} exceeds total_ram = {total_ram}")
    secure_base = total_ram - tee_ram
    if shm_base is None:
        shm_base = secure_base - shm_size
    if shm_base < 0 or shm_base + shm_size > total_ram:
        raise CapacityError(f"shared window [{shm_base}, {shm_base + shm_size}) outside RAM")
    regions = [
        Region(0, 0, total_ram, Access.NORMAL, 0),
        Region(1, shm_base, shm_size, Access.SHARED, 1),
        Region(2, secure_base, tee_ram, Access.SECURE, 2),
    ]
    return MemoryPlan(total_ram, regions, tee_ram, shm_size, num_page_tables(tee_ram / MB))


def check_access(plan: MemoryPlan, addr: int, world: World) -> AccessVerdict:
    if not 0 <= addr < plan.total_ram:
        raise AddressError(f"address {addr:#x} outside [0, {plan.total_ram:#x})")
    world = World(world)
    region = max((r for r in plan.regions if r.contains(addr)), key=lambda r: r.priority)
    if region.access is Access.SECURE:
        if world is World.SECURE:
            return AccessVerdict(True, region.id, Reason.SECURE_OWNER)
        return AccessVerdict(False, region.id, Reason.SECURE_ONLY)
    if region.access is Access.SHARED:
        return AccessVerdict(True, region.id, Reason.SHARED)
    return AccessVerdict(True, region.id, Reason.NORMAL)


def detect_overlaps(plan: MemoryPlan) -> list[Overlap]:
    found = []
    regions = sorted(plan.regions, key=lambda r: r.id)
    for i, a in enumerate(regions):
        for b in regions[i + 1:]:
            start, end = max(a.base, b.base), min(a.end, b.end)
            if start < end:
                winner = a if a.priority > b.priority else b
                found.append(Overlap((a.id, b.id), start, end, winner.id))
    return found


def plan_report(net: NetworkSpec, total_ram: int, shm_size: int, tee_core: int = DEFAULT_TEE_CORE) -> dict:
    """Everything the plan-memory command prints."""
    cost = model_memory_cost(net)
    tee_ram = tee_ram_size(cost, tee_core)
    plan = plan_layout(total_ram, tee_ram, shm_size)
    return {
        "param_count": cost.param_count,
        "m_s_bytes": cost.m_s,
        "f_gc_bytes": cost.f_gc,
        "tee_ram_bytes": tee_ram,
        "num_pgt": plan.num_pgt,
        "regions": [r.to_dict() for r in plan.regions],
        "overlaps": [o.to_dict() for o in detect_overlaps(plan)],
    }
