"""Shared-memory size tuning: sweep transfer delay, fit y = alpha * x**beta,
pick the size where the slope flattens to a threshold.

``x`` is measured in 4 KB units and ``y`` in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitError
from .worldsim.cost import InvokeCostModel, invoke_cost

UNIT_BYTES = 4096
DEFAULT_THRESHOLD = -0.01
DEFAULT_UNITS = tuple(2 ** i for i in range(13))  # 1 .. 4096 units


@dataclass(frozen=True)
class SweepPoint:
    shm_units: int
    delay_s: float


@dataclass(frozen=True)
class FitResult:
    alpha: float
    beta: float
    r_squared: float

    def predict(self, units: float) -> float:
        return self.alpha * units ** self.beta

    def slope(self, units: float) -> float:
        return self.alpha * self.beta * units ** (self.beta - 1)


def simulated_delay_s(total_bytes: int, chunk_bytes: int, model: InvokeCostModel,
                      tee_ram_mb: float = 0.0, remap: bool = False) -> float:
    """Cost-model delay of streaming ``total_bytes`` in ``chunk_bytes`` invokes."""
    full, rest = divmod(total_bytes, chunk_bytes)
    ms = full * invoke_cost(model, tee_ram_mb, remap, chunk_bytes)
    if rest:
        ms += invoke_cost(model, tee_ram_mb, remap, rest)
    return ms / 1000.0


def sweep_transfer(run, units_list) -> list[SweepPoint]:
    """Call ``run(shm_bytes) -> delay_s`` for each size and collect the points.

    ``run`` typically opens a fresh session, streams the weights and reports the
    ledger's simulated time (see :func:`session_runner`).
    """
    units_list = list(units_list)
    if not units_list:
        raise DomainError("unit list is empty")
    if any(u < 1 for u in units_list) or units_list != sorted(units_list):
        raise DomainError("unit list must be positive and ascending")
    return [SweepPoint(u, float(run(u * UNIT_BYTES))) for u in units_list]


def session_runner(spec, blob, key: int, total_ram: int, tee_ram: int,
                   cost_model: InvokeCostModel | None = None, remap: bool = False):
    """A ``run`` callable for :func:`sweep_transfer` that drives real sessions.

    Only the weight-chunk invokes are timed; building the model is excluded.
    """
    from .memlayout import plan_layout
    from .ntinylib.client import build_model, stream_weights
    from .worldsim.session import open_session

    def run(shm_bytes: int) -> float:
        plan = plan_layout(total_ram, tee_ram, shm_bytes)
        session = open_session(plan, cost_model, remap, key)
        try:
            build_model(session, spec)
            before = session.ledger.total_invoke_ms
            stream_weights(session, spec, blob)
            return (session.ledger.total_invoke_ms - before) / 1000.0
        finally:
            session.close()

    return run


def synthetic_points(alpha: float, beta: float, units_list=DEFAULT_UNITS,
                     noise: float = 0.0, seed: int = 0) -> list[SweepPoint]:
    """Points on ``alpha * x**beta`` with optional multiplicative noise in [-noise, noise]."""
    rng = np.random.default_rng(seed)
    jitter = 1.0 + rng.uniform(-noise, noise, len(units_list)) if noise else np.ones(len(units_list))
    return [SweepPoint(u, alpha * u ** beta * j) for u, j in zip(units_list, jitter)]


def fit_power_law(points) -> FitResult:
    """Least squares on (ln x, ln y)."""
    pts = list(points)
    if len(pts) < 2:
        raise FitError(f"need at least 2 points, got {len(pts)}")
    x = np.array([float(p.shm_units) for p in pts])
    y = np.array([float(p.delay_s) for p in pts])
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("power-law fit needs strictly positive x and y")
    if len(np.unique(x)) < 2:
        raise FitError("need at least two distinct sizes")
    lx, ly = np.log(x), np.log(y)
    mx, my = lx.mean(), ly.mean()
    sxx = ((lx - mx) ** 2).sum()
    beta = ((lx - mx) * (ly - my)).sum() / sxx
    intercept = my - beta * mx
    if not beta < 0:
        raise FitError(f"no decreasing trend (beta = {beta:.6g})")
    resid = ly - (intercept + beta * lx)
    ss_tot = ((ly - my) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / ss_tot if ss_tot > 0 else 1.0
    return FitResult(math.exp(intercept), float(beta), float(r2))


def optimal_units(fit: FitResult, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Real-valued size where dy/dx equals ``threshold``."""
    if not fit.beta < 0:
        raise DomainError(f"beta must be negative, got {fit.beta}")
    if not threshold < 0:
        raise DomainError(f"threshold must be negative, got {threshold}")
    if fit.alpha <= 0:
        raise DomainError(f"alpha must be positive, got {fit.alpha}")
    return (threshold / (fit.alpha * fit.beta)) ** (1.0 / (fit.beta - 1.0))


def optimal_shm_size(fit: FitResult, threshold: float = DEFAULT_THRESHOLD) -> tuple[int, float]:
    """(bytes, predicted delay in seconds) at the rounded optimum, never below one unit."""
    units = max(1, round(optimal_units(fit, threshold)))
    return units * UNIT_BYTES, fit.predict(units)


def tune_report(points, threshold: float = DEFAULT_THRESHOLD) -> dict:
    fit = fit_power_law(points)
    size, delay = optimal_shm_size(fit, threshold)
    return {
        "points": [{"units": p.shm_units, "delay_s": p.delay_s} for p in points],
        "alpha": fit.alpha,
        "beta": fit.beta,
        "r2": fit.r_squared,
        "optimal_bytes": size,
        "predicted_delay_s": delay,
    }
