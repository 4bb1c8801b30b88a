"""Single-particle steps on plain numpy state objects.

These mirror the compiled kernels one step at a time and exist for testing
and inspection; bulk simulation goes through :mod:`mftx.sim.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..params import ChannelParams, SimParams, mf_step_probability
from .geometry import FusionEvent, fusion_point, fusion_time

DIFFUSING = "diffusing"
ABSORBED = "absorbed"
DEGRADED = "degraded"


@dataclass(frozen=True)
class VesicleState:
    """Vesicle in the TX frame (TX centre at the origin)."""

    position: np.ndarray
    time: float = 0.0
    alive: bool = True
    fused_at: tuple | None = None  # (time, membrane point)


@dataclass(frozen=True)
class MoleculeState:
    position: np.ndarray
    released_at: float
    time: float
    status: str = DIFFUSING
    event_time: float | None = None


@dataclass(frozen=True)
class StepContext:
    """Where the spheres are during a molecule step.

    ``D`` overrides the channel's D_sigma, e.g. with D2 for RX-relative
    tracking of a mobile pair.
    """

    rx_center: np.ndarray
    tx_center: np.ndarray
    D: float | None = None


def new_vesicle(t0: float = 0.0) -> VesicleState:
    return VesicleState(np.zeros(3), t0)


def step_vesicle(state: VesicleState, params: ChannelParams, sim: SimParams,
                 rng: np.random.Generator):
    """Advance one vesicle by one step; returns (state, FusionEvent or None)."""
    if not state.alive:
        raise ValueError("vesicle has already fused")
    dt = sim.dt
    p0 = state.position
    p1 = p0 + math.sqrt(2.0 * params.D_v * dt) * rng.standard_normal(3)
    t = state.time + dt
    if p1 @ p1 <= params.r_T**2:
        return replace(state, position=p1, time=t), None
    if rng.random() < mf_step_probability(params.k_f, params.D_v, dt):
        ev = fusion_point(p0, p1, params.r_T)
        ev = FusionEvent(ev.L1, ev.L2, ev.L3, ev.point, fusion_time(p0, ev.point, p1, dt))
        t_f = state.time + ev.dt_f
        return replace(state, position=ev.point, time=t_f, alive=False,
                       fused_at=(t_f, ev.point)), ev
    return replace(state, time=t), None


def step_molecule(state: MoleculeState, params: ChannelParams, sim: SimParams,
                  ctx: StepContext, rng: np.random.Generator) -> MoleculeState:
    """Advance one molecule by one step (degradation, diffusion, absorption)."""
    if state.status != DIFFUSING:
        raise ValueError(f"molecule is {state.status}")
    dt = sim.dt
    D = params.D_sigma if ctx.D is None else ctx.D
    t = state.time
    rel0 = state.position - ctx.rx_center
    if rel0 @ rel0 <= params.r_R**2:
        return replace(state, status=ABSORBED, event_time=t)
    if params.k_d > 0 and rng.random() >= math.exp(-params.k_d * dt):
        return replace(state, status=DEGRADED, event_time=t)
    p0 = state.position
    p1 = p0 + math.sqrt(2.0 * D * dt) * rng.standard_normal(3)
    if sim.membrane_mode == "reflecting":
        e = p1 - ctx.tx_center
        if e @ e < params.r_T**2:
            return replace(state, time=t + dt)
    rel1 = p1 - ctx.rx_center
    if rel1 @ rel1 <= params.r_R**2:
        hit = fusion_point(rel1, rel0, params.r_R).point
        t_hit = t + fusion_time(rel0, hit, rel1, dt)
        return replace(state, position=p1, time=t + dt, status=ABSORBED, event_time=t_hit)
    if sim.crossing == "bridge":
        e = ((math.sqrt(rel0 @ rel0) - params.r_R) * (math.sqrt(rel1 @ rel1) - params.r_R)
             / (D * dt))
        if e < 40.0 and rng.random() < math.exp(-e):
            return replace(state, position=p1, time=t + dt, status=ABSORBED,
                           event_time=t + 0.5 * dt)
    return replace(state, position=p1, time=t + dt)
