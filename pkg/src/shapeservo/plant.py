"""Kinematic plant: integrates commanded cable velocities under actuator
limits and exposes ground-truth tip positions to the synthetic camera."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import CableLengths, RobotConfig, cables_to_arc, robot_forward


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1  # s, one control period (10 Hz loop)
    actuator_lag: float = 0.0  # s, first-order rate time constant; 0 = ideal
    max_steps: int = 600
    # Extra cycles run after the last reference converges so steady-state
    # metrics see a settled terminal window.
    settle_steps: int = 20

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.actuator_lag < 0:
            raise ValueError("actuator lag must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class PlantState:
    """Cable lengths per section (N, 3) in mm, simulation time, and the
    actuator rate state used when first-order lag is enabled."""

    cables: np.ndarray
    time: float = 0.0
    rates: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.cables, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError(f"cables must be (N, 3), got {c.shape}")
        object.__setattr__(self, "cables", c)
        if self.rates is not None:
            r = np.asarray(self.rates, dtype=float)
            if r.shape != c.shape:
                raise ValueError("rates must match cables shape")
            object.__setattr__(self, "rates", r)

    def cable_lengths(self) -> list[CableLengths]:
        return [CableLengths(*row) for row in self.cables]

    @property
    def n_sections(self) -> int:
        return self.cables.shape[0]


def initial_state(config: RobotConfig) -> PlantState:
    """Reset pose: every section retracted to its minimum length, straight."""
    cables = np.array(
        [[spec.s_min] * 3 for spec in config.sections], dtype=float
    )
    return PlantState(cables=cables, time=0.0)


# Structural validity margins: the constant-curvature model needs the
# bend angle below pi and positive cable lengths (kappa*d < 1).
_BEND_CAP = 0.98 * np.pi
_KD_CAP = 0.98


def _project_differential(cables: np.ndarray, spec) -> tuple[np.ndarray, bool]:
    """Shrink the tendon differential toward the mean when it implies a
    bend or curvature outside model validity; curvature scales linearly
    with the differential, so one scale factor restores both caps."""
    s = cables.mean()
    diff = cables - s
    if not diff.any():
        return cables, False
    l1, l2, l3 = cables
    disc = l1 * l1 + l2 * l2 + l3 * l3 - l1 * l2 - l2 * l3 - l3 * l1
    kappa = 2.0 * np.sqrt(max(disc, 0.0)) / (spec.d * (l1 + l2 + l3))
    kappa_cap = min(_BEND_CAP / s, _KD_CAP / spec.d)
    if kappa <= kappa_cap:
        return cables, False
    return s + diff * (kappa_cap / kappa), True


def step_plant(
    state: PlantState,
    v_cable: np.ndarray,
    sim: SimConfig,
    config: RobotConfig,
) -> tuple[PlantState, np.ndarray]:
    """Integrate one control period and clamp to the actuator limits.

    Per-cable range limits apply first, then the tendon differential is
    projected back inside the model validity region (bend below pi,
    positive cable lengths) if a command tried to leave it. Returns the
    new state and a boolean (N, 3) array flagging cables altered by either
    clamp. Clamps, never raises.
    """
    n = state.n_sections
    v = np.asarray(v_cable, dtype=float).reshape(n, 3)
    if sim.actuator_lag > 0:
        prev = state.rates if state.rates is not None else np.zeros_like(v)
        rates = prev + (sim.dt / sim.actuator_lag) * (v - prev)
    else:
        rates = v
    raw = state.cables + rates * sim.dt
    lo = np.array([[spec.s_min] * 3 for spec in config.sections])
    hi = np.array([[spec.s_max] * 3 for spec in config.sections])
    clamped_cables = np.clip(raw, lo, hi)
    flags = clamped_cables != raw
    for j, spec in enumerate(config.sections):
        projected, hit = _project_differential(clamped_cables[j], spec)
        if hit:
            clamped_cables[j] = np.clip(projected, lo[j], hi[j])
            flags[j] = True
    new_state = PlantState(
        cables=clamped_cables,
        time=state.time + sim.dt,
        rates=rates if sim.actuator_lag > 0 else None,
    )
    return new_state, flags


def plant_tips(state: PlantState, config: RobotConfig) -> list[np.ndarray]:
    """Ground-truth world-frame tip positions of every section."""
    arcs = [
        cables_to_arc(c, spec.d)
        for c, spec in zip(state.cable_lengths(), config.sections)
    ]
    return [frame.translation for frame in robot_forward(config, arcs)]
