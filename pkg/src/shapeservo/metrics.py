"""Episode metrics: steady-state error split by space and unit, and
transient rise/settling times from threshold crossings of the error norm."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import MM_PER_M
from .errors import EpisodeTooShortError
from .episode import TrajectoryLog

NOT_SETTLED = float("nan")


@dataclass(frozen=True)
class SpaceErrors:
    """L2 error split into image-plane pixels and metric depth (mm)."""

    image_px: float
    depth_mm: float


@dataclass(frozen=True)
class MetricsReport:
    task: SpaceErrors
    configuration: SpaceErrors
    rise_time: float
    settling_time: float
    converged: bool
    criterion: str = "stringent"
    ringing_frac: float = 0.0
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "task_image_px": self.task.image_px,
            "task_depth_mm": self.task.depth_mm,
            "config_image_px": self.configuration.image_px,
            "config_depth_mm": self.configuration.depth_mm,
            "rise_time_s": self.rise_time,
            "settling_time_s": self.settling_time,
            "converged": self.converged,
            "criterion": self.criterion,
            "ringing_frac": self.ringing_frac,
            "meta": self.meta,
        }


def _split_errors(
    features: np.ndarray, reference: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cycle pixel errors (S, N, 2) and depth errors in mm (S, N),
    the latter linearized about the reference depth."""
    pix = features[:, :, :2] - reference[:, :, :2]
    ref_depth_mm = np.exp(reference[:, :, 2]) * MM_PER_M
    depth_mm = (features[:, :, 2] - reference[:, :, 2]) * ref_depth_mm
    return pix, depth_mm


def steady_state_metrics(
    log: TrajectoryLog, window_frac: float = 0.1
) -> tuple[SpaceErrors, SpaceErrors]:
    """Mean per-cycle L2 errors over the terminal window (last 10% of
    cycles by default), reported as (task, configuration)."""
    n = log.n_cycles
    window = max(int(np.ceil(n * window_frac)), 1)
    if n < 2:
        raise EpisodeTooShortError(f"{n} cycles is too short for steady state")
    pix, depth = _split_errors(log.features, log.reference)
    pix, depth = pix[-window:], depth[-window:]
    task = SpaceErrors(
        image_px=float(np.mean(np.linalg.norm(pix[:, -1, :], axis=-1))),
        depth_mm=float(np.mean(np.abs(depth[:, -1]))),
    )
    configuration = SpaceErrors(
        image_px=float(np.mean(np.linalg.norm(pix.reshape(window, -1), axis=-1))),
        depth_mm=float(np.mean(np.linalg.norm(depth, axis=-1))),
    )
    return task, configuration


_CRITERIA = {
    # rise from/to, settle threshold (fractions of the initial error norm)
    "stringent": (0.9, 0.1, 0.05),
    "relaxed": (0.8, 0.2, 0.10),
}


def transient_metrics(
    log: TrajectoryLog, criterion: str = "stringent"
) -> tuple[float, float]:
    """(rise time, settling time) in seconds from first crossings of the
    configuration-space error norm relative to its initial value.

    Stringent: decay from 90% to 10%, settled below 5%. Relaxed: 80% to
    20%, settled below 10%. Crossings that never happen give NaN.
    """
    if criterion not in _CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    hi_frac, lo_frac, settle_frac = _CRITERIA[criterion]
    norm = log.err_config
    e0 = norm[0]
    if e0 <= 0:
        raise EpisodeTooShortError("initial error norm is zero")

    def first_crossing(frac: float) -> float:
        below = np.nonzero(norm <= frac * e0)[0]
        return float(log.t[below[0]]) if below.size else NOT_SETTLED

    t_hi = first_crossing(hi_frac)
    t_lo = first_crossing(lo_frac)
    rise = t_lo - t_hi if np.isfinite(t_hi) and np.isfinite(t_lo) else NOT_SETTLED
    settle = first_crossing(settle_frac)
    return rise, settle


def ringing_fraction(log: TrajectoryLog, band: float = 0.05) -> float:
    """Overshoot of the error-norm response: the highest the norm climbs
    back after first entering the settling band, as a fraction of the
    initial error norm.

    0 means the response settles and stays settled (the tuning target of
    a critically-damped loop); NaN means the band was never reached.
    Individual feature trajectories may legitimately curve past their
    targets while the whole-body error still contracts, so ringing is
    judged on the norm, not per component.
    """
    norm = log.err_config
    e0 = norm[0]
    if e0 <= 0:
        return 0.0
    inside = np.nonzero(norm < band * e0)[0]
    if not inside.size:
        return float("nan")
    return float(norm[inside[0] :].max() / e0)


def episode_metrics(
    log: TrajectoryLog, criterion: str = "stringent", meta: dict | None = None
) -> MetricsReport:
    task, configuration = steady_state_metrics(log)
    rise, settle = transient_metrics(log, criterion)
    _, _, settle_band = _CRITERIA[criterion]
    ring = ringing_fraction(log, band=settle_band)
    return MetricsReport(
        task=task,
        configuration=configuration,
        rise_time=rise,
        settling_time=settle,
        converged=log.completed,
        criterion=criterion,
        ringing_frac=ring,
        meta=dict(meta or {}),
    )
