"""Vision-only state estimation: constant-curvature arcs fitted to the
observed tip points, section by section, then converted to cable lengths.

The estimator consumes world-frame tip positions only (the markers give
position and depth, not orientation); intermediate frame orientations come
from the fitted arcs themselves.
"""

from __future__ import annotations

import numpy as np

from .errors import EstimationError
from .geometry import RigidTransform
from .kinematics import (
    ArcParams,
    CableLengths,
    RobotConfig,
    SectionSpec,
    arc_to_cables,
    section_forward,
)

# Below this lateral offset (relative to z) the tip is treated as straight
# ahead and the fit uses the small-angle series.
_RHO_RATIO_CUTOFF = 1e-8


def fit_section_arc(
    tip_local: np.ndarray, spec: SectionSpec | None = None
) -> ArcParams:
    """Fit one constant-curvature arc to a tip position in the section's
    base frame (z along the base tangent).

    Closed-form chord inversion: phi from the lateral direction, curvature
    from the chord, bend angle from atan2(rho, z). When spec is given the
    implied arc length must fall inside [s_min, s_max].
    """
    x, y, z = np.asarray(tip_local, dtype=float)
    rho = float(np.hypot(x, y))
    if rho == 0.0 and z == 0.0:
        raise EstimationError(0, "tip coincides with section base")
    if z <= 0.0:
        raise EstimationError(
            0, f"tip z = {z:.3f} mm behind the base tangent plane"
        )
    phi = float(np.arctan2(y, x)) if rho > 0.0 else 0.0
    chord_sq = rho * rho + z * z
    kappa = 2.0 * rho / chord_sq
    t = rho / z
    if t < _RHO_RATIO_CUTOFF:
        s = z * (1.0 + (2.0 / 3.0) * t * t)
        kappa = 0.0 if rho == 0.0 else kappa
        phi = 0.0 if kappa == 0.0 else phi
    else:
        theta = 2.0 * float(np.arctan2(rho, z))
        s = theta / kappa
    arc = ArcParams(s=s, kappa=kappa, phi=phi)
    if spec is not None and not (spec.s_min <= arc.s <= spec.s_max):
        raise EstimationError(
            0,
            f"implied arc length {arc.s:.3f} mm outside "
            f"[{spec.s_min}, {spec.s_max}]",
        )
    return arc


def _clamp_to_spec(arc: ArcParams, spec: SectionSpec) -> ArcParams:
    s = min(max(arc.s, spec.s_min), spec.s_max)
    # Keep the cable mapping in-domain under measurement noise: positive
    # cable lengths (kappa*d < 1) and a bend below pi at the clamped length.
    kappa = min(arc.kappa, 0.99 / spec.d, 0.98 * np.pi / s)
    if s == arc.s and kappa == arc.kappa:
        return arc
    return ArcParams(s=s, kappa=kappa, phi=arc.phi)


def estimate_robot_state(
    tips_world: list[np.ndarray],
    base: RigidTransform,
    config: RobotConfig,
    limit_policy: str = "raise",
) -> list[ArcParams]:
    """Fit arcs to the observed tips, base to tip, rebuilding each section's
    base frame from the arcs fitted so far.

    limit_policy: "raise" rejects out-of-range arc lengths, "clamp" pulls
    them back inside the section limits (used in the noisy closed loop),
    "off" skips the check.
    """
    if len(tips_world) != config.n_sections:
        raise ValueError(
            f"expected {config.n_sections} tips, got {len(tips_world)}"
        )
    if limit_policy not in ("raise", "clamp", "off"):
        raise ValueError(f"unknown limit policy {limit_policy!r}")
    arcs: list[ArcParams] = []
    frame = base
    for k, tip in enumerate(tips_world):
        local = frame.inverse().apply(np.asarray(tip, dtype=float))
        try:
            arc = fit_section_arc(
                local, config.sections[k] if limit_policy == "raise" else None
            )
        except EstimationError as exc:
            raise EstimationError(k + 1, exc.message) from None
        if limit_policy == "clamp":
            arc = _clamp_to_spec(arc, config.sections[k])
        arcs.append(arc)
        frame = frame @ section_forward(arc)
    return arcs


def estimated_cables(
    arcs: list[ArcParams], config: RobotConfig
) -> list[CableLengths]:
    """Convert fitted arcs to the cable lengths fed into the shape Jacobian."""
    return [
        arc_to_cables(arc, spec.d) for arc, spec in zip(arcs, config.sections)
    ]
