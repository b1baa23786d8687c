"""Whole-body shape servo law with convergence checks and reference
sequencing.

Cable commands follow a resolved-rate law: the feature error is pulled
back to desired cartesian tip velocities through the inverted
block-diagonal image Jacobian, rotated into the world frame, then mapped
to cable velocities through the inverted shape Jacobian, scaled by the
servo gain. Both inversions are damped least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, FeatureVector, features_from_tips
from .errors import ControlStepError
from .jacobians import (
    block_diag_image_jacobian,
    blockwise_damped_pinv,
    build_shape_jacobian,
    damped_pinv,
)
from .kinematics import CableLengths, RobotConfig, cables_to_arc, robot_forward


@dataclass(frozen=True)
class ControlGains:
    servo_gain: float = 500.0  # 1/s, scales the resolved-rate command
    damping: float = 1e-3  # DLS damping for both pseudoinverses
    err_threshold: float = 2.0  # default mixed-norm convergence threshold
    max_cable_speed: float = 2000.0  # mm/s, per-cable clamp
    # "exact" decouples the per-feature loop and gives monotone decay;
    # "conventional" and "paper_exact" are the depth-divided variants.
    image_jacobian_mode: str = "exact"
    # Optional diagonal error weighting (length 3N); identity when None.
    error_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.servo_gain <= 0:
            raise ValueError("servo gain must be positive")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")
        if self.max_cable_speed <= 0:
            raise ValueError("max cable speed must be positive")


def compute_error(f: FeatureVector, f_ref: FeatureVector) -> np.ndarray:
    """Elementwise feature error f - f*, flattened [dx1, dy1, dlogz1, ...]."""
    if len(f) != len(f_ref):
        raise ValueError(f"feature count mismatch: {len(f)} vs {len(f_ref)}")
    return f.flat() - f_ref.flat()


def task_error(e: np.ndarray) -> np.ndarray:
    """End-effector sub-error: the last feature's three components."""
    return np.asarray(e)[-3:]


def control_step(
    est_cables: list[CableLengths],
    error: np.ndarray,
    camera: Camera,
    config: RobotConfig,
    gains: ControlGains,
) -> np.ndarray:
    """One resolved-rate evaluation: feature error to clamped cable
    velocities (mm/s, stacked per section).

    The image Jacobian is evaluated at the features implied by the
    estimated state; its inverse output (camera-frame velocities) is
    rotated into the world frame before the shape Jacobian inverse.
    """
    error = np.asarray(error, dtype=float)
    n = config.n_sections
    if error.shape != (3 * n,):
        raise ValueError(f"expected error of length {3 * n}, got {error.shape}")
    if not np.isfinite(error).all():
        raise ControlStepError("non-finite feature error")
    if not error.any():
        return np.zeros(3 * n)

    arcs = [
        cables_to_arc(c, spec.d) for c, spec in zip(est_cables, config.sections)
    ]
    tips = [fr.translation for fr in robot_forward(config, arcs)]
    feats = features_from_tips(tips, camera)
    cx, cy = camera.intrinsics.principal_point
    # Principal-relative pixels; depth in meters so the depth-divided modes
    # stay commensurate with the focal term at the nominal 1 m standoff.
    points = feats.values.copy()
    points[:, 0] -= cx
    points[:, 1] -= cy
    points[:, 2] = np.exp(points[:, 2])
    j_img = block_diag_image_jacobian(
        points, camera.intrinsics.focal, mode=gains.image_jacobian_mode
    )
    j_shape = build_shape_jacobian(config, est_cables)

    weighted = error if gains.error_weights is None else gains.error_weights * error
    v_cam = blockwise_damped_pinv(j_img, gains.damping) @ weighted
    rot_cw = camera.extrinsics.pose.rotation.T
    v_world = (v_cam.reshape(n, 3) @ rot_cw.T).reshape(3 * n)
    v_cable = -gains.servo_gain * (damped_pinv(j_shape, gains.damping) @ v_world)
    if not np.isfinite(v_cable).all():
        raise ControlStepError("non-finite cable command")
    return np.clip(v_cable, -gains.max_cable_speed, gains.max_cable_speed)


def check_converged(e: np.ndarray, threshold: float) -> bool:
    """Strictly below-threshold test on the mixed-unit L2 error norm."""
    return bool(np.linalg.norm(np.asarray(e)) < threshold)


@dataclass(frozen=True)
class Scenario:
    """Ordered reference features with per-reference switch thresholds."""

    references: tuple[FeatureVector, ...]
    thresholds: tuple[float, ...]
    # Optional reference arcs (s, kappa, phi) per reference, for display.
    arcs: tuple | None = None
    name: str = "scenario"

    def __post_init__(self):
        refs = tuple(self.references)
        thr = tuple(float(t) for t in self.thresholds)
        if not refs:
            raise ValueError("scenario needs at least one reference")
        if len(thr) != len(refs):
            raise ValueError("one threshold per reference required")
        if any(t <= 0 for t in thr):
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "thresholds", thr)

    def __len__(self) -> int:
        return len(self.references)

    def is_last(self, index: int) -> bool:
        return index >= len(self.references) - 1

    def is_complete(self, index: int, e: np.ndarray) -> bool:
        return self.is_last(index) and check_converged(e, self.thresholds[index])


def advance_scenario(scenario: Scenario, index: int, e: np.ndarray) -> int:
    """Move to the next reference once the error drops below the current
    threshold; saturates at the last reference."""
    if not 0 <= index < len(scenario):
        raise ValueError(f"reference index {index} out of range")
    if check_converged(e, scenario.thresholds[index]) and not scenario.is_last(index):
        return index + 1
    return index
