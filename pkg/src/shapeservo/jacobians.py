"""Image-side and robot-side Jacobians of the shape servo loop.

Two matrix constructions: a block-diagonal image Jacobian that decouples
the cartesian velocity of every tracked tip point, and a block
lower-triangular robot-shape Jacobian that maps all cable velocities to
the stacked tip velocities of every section. Both invert blockwise.
"""

from __future__ import annotations

import numpy as np

from .errors import DepthTooSmallError
from .kinematics import KAPPA_FLOOR, CableLengths, RobotConfig, tip_jacobian_blocks

# Smallest feature depth accepted when building a point Jacobian. The
# depth unit is the caller's choice; the control loop passes meters.
DEPTH_MIN_DEFAULT = 1e-9


def image_point_jacobian(
    x: float,
    y: float,
    z: float,
    focal: float,
    mode: str = "conventional",
    z_min: float = DEPTH_MIN_DEFAULT,
) -> np.ndarray:
    """3x3 point Jacobian for one hybrid feature (x, y, log z).

    x, y are pixel coordinates relative to the principal point; z is the
    point's depth. Three variants:

    - "conventional" (default): [[f, 0, -x/z], [0, f, -y/z], [0, 0, -1]],
      symmetric focal scaling with the depth-divided coupling column.
    - "paper_exact": [[f, 0, -x/z], [0, 1/f, -y/z], [0, 0, -1]], the
      asymmetric-focal variant; its mixed row scalings make it unsuitable
      for driving the closed loop at default gains.
    - "exact": [[f, 0, -x], [0, f, -y], [0, 0, 1]], the depth-scaled true
      derivative of the hybrid feature map (equal to z times the physical
      interaction matrix, the uniform 1/z absorbed by the servo gain).
      The coupling column carries no depth division, which is what makes
      the closed-loop error decay monotone; the control path defaults to
      this form.
    """
    if z <= z_min:
        raise DepthTooSmallError(f"feature depth {z} <= minimum {z_min}")
    if mode == "conventional":
        return np.array(
            [[focal, 0.0, -x / z], [0.0, focal, -y / z], [0.0, 0.0, -1.0]]
        )
    if mode == "paper_exact":
        return np.array(
            [[focal, 0.0, -x / z], [0.0, 1.0 / focal, -y / z], [0.0, 0.0, -1.0]]
        )
    if mode == "exact":
        return np.array([[focal, 0.0, -x], [0.0, focal, -y], [0.0, 0.0, 1.0]])
    raise ValueError(f"unknown image Jacobian mode {mode!r}")


def block_diag_image_jacobian(
    points: np.ndarray,
    focal: float,
    mode: str = "conventional",
    z_min: float = DEPTH_MIN_DEFAULT,
) -> np.ndarray:
    """Assemble per-point Jacobians into one block-diagonal (3N, 3N) matrix.

    points is (N, 3): principal-relative pixel x, y and depth per feature.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError(f"points must be (N, 3), got {pts.shape}")
    n = pts.shape[0]
    out = np.zeros((3 * n, 3 * n))
    for k, (x, y, z) in enumerate(pts):
        try:
            out[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] = image_point_jacobian(
                x, y, z, focal, mode=mode, z_min=z_min
            )
        except DepthTooSmallError as exc:
            raise DepthTooSmallError(f"feature {k}: {exc}") from None
    return out


def build_shape_jacobian(
    config: RobotConfig,
    cables: list[CableLengths],
    kappa_floor: float = KAPPA_FLOOR,
) -> np.ndarray:
    """Block lower-triangular (3N, 3N) map from all cable velocities to the
    stacked world-frame tip velocities of every section.

    Row block i equals the tip-i cable Jacobian over sections 1..i; blocks
    above the diagonal are exactly zero.
    """
    n = config.n_sections
    blocks = tip_jacobian_blocks(config, cables, kappa_floor)
    out = np.zeros((3 * n, 3 * n))
    for i in range(n):
        for j in range(i + 1):
            out[3 * i : 3 * i + 3, 3 * j : 3 * j + 3] = blocks[i][j]
    return out


def damped_pinv(m: np.ndarray, mu: float = 0.0) -> np.ndarray:
    """Damped least-squares pseudoinverse.

    For wide or square m returns m^T (m m^T + mu^2 I)^-1; for tall m the
    transposed form. mu = 0 falls back to the Moore-Penrose pseudoinverse.
    """
    if mu < 0:
        raise ValueError("damping must be >= 0")
    m = np.asarray(m, dtype=float)
    if mu == 0.0:
        return np.linalg.pinv(m)
    rows, cols = m.shape
    if rows <= cols:
        return m.T @ np.linalg.inv(m @ m.T + mu * mu * np.eye(rows))
    return np.linalg.inv(m.T @ m + mu * mu * np.eye(cols)) @ m.T


def _inv3_batched(a: np.ndarray) -> np.ndarray:
    """Adjugate inverse of a stack of invertible 3x3 matrices; pure
    arithmetic, no per-matrix LAPACK dispatch."""
    c00 = a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1]
    c01 = a[:, 0, 2] * a[:, 2, 1] - a[:, 0, 1] * a[:, 2, 2]
    c02 = a[:, 0, 1] * a[:, 1, 2] - a[:, 0, 2] * a[:, 1, 1]
    c10 = a[:, 1, 2] * a[:, 2, 0] - a[:, 1, 0] * a[:, 2, 2]
    c11 = a[:, 0, 0] * a[:, 2, 2] - a[:, 0, 2] * a[:, 2, 0]
    c12 = a[:, 0, 2] * a[:, 1, 0] - a[:, 0, 0] * a[:, 1, 2]
    c20 = a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0]
    c21 = a[:, 0, 1] * a[:, 2, 0] - a[:, 0, 0] * a[:, 2, 1]
    c22 = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    det = a[:, 0, 0] * c00 + a[:, 0, 1] * c10 + a[:, 0, 2] * c20
    adj = np.stack(
        [
            np.stack([c00, c01, c02], axis=-1),
            np.stack([c10, c11, c12], axis=-1),
            np.stack([c20, c21, c22], axis=-1),
        ],
        axis=1,
    )
    return adj / det[:, None, None]


def blockwise_damped_pinv(m: np.ndarray, mu: float = 0.0, block: int = 3) -> np.ndarray:
    """Damped pseudoinverse of a block-diagonal matrix, inverting each
    (block, block) diagonal block independently in one batched pass."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or n % block:
        raise ValueError(f"expected square matrix of {block}-blocks, got {m.shape}")
    k = n // block
    idx = np.arange(k)
    blocks = m.reshape(k, block, k, block)[idx, :, idx, :]
    if mu == 0.0:
        inv = np.linalg.pinv(blocks)
    else:
        # damped grams are symmetric positive definite: adjugate inversion
        # is safe and avoids per-block LAPACK dispatch
        gram = blocks @ blocks.transpose(0, 2, 1) + mu * mu * np.eye(block)
        if block == 3:
            inv = blocks.transpose(0, 2, 1) @ _inv3_batched(gram)
        else:
            inv = blocks.transpose(0, 2, 1) @ np.linalg.inv(gram)
    out = np.zeros_like(m)
    view = out.reshape(k, block, k, block)
    view[idx, :, idx, :] = inv
    return out
