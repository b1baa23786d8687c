"""Synthetic pinhole camera observing the robot body from outside.

Replaces a physical RGB-D sensor: projects world points to pixel
coordinates plus metric depth, and extracts the hybrid shape features
(pixel position and log depth of every section tip). Depth is carried in
meters inside the log; pixel coordinates are absolute (principal point
included) unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, VisibilityError
from .geometry import RigidTransform
from .kinematics import ArcParams, RobotConfig, robot_forward

MM_PER_M = 1000.0


@dataclass(frozen=True)
class CameraIntrinsics:
    focal: float = 600.0  # px
    principal_point: tuple[float, float] = (640.0, 360.0)
    resolution: tuple[int, int] = (1280, 720)

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        cx, cy = self.principal_point
        w, h = self.resolution
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise ValueError("principal point must lie inside the resolution")


@dataclass(frozen=True)
class CameraExtrinsics:
    """World-to-camera transform: p_cam = pose.apply(p_world)."""

    pose: RigidTransform = field(default_factory=RigidTransform.identity)


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    extrinsics: CameraExtrinsics = field(default_factory=CameraExtrinsics)


def default_camera() -> Camera:
    """Camera 1 m in front of the robot base, raised to mid-workspace,
    optical axis along world +y, image x along world +x."""
    rotation = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    center = np.array([0.0, -1000.0, 300.0])
    pose = RigidTransform(rotation=rotation, translation=-rotation @ center)
    return Camera(extrinsics=CameraExtrinsics(pose=pose))


@dataclass(frozen=True)
class ShapeFeature:
    """One hybrid feature: absolute pixel coordinates + log metric depth."""

    x: float
    y: float
    logz: float

    def depth_m(self) -> float:
        return float(np.exp(self.logz))


class FeatureVector:
    """Ordered section-tip features, base to tip.

    The flattened layout [x1, y1, logz1, x2, y2, logz2, ...] is the single
    source of truth shared by the error vector and Jacobian assembly.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
            raise ValueError(f"feature array must be (N, 3), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("features must be finite")
        self.values = v

    @classmethod
    def from_features(cls, features: list[ShapeFeature]) -> "FeatureVector":
        return cls(np.array([[f.x, f.y, f.logz] for f in features]))

    @classmethod
    def from_flat(cls, flat: np.ndarray) -> "FeatureVector":
        flat = np.asarray(flat, dtype=float)
        if flat.size % 3:
            raise ValueError("flat feature vector length must be divisible by 3")
        return cls(flat.reshape(-1, 3))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1).copy()

    def feature(self, i: int) -> ShapeFeature:
        x, y, logz = self.values[i]
        return ShapeFeature(x=float(x), y=float(y), logz=float(logz))

    def depths_m(self) -> np.ndarray:
        return np.exp(self.values[:, 2])

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureVector) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self) -> str:
        return f"FeatureVector({self.values!r})"


def project(p_world: np.ndarray, cam: Camera) -> tuple[np.ndarray, float]:
    """World point (mm) to (pixel, depth in meters)."""
    p_cam = cam.extrinsics.pose.apply(np.asarray(p_world, dtype=float))
    z = p_cam[2]
    if z <= 0:
        raise BehindCameraError(f"point at camera-frame z = {z:.3f} mm")
    cx, cy = cam.intrinsics.principal_point
    f = cam.intrinsics.focal
    pixel = np.array([cx + f * p_cam[0] / z, cy + f * p_cam[1] / z])
    return pixel, float(z / MM_PER_M)


def backproject(pixel: np.ndarray, depth_m: float, cam: Camera) -> np.ndarray:
    """Inverse of project: (pixel, depth in meters) to a world point (mm)."""
    if depth_m <= 0:
        raise ValueError(f"depth must be positive, got {depth_m}")
    cx, cy = cam.intrinsics.principal_point
    f = cam.intrinsics.focal
    z = depth_m * MM_PER_M
    p_cam = np.array([(pixel[0] - cx) * z / f, (pixel[1] - cy) * z / f, z])
    return cam.extrinsics.pose.inverse().apply(p_cam)


def feature_from_point(p_world: np.ndarray, cam: Camera) -> ShapeFeature:
    pixel, depth = project(p_world, cam)
    return ShapeFeature(x=float(pixel[0]), y=float(pixel[1]), logz=float(np.log(depth)))


def extract_shape_features(
    config: RobotConfig, arcs: list[ArcParams], cam: Camera
) -> FeatureVector:
    """Project every section tip; raises naming the first hidden section."""
    tips = [frame.translation for frame in robot_forward(config, arcs)]
    return features_from_tips(tips, cam)


def features_from_tips(tips: list[np.ndarray], cam: Camera) -> FeatureVector:
    feats = []
    for k, tip in enumerate(tips):
        try:
            feats.append(feature_from_point(tip, cam))
        except BehindCameraError as exc:
            raise VisibilityError(k + 1, f"section {k + 1} tip behind camera: {exc}")
    return FeatureVector.from_features(feats)


def tips_from_features(f: FeatureVector, cam: Camera) -> list[np.ndarray]:
    """Back-project every feature to a world point (mm)."""
    return [
        backproject(f.values[i, :2], float(np.exp(f.values[i, 2])), cam)
        for i in range(len(f))
    ]


def add_feature_noise(
    f: FeatureVector,
    sigma_px: float,
    sigma_depth_m: float,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> FeatureVector:
    """Perturb pixels (px) and depth (meters, before the log) with seeded
    Gaussian noise. Deterministic for a given seed or generator state."""
    if sigma_px < 0 or sigma_depth_m < 0:
        raise ValueError("noise levels must be >= 0")
    if sigma_px == 0 and sigma_depth_m == 0:
        return FeatureVector(f.values.copy())
    if rng is None:
        rng = np.random.default_rng(seed)
    values = f.values.copy()
    n = values.shape[0]
    values[:, :2] += rng.normal(0.0, 1.0, size=(n, 2)) * sigma_px
    depths = np.exp(values[:, 2]) + rng.normal(0.0, 1.0, size=n) * sigma_depth_m
    if (depths <= 0).any():
        depths = np.maximum(depths, 1e-6)
    values[:, 2] = np.log(depths)
    return FeatureVector(values)
