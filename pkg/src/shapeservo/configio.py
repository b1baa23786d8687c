"""JSON configuration files: robot description, camera, control gains,
and scenario (reference sequence) files.

Lengths in files default to mm; a top-level "units" field of "m" or "mm"
converts on load. Poses are given as position + wxyz quaternion; the
camera pose is the camera's frame expressed in the world (its position
and axis orientation), converted internally to the world-to-camera map.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .camera import Camera, CameraExtrinsics, CameraIntrinsics, FeatureVector
from .control import ControlGains, Scenario
from .geometry import RigidTransform, quat_to_rotation, rotation_to_quat
from .kinematics import ArcParams, RobotConfig, SectionSpec
from .reference import make_reference, reference_features

_UNIT_SCALE = {"mm": 1.0, "m": 1000.0}


def _scale_of(payload: dict) -> float:
    units = payload.get("units", "mm")
    if units not in _UNIT_SCALE:
        raise ValueError(f"unknown units {units!r}, expected 'mm' or 'm'")
    return _UNIT_SCALE[units]


def _pose_from(payload: dict, scale: float) -> RigidTransform:
    position = np.asarray(payload.get("position", [0.0, 0.0, 0.0]), dtype=float)
    quat = payload.get("quaternion", [1.0, 0.0, 0.0, 0.0])
    return RigidTransform(
        rotation=quat_to_rotation(quat), translation=position * scale
    )


def _pose_to(transform: RigidTransform) -> dict:
    return {
        "position": transform.translation.tolist(),
        "quaternion": rotation_to_quat(transform.rotation).tolist(),
    }


def default_robot(n_sections: int = 2) -> RobotConfig:
    """The reference robot: tendons at 20 mm radius, sections extensible
    from 80 mm to 200 mm."""
    spec = SectionSpec(d=20.0, s_min=80.0, s_max=200.0)
    return RobotConfig(sections=(spec,) * n_sections)


def load_robot(path: str | Path) -> RobotConfig:
    payload = json.loads(Path(path).read_text())
    scale = _scale_of(payload)
    sections = tuple(
        SectionSpec(
            d=s["d"] * scale, s_min=s["s_min"] * scale, s_max=s["s_max"] * scale
        )
        for s in payload["sections"]
    )
    base = _pose_from(payload.get("base", {}), scale)
    return RobotConfig(sections=sections, base=base)


def save_robot(config: RobotConfig, path: str | Path) -> None:
    payload = {
        "units": "mm",
        "sections": [
            {"d": s.d, "s_min": s.s_min, "s_max": s.s_max} for s in config.sections
        ],
        "base": _pose_to(config.base),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_camera(path: str | Path) -> Camera:
    payload = json.loads(Path(path).read_text())
    scale = _scale_of(payload)
    intr = CameraIntrinsics(
        focal=float(payload.get("focal", 600.0)),
        principal_point=tuple(payload.get("principal_point", (640.0, 360.0))),
        resolution=tuple(payload.get("resolution", (1280, 720))),
    )
    cam_in_world = _pose_from(payload.get("pose", {}), scale)
    return Camera(
        intrinsics=intr, extrinsics=CameraExtrinsics(pose=cam_in_world.inverse())
    )


def save_camera(cam: Camera, path: str | Path) -> None:
    payload = {
        "units": "mm",
        "focal": cam.intrinsics.focal,
        "principal_point": list(cam.intrinsics.principal_point),
        "resolution": list(cam.intrinsics.resolution),
        "pose": _pose_to(cam.extrinsics.pose.inverse()),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_gains(path: str | Path) -> ControlGains:
    payload = json.loads(Path(path).read_text())
    kwargs = {
        k: payload[k]
        for k in (
            "servo_gain",
            "damping",
            "err_threshold",
            "max_cable_speed",
            "image_jacobian_mode",
        )
        if k in payload
    }
    if "error_weights" in payload and payload["error_weights"] is not None:
        kwargs["error_weights"] = np.asarray(payload["error_weights"], dtype=float)
    return ControlGains(**kwargs)


def save_gains(gains: ControlGains, path: str | Path) -> None:
    payload = {
        "servo_gain": gains.servo_gain,
        "damping": gains.damping,
        "err_threshold": gains.err_threshold,
        "max_cable_speed": gains.max_cable_speed,
        "image_jacobian_mode": gains.image_jacobian_mode,
        "error_weights": None
        if gains.error_weights is None
        else np.asarray(gains.error_weights).tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_scenario(
    path: str | Path,
    config: RobotConfig,
    camera: Camera,
    default_threshold: float = 2.0,
) -> Scenario:
    """Scenario file: ordered references given as explicit feature vectors,
    arc chains, or clicked targets resolved through the reference
    generator."""
    payload = json.loads(Path(path).read_text())
    refs, thresholds, arcs_out = [], [], []
    for k, entry in enumerate(payload["references"]):
        threshold = float(entry.get("threshold", default_threshold))
        if "features" in entry:
            refs.append(FeatureVector(np.asarray(entry["features"], dtype=float)))
            arcs_out.append(None)
        elif "arcs" in entry:
            arcs = [ArcParams(s=a[0], kappa=a[1], phi=a[2]) for a in entry["arcs"]]
            if len(arcs) != config.n_sections:
                raise ValueError(f"reference {k}: expected {config.n_sections} arcs")
            refs.append(reference_features(arcs, config.base, camera))
            arcs_out.append(arcs)
        elif "target" in entry:
            t = entry["target"]
            arcs, feats = make_reference(
                config,
                camera,
                pixel=tuple(t["pixel"]),
                depth_m=float(t["depth"]),
                tangent=t.get("tangent"),
                criterion=t.get("criterion", "balance-curvature"),
            )
            refs.append(feats)
            arcs_out.append(arcs)
        else:
            raise ValueError(
                f"reference {k}: need one of 'features', 'arcs', 'target'"
            )
        thresholds.append(threshold)
    return Scenario(
        references=tuple(refs),
        thresholds=tuple(thresholds),
        arcs=tuple(arcs_out),
        name=payload.get("name", Path(path).stem),
    )


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    payload = {
        "name": scenario.name,
        "references": [
            {"features": ref.values.tolist(), "threshold": thr}
            for ref, thr in zip(scenario.references, scenario.thresholds)
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2))
