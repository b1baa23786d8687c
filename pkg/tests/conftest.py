import numpy as np
import pytest

from shapeservo.camera import default_camera
from shapeservo.geometry import RigidTransform
from shapeservo.kinematics import ArcParams, RobotConfig, SectionSpec


@pytest.fixture
def section_spec():
    return SectionSpec(d=20.0, s_min=80.0, s_max=200.0)


@pytest.fixture
def robot2(section_spec):
    return RobotConfig(sections=(section_spec, section_spec))


@pytest.fixture
def robot3(section_spec):
    return RobotConfig(sections=(section_spec,) * 3)


@pytest.fixture
def camera():
    return default_camera()


def random_arc(rng, s_range=(85.0, 195.0), theta_range=(0.05, 2.8)):
    s = rng.uniform(*s_range)
    theta = rng.uniform(*theta_range)
    return ArcParams(s=s, kappa=theta / s, phi=rng.uniform(-np.pi, np.pi))


def random_admissible_arc(rng, spec):
    """Arc inside the section's cable-length limits (all three tendons)."""
    while True:
        arc = random_arc(rng, (spec.s_min * 1.07, spec.s_max * 0.93), (0.05, 1.8))
        if arc.kappa * spec.d >= 0.5:
            continue
        from shapeservo.kinematics import arc_to_cables

        cables = arc_to_cables(arc, spec.d)
        if spec.admissible_cables(cables):
            return arc
