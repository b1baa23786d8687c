"""Whole-body shape visual servoing for multi-section extensible continuum
manipulators, simulated end to end: constant-curvature kinematics, shape
and image Jacobians, vision-only state estimation, reference generation,
the closed-loop controller, and an experiment harness."""

from .camera import (
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    FeatureVector,
    ShapeFeature,
    add_feature_noise,
    backproject,
    default_camera,
    extract_shape_features,
    project,
)
from .control import (
    ControlGains,
    Scenario,
    advance_scenario,
    check_converged,
    compute_error,
    control_step,
)
from .episode import Episode, TrajectoryLog, run_episode
from .estimation import estimate_robot_state, estimated_cables, fit_section_arc
from .geometry import RigidTransform
from .jacobians import (
    block_diag_image_jacobian,
    build_shape_jacobian,
    damped_pinv,
    image_point_jacobian,
)
from .kinematics import (
    ArcParams,
    CableLengths,
    PupJointVector,
    RobotConfig,
    SectionSpec,
    arc_to_cables,
    arc_to_pup,
    cables_to_arc,
    pcc_closed_form,
    robot_forward,
    robot_jacobian,
    section_forward,
)
from .metrics import episode_metrics, steady_state_metrics, transient_metrics
from .plant import PlantState, SimConfig, initial_state, plant_tips, step_plant
from .reference import (
    insert_segments,
    make_reference,
    optimize_reference,
    reference_features,
    two_segment_ik,
)

__version__ = "0.1.0"
