import numpy as np
import pytest

from conftest import random_admissible_arc, random_arc
from shapeservo.camera import (
    default_camera,
    extract_shape_features,
    features_from_tips,
    add_feature_noise,
    tips_from_features,
)
from shapeservo.errors import EstimationError
from shapeservo.estimation import (
    estimate_robot_state,
    estimated_cables,
    fit_section_arc,
)
from shapeservo.kinematics import (
    ArcParams,
    RobotConfig,
    arc_to_cables,
    robot_forward,
    section_forward,
)

D = 20.0


class TestFitSectionArc:
    def test_straight(self):
        arc = fit_section_arc(np.array([0.0, 0.0, 100.0]))
        assert (arc.s, arc.kappa, arc.phi) == (100.0, 0.0, 0.0)

    def test_quarter_circle_chord(self):
        arc = fit_section_arc(np.array([100.0, 0.0, 100.0]))
        assert arc.kappa == pytest.approx(0.01, abs=1e-15)
        assert arc.s == pytest.approx((np.pi / 2) / 0.01, abs=1e-9)
        assert arc.phi == pytest.approx(0.0)
        assert arc.theta == pytest.approx(np.pi / 2, abs=1e-12)

    def test_round_trip_against_forward_kinematics(self):
        rng = np.random.default_rng(13)
        for _ in range(500):
            arc = random_arc(rng, theta_range=(1e-6, 2.9))
            tip = section_forward(arc).translation
            fit = fit_section_arc(tip)
            refit_tip = section_forward(fit).translation
            assert np.abs(refit_tip - tip).max() < 1e-9

    def test_degenerate_tip_at_origin(self):
        with pytest.raises(EstimationError):
            fit_section_arc(np.array([0.0, 0.0, 0.0]))

    def test_tip_behind_base_plane(self):
        with pytest.raises(EstimationError):
            fit_section_arc(np.array([50.0, 0.0, -10.0]))

    def test_out_of_range_length(self, section_spec):
        with pytest.raises(EstimationError, match="outside"):
            fit_section_arc(np.array([0.0, 0.0, 50.0]), section_spec)
        # in range passes
        fit_section_arc(np.array([0.0, 0.0, 100.0]), section_spec)


class TestEstimateRobotState:
    def test_single_section_reduces_to_fit_in_base_frame(self, robot2):
        cfg = RobotConfig(sections=robot2.sections[:1], base=robot2.base)
        arc = ArcParams(s=120.0, kappa=0.007, phi=1.1)
        tip = robot_forward(cfg, [arc])[0].translation
        est = estimate_robot_state([tip], cfg.base, cfg)
        direct = fit_section_arc(tip)
        assert est[0].s == pytest.approx(direct.s, abs=1e-12)
        assert est[0].kappa == pytest.approx(direct.kappa, abs=1e-15)

    def test_full_chain_reproduces_observed_tips(self, robot3):
        rng = np.random.default_rng(17)
        for _ in range(50):
            arcs = [random_admissible_arc(rng, s) for s in robot3.sections]
            tips = [f.translation for f in robot_forward(robot3, arcs)]
            est = estimate_robot_state(tips, robot3.base, robot3)
            tips_est = [f.translation for f in robot_forward(robot3, est)]
            for a, b in zip(tips, tips_est):
                assert np.abs(a - b).max() < 1e-9

    def test_consumes_only_world_points(self, robot2):
        # hand-constructed tip list, independent of any plant representation
        tips = [np.array([0.0, 0.0, 100.0]), np.array([30.0, 0.0, 195.0])]
        est = estimate_robot_state(tips, robot2.base, robot2)
        rebuilt = [f.translation for f in robot_forward(robot2, est)]
        assert np.abs(rebuilt[0] - tips[0]).max() < 1e-9
        assert np.abs(rebuilt[1] - tips[1]).max() < 1e-9

    def test_error_carries_section_index(self, robot2):
        tips = [np.array([0.0, 0.0, 100.0]), np.array([0.0, 0.0, 50.0])]
        with pytest.raises(EstimationError) as err:
            estimate_robot_state(tips, robot2.base, robot2)
        assert err.value.section == 2

    def test_clamp_policy_pulls_into_range(self, robot2):
        tips = [np.array([0.0, 0.0, 79.0]), np.array([0.0, 0.0, 180.0])]
        est = estimate_robot_state(tips, robot2.base, robot2, limit_policy="clamp")
        assert est[0].s == pytest.approx(80.0)

    def test_full_pipeline_noiseless(self, robot3):
        cam = default_camera()
        rng = np.random.default_rng(29)
        for _ in range(30):
            arcs = [random_admissible_arc(rng, s) for s in robot3.sections]
            truth = [arc_to_cables(a, s.d) for a, s in zip(arcs, robot3.sections)]
            feats = extract_shape_features(robot3, arcs, cam)
            tips = tips_from_features(feats, cam)
            est_arcs = estimate_robot_state(tips, robot3.base, robot3)
            est = estimated_cables(est_arcs, robot3)
            for a, b in zip(truth, est):
                assert np.abs(a.as_array() - b.as_array()).max() < 1e-6


class TestEstimatedCables:
    def test_straight_arcs_equal_lengths(self, robot2):
        arcs = [ArcParams(s=110.0, kappa=0.0, phi=0.0)] * 2
        cables = estimated_cables(arcs, robot2)
        for c in cables:
            assert c.as_array() == pytest.approx([110.0, 110.0, 110.0])

    def test_worked_example_propagates(self, robot2):
        arcs = [
            ArcParams(s=100.0, kappa=0.005, phi=0.0),
            ArcParams(s=100.0, kappa=0.0, phi=0.0),
        ]
        cables = estimated_cables(arcs, robot2)
        assert cables[0].l2 == pytest.approx(108.66, abs=5e-3)
        assert cables[0].l3 == pytest.approx(91.34, abs=5e-3)


class TestNoiseRegression:
    def test_end_effector_error_bound_under_noise(self, robot3):
        """Monte-Carlo regression bound: 1 px / 1 mm sensor noise keeps the
        reconstructed end-effector position within 5 mm at the default
        1 m camera standoff."""
        cam = default_camera()
        rng = np.random.default_rng(31)
        errors = []
        for _ in range(200):
            arcs = [random_admissible_arc(rng, s) for s in robot3.sections]
            tips_true = [f.translation for f in robot_forward(robot3, arcs)]
            feats = features_from_tips(tips_true, cam)
            noisy = add_feature_noise(feats, 1.0, 0.001, rng=rng)
            tips_obs = tips_from_features(noisy, cam)
            est = estimate_robot_state(
                tips_obs, robot3.base, robot3, limit_policy="clamp"
            )
            ee = robot_forward(robot3, est)[-1].translation
            errors.append(np.linalg.norm(ee - tips_true[-1]))
        assert np.mean(errors) < 5.0
