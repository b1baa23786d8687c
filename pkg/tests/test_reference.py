import numpy as np
import pytest

from shapeservo.camera import default_camera, project
from shapeservo.errors import InfeasibleReferenceError, UnreachableTargetError
from shapeservo.kinematics import ArcParams, SectionSpec
from shapeservo.reference import (
    PlanarArc,
    PlanarPose,
    arcs_to_planar,
    chain_frames,
    insert_segments,
    make_reference,
    optimize_reference,
    planar_chain_end,
    planar_to_arcs,
    reference_features,
    sample_reference,
    two_segment_ik,
    two_segment_planar_ik,
)


def planar_fk_3d_consistency(planar, plane=0.0):
    """In-plane closed form and the embedded 3-D chain must agree."""
    from shapeservo.geometry import RigidTransform

    arcs = planar_to_arcs(planar, plane)
    end = chain_frames(arcs, RigidTransform.identity())[-1].translation
    pose = planar_chain_end(PlanarPose(0.0, 0.0, 0.0), planar)
    r = np.hypot(end[0], end[1])
    r = r if (end[0] * np.cos(plane) + end[1] * np.sin(plane)) >= 0 else -r
    return (r, end[2]), (pose.x, pose.z)


class TestPlanarGeometry:
    def test_planar_matches_embedded_3d(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            planar = [
                PlanarArc(k=rng.uniform(-0.012, 0.012), s=rng.uniform(85, 195))
                for _ in range(3)
            ]
            if any(abs(a.turn) >= np.pi for a in planar):
                continue
            got, want = planar_fk_3d_consistency(planar, rng.uniform(-np.pi, np.pi))
            assert got == pytest.approx(want, abs=1e-9)

    def test_round_trip_arcs_planar(self):
        arcs = [
            ArcParams(s=100.0, kappa=0.004, phi=1.2),
            ArcParams(s=150.0, kappa=0.002, phi=1.2 - np.pi),
            ArcParams(s=120.0, kappa=0.0, phi=0.0),
        ]
        planar, plane = arcs_to_planar(arcs)
        assert plane == pytest.approx(1.2)
        assert planar[0].k == pytest.approx(0.004)
        assert planar[1].k == pytest.approx(-0.002)
        assert planar[2].k == 0.0


class TestTwoSegmentIk:
    def test_collinear_target_gives_straight_pair(self):
        pair = two_segment_planar_ik(PlanarPose(0.0, 240.0, 0.0))
        assert pair[0].k == 0.0 and pair[1].k == 0.0
        assert pair[0].s + pair[1].s == pytest.approx(240.0)

    def test_round_trip_from_random_chain_pose(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            chain = [
                PlanarArc(k=rng.uniform(-0.01, 0.01), s=rng.uniform(90, 190))
                for _ in range(2)
            ]
            target = planar_chain_end(PlanarPose(0.0, 0.0, 0.0), chain)
            pair = two_segment_planar_ik(target)
            reached = planar_chain_end(PlanarPose(0.0, 0.0, 0.0), list(pair))
            assert np.hypot(reached.x - target.x, reached.z - target.z) < 1e-6
            assert reached.heading == pytest.approx(target.heading, abs=1e-9)

    def test_mirror_symmetry(self):
        target = PlanarPose(120.0, 260.0, 0.8)
        mirrored = PlanarPose(-120.0, 260.0, -0.8)
        a = two_segment_planar_ik(target)
        b = two_segment_planar_ik(mirrored)
        for arc_a, arc_b in zip(a, b):
            assert arc_b.k == pytest.approx(-arc_a.k, abs=1e-9)
            assert arc_b.s == pytest.approx(arc_a.s, abs=1e-6)

    def test_returns_canonical_plane_arcs(self):
        arcs = two_segment_ik(PlanarPose(100.0, 250.0, 0.6))
        assert len(arcs) == 2
        for a in arcs:
            assert a.phi in (0.0, np.pi) or a.kappa == 0.0

    def test_unreachable_tangent(self):
        with pytest.raises(UnreachableTargetError):
            two_segment_planar_ik(PlanarPose(0.0, 100.0, 6.2))

    def test_degenerate_zero_distance(self):
        with pytest.raises(UnreachableTargetError):
            two_segment_planar_ik(PlanarPose(0.0, 0.0, 0.0))


class TestInsertSegments:
    def test_identity_at_same_count(self):
        arcs = two_segment_ik(PlanarPose(80.0, 260.0, 0.5))
        assert insert_segments(arcs, 2) == arcs

    def test_split_preserves_curve(self):
        arc = ArcParams(s=160.0, kappa=0.006, phi=0.4)
        from shapeservo.geometry import RigidTransform

        whole = chain_frames([arc], RigidTransform.identity())[-1]
        halves = insert_segments([arc], 2)
        assert len(halves) == 2
        split = chain_frames(halves, RigidTransform.identity())[-1]
        assert np.abs(whole.as_matrix() - split.as_matrix()).max() < 1e-9

    def test_three_from_two_preserves_end_pose(self):
        arcs = two_segment_ik(PlanarPose(90.0, 240.0, 0.7))
        from shapeservo.geometry import RigidTransform

        before = chain_frames(arcs, RigidTransform.identity())[-1]
        after3 = chain_frames(insert_segments(arcs, 3), RigidTransform.identity())[-1]
        assert np.abs(before.as_matrix() - after3.as_matrix()).max() < 1e-9

    def test_cannot_shrink(self):
        arcs = two_segment_ik(PlanarPose(90.0, 240.0, 0.7))
        with pytest.raises(ValueError):
            insert_segments(arcs, 1)


class TestOptimizeReference:
    LIMITS = [SectionSpec(d=20.0, s_min=80.0, s_max=200.0)] * 2

    def _end_pose(self, arcs):
        planar, _ = arcs_to_planar(arcs)
        return planar_chain_end(PlanarPose(0.0, 0.0, 0.0), planar)

    def test_balanced_input_returned_unchanged(self):
        arcs = [
            ArcParams(s=120.0, kappa=0.005, phi=0.0),
            ArcParams(s=120.0, kappa=0.005, phi=0.0),
        ]
        out = optimize_reference(arcs, criterion="balance-curvature", limits=self.LIMITS)
        assert out == arcs  # same objects, criterion already at minimum

    def test_balance_length_reduces_variance(self):
        arcs = [
            ArcParams(s=180.0, kappa=0.004, phi=0.0),
            ArcParams(s=90.0, kappa=0.006, phi=0.0),
        ]
        before = self._end_pose(arcs)
        var_before = np.var([a.s for a in arcs])
        out = optimize_reference(arcs, criterion="balance-length", limits=self.LIMITS)
        var_after = np.var([a.s for a in out])
        after = self._end_pose(out)
        assert var_after <= var_before
        assert np.hypot(after.x - before.x, after.z - before.z) < 1e-6
        assert after.heading == pytest.approx(before.heading, abs=1e-9)

    def test_balance_curvature_three_sections(self):
        limits3 = [SectionSpec(d=20.0, s_min=80.0, s_max=200.0)] * 3
        arcs = [
            ArcParams(s=100.0, kappa=0.009, phi=0.0),
            ArcParams(s=150.0, kappa=0.002, phi=0.0),
            ArcParams(s=120.0, kappa=0.005, phi=np.pi),
        ]
        before = self._end_pose(arcs)
        var_before = np.var([a.kappa for a in arcs])
        out = optimize_reference(arcs, criterion="balance-curvature", limits=limits3)
        var_after = np.var([a.kappa for a in out])
        after = self._end_pose(out)
        assert var_after <= var_before
        assert np.hypot(after.x - before.x, after.z - before.z) < 1e-6

    def test_obstacle_forces_detour_or_raises(self):
        arcs = [
            ArcParams(s=120.0, kappa=1e-4, phi=0.0),
            ArcParams(s=120.0, kappa=1e-4, phi=0.0),
        ]
        # disc sitting right on the initial (almost straight) chain
        obstacle = [(0.0, 120.0, 20.0)]
        try:
            out = optimize_reference(
                arcs,
                criterion="balance-curvature",
                obstacles=obstacle,
                limits=self.LIMITS,
                margin=2.0,
            )
        except InfeasibleReferenceError:
            return
        planar, _ = arcs_to_planar(out)
        from shapeservo.reference import _clears_obstacles

        assert _clears_obstacles(PlanarPose(0.0, 0.0, 0.0), planar, obstacle, 2.0)

    def test_infeasible_when_target_inside_obstacle(self):
        arcs = [
            ArcParams(s=100.0, kappa=1e-4, phi=0.0),
            ArcParams(s=100.0, kappa=1e-4, phi=0.0),
        ]
        # end pose itself is swallowed by the disc: nothing can clear it
        obstacle = [(0.0, 200.0, 30.0)]
        with pytest.raises(InfeasibleReferenceError):
            optimize_reference(
                arcs, obstacles=obstacle, limits=self.LIMITS, margin=2.0
            )


class TestReferenceFeatures:
    def test_matches_current_state_features(self, robot2, camera):
        from shapeservo.camera import extract_shape_features

        arcs = [
            ArcParams(s=130.0, kappa=0.004, phi=0.7),
            ArcParams(s=110.0, kappa=0.006, phi=-0.5),
        ]
        ref = reference_features(arcs, robot2.base, camera)
        cur = extract_shape_features(robot2, arcs, camera)
        assert ref == cur

    def test_structural_count_and_order(self, robot3, camera):
        arcs = [ArcParams(s=100.0 + 10 * i, kappa=0.003, phi=0.1) for i in range(3)]
        ref = reference_features(arcs, robot3.base, camera)
        assert len(ref) == 3
        # base-to-tip order: depth or pixel must follow the chain tips
        tips = [f.translation for f in chain_frames(arcs, robot3.base)]
        for i, tip in enumerate(tips):
            pixel, depth = project(tip, camera)
            assert ref.values[i, :2] == pytest.approx(tuple(pixel))


class TestMakeReference:
    def test_click_resolves_to_admissible_reference(self, robot2, camera):
        # click near the image of a known reachable point
        from shapeservo.kinematics import robot_forward

        arcs_true = [
            ArcParams(s=150.0, kappa=0.004, phi=0.0),
            ArcParams(s=150.0, kappa=0.004, phi=0.0),
        ]
        tip = robot_forward(robot2, arcs_true)[-1].translation
        pixel, depth = project(tip, camera)
        arcs, feats = make_reference(robot2, camera, tuple(pixel), depth)
        assert len(arcs) == 2
        for arc, spec in zip(arcs, robot2.sections):
            assert spec.s_min <= arc.s <= spec.s_max
            assert arc.theta < np.pi
            assert arc.kappa * spec.d < 1.0
        # the generated reference's EE feature sits on the clicked pixel
        assert feats.values[-1, :2] == pytest.approx(tuple(pixel), abs=1e-6)

    def test_unreachable_click_raises(self, robot2, camera):
        # a point two meters above the base: far outside the workspace
        with pytest.raises(UnreachableTargetError):
            make_reference(robot2, camera, (640.0, 360.0), 2.5)


class TestSampleReference:
    def test_s_shape_has_alternating_signs(self, robot3, camera):
        rng = np.random.default_rng(3)
        arcs, _ = sample_reference(robot3, camera, rng, s_shape=True)
        planar, _ = arcs_to_planar(arcs)
        signs = [np.sign(a.k) for a in planar]
        assert all(s != 0 for s in signs)
        assert all(signs[i] == -signs[i + 1] for i in range(len(signs) - 1))

    def test_samples_admissible(self, robot2, camera):
        rng = np.random.default_rng(4)
        for _ in range(20):
            arcs, feats = sample_reference(robot2, camera, rng)
            for arc, spec in zip(arcs, robot2.sections):
                assert spec.s_min <= arc.s <= spec.s_max
                assert arc.theta < np.pi
            assert len(feats) == 2

    def test_via_ik_path(self, robot3, camera):
        rng = np.random.default_rng(5)
        arcs, feats = sample_reference(robot3, camera, rng, via_ik=True)
        assert len(arcs) == 3
