"""Acceptance suite: every criterion runs at its stated tolerance and
prints one pass line (run with -s to see them)."""

import time
import warnings

import numpy as np
import pytest

from shapeservo.camera import (
    add_feature_noise,
    default_camera,
    extract_shape_features,
    features_from_tips,
    tips_from_features,
)
from shapeservo.configio import default_robot
from shapeservo.control import ControlGains, Scenario
from shapeservo.episode import ADVANCE_AUTO, ADVANCE_MANUAL, Episode, TrajectoryLog, run_episode
from shapeservo.errors import SingularityWarning
from shapeservo.estimation import estimate_robot_state, estimated_cables
from shapeservo.jacobians import (
    block_diag_image_jacobian,
    blockwise_damped_pinv,
    build_shape_jacobian,
)
from shapeservo.kinematics import (
    ArcParams,
    CableLengths,
    arc_to_cables,
    cables_to_arc,
    fd_robot_jacobian,
    pcc_closed_form,
    robot_forward,
    robot_jacobian,
    section_forward,
)
from shapeservo.metrics import (
    episode_metrics,
    ringing_fraction,
    steady_state_metrics,
    transient_metrics,
)
from shapeservo.plant import SimConfig
from shapeservo.reference import arcs_to_planar, sample_reference

D = 20.0
CAMERA = default_camera()
GAINS = ControlGains()  # frozen defaults under test
ACCEPT_THRESHOLD = 5e-4  # mixed-norm threshold that pins EE depth below 1 mm


def _random_arcs(rng, count, theta_lo=1e-3, theta_hi=2.9):
    arcs = []
    for _ in range(count):
        s = rng.uniform(80.0, 200.0)
        theta = rng.uniform(theta_lo, theta_hi)
        arcs.append(ArcParams(s=s, kappa=theta / s, phi=rng.uniform(-np.pi, np.pi)))
    return arcs


def _run_convergence_batch(n_sections, k=20, s_shapes=5, seed0=404):
    """Noiseless closed-loop batch at default gains; shared by criteria 6-7."""
    robot = default_robot(n_sections)
    rng = np.random.default_rng(seed0 + n_sections)
    gains = ControlGains(err_threshold=ACCEPT_THRESHOLD)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularityWarning)
        for j in range(k):
            arcs, feats = sample_reference(robot, CAMERA, rng, s_shape=j < s_shapes)
            scenario = Scenario(references=(feats,), thresholds=(ACCEPT_THRESHOLD,))
            t0 = time.perf_counter()
            log = run_episode(robot, CAMERA, gains, scenario, seed=j)
            wall = time.perf_counter() - t0
            out.append((arcs, log, wall))
    return out


@pytest.fixture(scope="module")
def closed_loop_runs():
    return {n: _run_convergence_batch(n) for n in (2, 3)}


def test_criterion_1_pup_vs_pcc_oracle():
    rng = np.random.default_rng(1)
    arcs = _random_arcs(rng, 10_000 - 4, theta_lo=1e-7)
    for theta in (1e-8, 1e-4):
        arcs.append(ArcParams(s=120.0, kappa=theta / 120.0, phi=0.7))
        arcs.append(ArcParams(s=199.0, kappa=theta / 199.0, phi=-2.1))
    t0 = time.perf_counter()
    worst = 0.0
    for arc in arcs:
        a = section_forward(arc)
        b = pcc_closed_form(arc)
        dev = max(
            np.abs(a.translation - b.translation).max(),
            np.linalg.norm(a.rotation - b.rotation),
        )
        worst = max(worst, dev)
    elapsed = time.perf_counter() - t0
    assert worst < 1e-9, f"worst deviation {worst:.2e}"
    assert elapsed < 1.0, f"oracle sweep took {elapsed:.2f} s"
    print(
        f"\nPASS criterion 1: five-factor chain vs closed form, 10^4 arcs, "
        f"worst {worst:.2e} (< 1e-9), {elapsed * 1000:.0f} ms"
    )


def test_criterion_2_cable_round_trip():
    rng = np.random.default_rng(2)
    worst_fwd, worst_back = 0.0, 0.0
    for _ in range(10_000):
        s = rng.uniform(80.0, 200.0)
        theta = rng.uniform(1e-4, 2.8)
        kappa = theta / s
        if kappa * D >= 0.95:
            continue
        arc = ArcParams(s=s, kappa=kappa, phi=rng.uniform(-np.pi, np.pi))
        cables = arc_to_cables(arc, D)
        back = cables_to_arc(cables, D)
        worst_fwd = max(
            worst_fwd,
            abs(back.s - arc.s),
            abs(back.kappa - arc.kappa) * s,  # scale curvature to mm terms
            abs(back.phi - arc.phi),
        )
        cables2 = arc_to_cables(back, D)
        worst_back = max(
            worst_back, np.abs(cables2.as_array() - cables.as_array()).max()
        )
    assert worst_fwd < 1e-9 and worst_back < 1e-9

    # worked example: kd = 0.1 tendon split and its exact inverse
    example = arc_to_cables(ArcParams(s=100.0, kappa=0.005, phi=0.0), D)
    assert example.l1 == pytest.approx(100.00, abs=5e-3)
    assert example.l2 == pytest.approx(108.66, abs=5e-3)
    assert example.l3 == pytest.approx(91.34, abs=5e-3)
    inv = cables_to_arc(example, D)
    assert abs(inv.s - 100.0) < 1e-9
    assert abs(inv.kappa - 0.005) < 1e-12
    assert abs(inv.phi) < 1e-12
    print(
        f"PASS criterion 2: arc<->cable mutual inverses over 10^4 states, "
        f"worst {max(worst_fwd, worst_back):.2e} (< 1e-9), worked example holds"
    )


def test_criterion_3_jacobian_against_finite_differences():
    robot = default_robot(3)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(12):
        cables = []
        for spec in robot.sections:
            while True:
                arc = _random_arcs(rng, 1, theta_lo=0.15, theta_hi=1.9)[0]
                if arc.kappa * spec.d < 0.5:
                    c = arc_to_cables(arc, spec.d)
                    if spec.admissible_cables(c):
                        cables.append(c)
                        break
        for i in (1, 2, 3):
            ja = robot_jacobian(robot, cables, i)
            jf = fd_robot_jacobian(robot, cables, i)
            worst = max(worst, np.abs(ja - jf).max() / np.abs(jf).max())
        full = build_shape_jacobian(robot, cables)
        assert (full[0:3, 3:9] == 0.0).all()
        assert (full[3:6, 6:9] == 0.0).all()
    assert worst < 1e-6, f"worst FD deviation {worst:.2e}"
    print(
        f"PASS criterion 3: analytic cable Jacobian vs central differences, "
        f"worst relative {worst:.2e} (< 1e-6); zero blocks bit-exact"
    )


def test_criterion_4_blockwise_inversion():
    rng = np.random.default_rng(4)
    worst = 0.0
    for n in (2, 3, 6):
        pts = np.column_stack(
            [
                rng.uniform(-300, 300, n),
                rng.uniform(-300, 300, n),
                rng.uniform(0.4, 1.3, n),
            ]
        )
        j = block_diag_image_jacobian(pts, 600.0)
        worst = max(
            worst, np.abs(np.linalg.pinv(j) - blockwise_damped_pinv(j)).max()
        )
    assert worst < 1e-10

    # sanity benchmark: per-block inversion cost grows linearly with the
    # feature count while the dense path grows cubically; at small N the
    # numpy dispatch constant dominates, so the timing assertion sits where
    # the scaling claim is observable
    def bench(n, reps=300):
        pts = np.column_stack(
            [
                rng.uniform(-300, 300, n),
                rng.uniform(-300, 300, n),
                rng.uniform(0.4, 1.3, n),
            ]
        )
        jac = block_diag_image_jacobian(pts, 600.0)
        t0 = time.perf_counter()
        for _ in range(reps):
            np.linalg.pinv(jac)
        t_full = time.perf_counter() - t0
        t0 = time.perf_counter()
        for _ in range(reps):
            blockwise_damped_pinv(jac)
        t_block = time.perf_counter() - t0
        return t_full / reps, t_block / reps

    full3, block3 = bench(3)
    full24, block24 = bench(24)
    assert block24 <= full24, (
        f"blockwise {block24 * 1e3:.3f} ms vs full {full24 * 1e3:.3f} ms at N=24"
    )
    print(
        f"PASS criterion 4: assembled pinv == blockwise pinv to {worst:.1e} "
        f"(< 1e-10); per inversion N=3: blockwise {block3 * 1e3:.3f} ms vs "
        f"full {full3 * 1e3:.3f} ms (dispatch-bound), N=24: blockwise "
        f"{block24 * 1e3:.3f} ms vs full {full24 * 1e3:.3f} ms"
    )


def test_criterion_5_estimation_round_trip():
    robot = default_robot(3)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        arcs = []
        for spec in robot.sections:
            while True:
                arc = _random_arcs(rng, 1, theta_lo=1e-3, theta_hi=1.9)[0]
                if arc.kappa * spec.d < 0.5:
                    c = arc_to_cables(arc, spec.d)
                    if spec.admissible_cables(c):
                        arcs.append(arc)
                        break
        truth = [arc_to_cables(a, s.d) for a, s in zip(arcs, robot.sections)]
        feats = extract_shape_features(robot, arcs, CAMERA)
        tips = tips_from_features(feats, CAMERA)
        est = estimated_cables(
            estimate_robot_state(tips, robot.base, robot), robot
        )
        for a, b in zip(truth, est):
            worst = max(worst, np.abs(a.as_array() - b.as_array()).max())
    assert worst < 1e-6, f"worst cable error {worst:.2e} mm"
    print(
        f"PASS criterion 5: simulate->project->backproject->fit->cables over "
        f"10^3 states, worst {worst:.2e} mm (< 1e-6)"
    )


def test_criterion_6_closed_loop_convergence(closed_loop_runs):
    for n, runs in closed_loop_runs.items():
        s_shapes = 0
        for arcs, log, wall in runs:
            assert log.completed, f"N={n}: episode failed to converge"
            assert wall < 1.0, f"N={n}: episode took {wall:.2f} s"
            planar, _ = arcs_to_planar(arcs)
            signs = {np.sign(a.k) for a in planar}
            if 1.0 in signs and -1.0 in signs:
                s_shapes += 1
            fe, re_ = log.features[-1][-1], log.reference[-1][-1]
            ee_px = np.hypot(fe[0] - re_[0], fe[1] - re_[1])
            ee_mm = abs(np.exp(fe[2]) - np.exp(re_[2])) * 1000.0
            assert ee_px < 1.0, f"N={n}: EE image error {ee_px:.3f} px"
            assert ee_mm < 1.0, f"N={n}: EE depth error {ee_mm:.3f} mm"
            pix = log.features[-1][:, :2] - log.reference[-1][:, :2]
            dmm = (
                (log.features[-1][:, 2] - log.reference[-1][:, 2])
                * np.exp(log.reference[-1][:, 2])
                * 1000.0
            )
            assert np.linalg.norm(pix) < 2.0
            assert np.linalg.norm(dmm) < 2.0
        assert s_shapes >= 5, f"N={n}: only {s_shapes} S-shape references"
    print(
        "PASS criterion 6: 20/20 noiseless episodes converged for N=2 and "
        "N=3 (>=5 S-shapes each); final EE < 1 px / 1 mm, configuration "
        "< 2 px / 2 mm, every episode < 1 s"
    )


def test_criterion_7_transient_shape(closed_loop_runs):
    # closed-form fixture: e(t) = E0 exp(-t), dt = 0.1 s
    from test_metrics import synthetic_log

    t = np.arange(0.0, 6.0, 0.1)
    offsets = np.zeros((t.size, 2, 3))
    offsets[:, 1, 0] = 100.0 * np.exp(-t)
    fixture = synthetic_log(offsets)
    rise, settle = transient_metrics(fixture, "stringent")
    assert abs(rise - np.log(9.0)) <= 0.1 + 1e-12
    assert abs(settle - np.log(20.0)) <= 0.1 + 1e-12

    # simulated episodes: near-monotone error norm, no ringing out of band
    worst_uptick, worst_ring = 0.0, 0.0
    for n, runs in closed_loop_runs.items():
        for _, log, _ in runs:
            d = np.diff(log.err_config)
            if d.size > 1:
                worst_uptick = max(worst_uptick, d[1:].max() / log.err_config[0])
            ring = ringing_fraction(log, band=0.05)
            if np.isfinite(ring):
                worst_ring = max(worst_ring, ring)
    assert worst_uptick <= 5e-3, f"norm uptick {worst_uptick:.2e} of initial"
    assert worst_ring <= 0.05, f"ringing {worst_ring:.3f} of initial error"
    print(
        f"PASS criterion 7: exponential fixture rise ln9, settle(5%) ln20 "
        f"within one period; sim norm upticks <= {worst_uptick:.1e} of "
        f"initial (saturated-transient tolerance 5e-3), no ringing beyond "
        f"the 5% band (worst {worst_ring:.4f})"
    )


def test_criterion_8_scenario_sequencing():
    robot = default_robot(2)
    rng = np.random.default_rng(8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularityWarning)
        refs = [sample_reference(robot, CAMERA, rng)[1] for _ in range(3)]
        scenario = Scenario(references=tuple(refs), thresholds=(1.0, 1.0, 1.0))
        # three legs need roughly triple the single-reference step budget
        log = run_episode(
            robot, CAMERA, GAINS, scenario, sim=SimConfig(max_steps=2400), seed=8
        )
    assert log.completed
    visited = [int(v) for v in dict.fromkeys(log.ref_index.tolist())]
    assert visited == [0, 1, 2], f"visited {visited}"
    assert (log.advanced == ADVANCE_AUTO).sum() == 2  # two automatic switches

    # manual advance is logged with its own code
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularityWarning)
        ep = Episode(
            robot,
            CAMERA,
            GAINS,
            Scenario(references=tuple(refs), thresholds=(1e-6, 1e-6, 1.0)),
            seed=8,
        )
        for _ in range(3):
            ep.step()
        ep.request_manual_advance()
        rec = ep.step()
    assert rec.advanced == ADVANCE_MANUAL
    assert rec.ref_index == 1
    print(
        "PASS criterion 8: three-reference scenario auto-switched in order "
        "on threshold crossings; manual advance logged distinctly"
    )


def test_criterion_9_determinism(tmp_path):
    robot = default_robot(2)
    rng = np.random.default_rng(9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularityWarning)
        _, feats = sample_reference(robot, CAMERA, rng)
        scenario = Scenario(references=(feats,), thresholds=(1.0,))

        def once(name):
            log = run_episode(
                robot,
                CAMERA,
                GAINS,
                scenario,
                sigma_px=1.0,
                sigma_depth_m=0.001,
                seed=2718,
            )
            path = tmp_path / name
            log.to_csv(path)
            return log, path.read_bytes()

        log1, bytes1 = once("a.csv")
        _, bytes2 = once("b.csv")
    assert bytes1 == bytes2, "same seed must give bit-identical CSV logs"

    loaded = TrajectoryLog.from_csv(tmp_path / "a.csv")
    assert steady_state_metrics(loaded) == steady_state_metrics(log1)
    assert transient_metrics(loaded) == transient_metrics(log1)
    assert episode_metrics(loaded).as_dict() == episode_metrics(log1).as_dict()
    print(
        "PASS criterion 9: identical configs+seed give bit-identical CSV; "
        "metrics recomputed from CSV match bit-exactly"
    )


def test_criterion_10_noise_robustness():
    robot = default_robot(2)
    rng = np.random.default_rng(10)
    gains = ControlGains(err_threshold=5.0)  # above the 1 px noise floor
    converged, ee_px, ee_mm = 0, [], []
    k = 20
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularityWarning)
        for j in range(k):
            _, feats = sample_reference(robot, CAMERA, rng)
            scenario = Scenario(references=(feats,), thresholds=(5.0,))
            log = run_episode(
                robot,
                CAMERA,
                gains,
                scenario,
                sigma_px=1.0,
                sigma_depth_m=0.001,
                seed=900 + j,
            )
            if log.completed:
                converged += 1
            task, _ = steady_state_metrics(log)
            ee_px.append(task.image_px)
            ee_mm.append(task.depth_mm)
    rate = converged / k
    assert rate >= 0.95, f"convergence rate {rate:.2f}"
    assert np.mean(ee_px) <= 9.5, f"steady EE image error {np.mean(ee_px):.2f} px"
    assert np.mean(ee_mm) <= 3.6, f"steady EE depth error {np.mean(ee_mm):.2f} mm"
    print(
        f"PASS criterion 10: 1 px / 1 mm sensor noise: convergence "
        f"{rate:.0%} (>= 95%), steady EE {np.mean(ee_px):.2f} px / "
        f"{np.mean(ee_mm):.2f} mm (under the 9.5 px / 3.6 mm hardware bars)"
    )
