"""Reference generation: clicked end-effector targets to whole-body
constant-curvature references and their feature vectors.

Planar construction: the chain lives in a plane through the base tangent,
selected by the target point. A two-arc closed form reaches the target
pose, extra arcs are inserted by exact sub-arc splits, and a deterministic
coordinate search balances curvature or length while holding the end pose
fixed and steering clear of disc obstacles in the plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, FeatureVector, backproject, features_from_tips
from .errors import InfeasibleReferenceError, UnreachableTargetError
from .geometry import RigidTransform, wrap_angle
from .kinematics import (
    ArcParams,
    RobotConfig,
    SectionSpec,
    arc_to_cables,
    section_forward,
)

# Bend angles are kept a hair under the half-circle validity bound.
_MAX_BEND = np.pi * 0.999


@dataclass(frozen=True)
class PlanarPose:
    """In-plane pose: x across, z along the base tangent, heading from +z."""

    x: float
    z: float
    heading: float


@dataclass(frozen=True)
class PlanarArc:
    """Signed-curvature arc in the reference plane."""

    k: float  # 1/mm, sign = bending toward +x
    s: float  # mm

    @property
    def turn(self) -> float:
        return self.k * self.s


def planar_arc_end(pose: PlanarPose, arc: PlanarArc) -> PlanarPose:
    beta = arc.turn
    h = pose.heading
    if abs(beta) < 1e-12:
        return PlanarPose(
            x=pose.x + arc.s * np.sin(h), z=pose.z + arc.s * np.cos(h), heading=h
        )
    chord = 2.0 * np.sin(0.5 * beta) / arc.k
    mid = h + 0.5 * beta
    return PlanarPose(
        x=pose.x + chord * np.sin(mid),
        z=pose.z + chord * np.cos(mid),
        heading=h + beta,
    )


def planar_chain_end(base: PlanarPose, arcs: list[PlanarArc]) -> PlanarPose:
    pose = base
    for arc in arcs:
        pose = planar_arc_end(pose, arc)
    return pose


def _arc_from_chord(chord: float, turn: float) -> PlanarArc:
    if abs(turn) < 1e-12:
        return PlanarArc(k=0.0, s=chord)
    s = chord * (0.5 * turn) / np.sin(0.5 * turn)
    return PlanarArc(k=turn / s, s=s)


def _biarc_candidate(
    base: PlanarPose, target: PlanarPose, hj: float
) -> tuple[PlanarArc, PlanarArc] | None:
    """Two tangent-continuous arcs from base to target with junction
    heading hj, or None when that heading admits no forward solution."""
    b1, b2 = hj - base.heading, target.heading - hj
    if abs(b1) >= _MAX_BEND or abs(b2) >= _MAX_BEND:
        return None
    m1, m2 = base.heading + 0.5 * b1, hj + 0.5 * b2
    det = np.sin(m1 - m2)
    dx, dz = target.x - base.x, target.z - base.z
    if abs(det) < 1e-9:
        # Both chords share a direction (happens whenever the start and end
        # tangents agree, e.g. S-shaped pairs): consistent only when the
        # displacement lies along that direction. Split it between the
        # chords so the two curvature magnitudes balance.
        u_x, u_z = np.sin(m1), np.cos(m1)
        along = dx * u_x + dz * u_z
        across = dx * u_z - dz * u_x
        if along <= 1e-9 or abs(across) > 1e-6 * max(along, 1.0):
            return None
        w1, w2 = abs(np.sin(0.5 * b1)), abs(np.sin(0.5 * b2))
        if w1 + w2 < 1e-15:
            w1 = w2 = 1.0
        c1 = along * w1 / (w1 + w2)
        c2 = along - c1
    else:
        # Solve c1*u1 + c2*u2 = D for the chord lengths.
        c1 = (dx * np.cos(m2) - dz * np.sin(m2)) / det
        c2 = (dz * np.sin(m1) - dx * np.cos(m1)) / det
    if c1 <= 1e-9 or c2 <= 1e-9:
        return None
    return _arc_from_chord(c1, b1), _arc_from_chord(c2, b2)


def _pose_error(a: PlanarPose, b: PlanarPose) -> float:
    return float(np.hypot(a.x - b.x, a.z - b.z))


def _junction_candidates(
    base: PlanarPose, target: PlanarPose, n_grid: int
) -> np.ndarray:
    """Junction headings worth trying: a coarse global grid plus a fine
    sweep of the analytic feasibility window near chord-parallel geometry,
    which is far narrower than any global grid when the start and end
    tangents almost agree."""
    lo = max(base.heading, target.heading) - _MAX_BEND
    hi = min(base.heading, target.heading) + _MAX_BEND
    if hi <= lo:
        return np.empty(0)
    pts = [np.linspace(lo, hi, n_grid)]
    dx, dz = target.x - base.x, target.z - base.z
    if np.hypot(dx, dz) > 1e-12:
        a = np.arctan2(dx, dz)
        for shift in (0.0, 2.0 * np.pi, -2.0 * np.pi):
            w = sorted((2 * a - base.heading + shift, 2 * a - target.heading + shift))
            w_lo, w_hi = max(w[0], lo), min(w[1], hi)
            if w_hi >= w_lo:
                pts.append(np.linspace(w_lo, w_hi, 33))
                pts.append(np.array([0.5 * (w_lo + w_hi)]))
    return np.concatenate(pts)


def two_segment_planar_ik(
    target: PlanarPose,
    base: PlanarPose = PlanarPose(0.0, 0.0, 0.0),
    n_grid: int = 721,
) -> tuple[PlanarArc, PlanarArc]:
    """Closed-form two-arc solution to a planar pose, picking the most
    curvature-balanced member of the one-parameter junction-heading family."""
    lo = max(base.heading, target.heading) - _MAX_BEND
    hi = min(base.heading, target.heading) + _MAX_BEND
    if hi <= lo:
        raise UnreachableTargetError(
            f"tangent change {target.heading - base.heading:.3f} rad exceeds "
            "the two-arc bend budget"
        )

    def balance(pair: tuple[PlanarArc, PlanarArc]) -> float:
        return abs(pair[0].k - pair[1].k)

    best_hj, best_pair, best_score = None, None, np.inf
    best_residual = np.inf
    for hj in _junction_candidates(base, target, n_grid):
        pair = _biarc_candidate(base, target, float(hj))
        if pair is None:
            continue
        reached = planar_chain_end(base, list(pair))
        residual = _pose_error(reached, target)
        best_residual = min(best_residual, residual)
        score = balance(pair)
        if score < best_score - 1e-15:
            best_hj, best_pair, best_score = float(hj), pair, score
    if best_pair is None:
        raise UnreachableTargetError(
            "no forward two-arc solution for the requested pose",
            residual=best_residual,
        )
    # Deterministic local refinement of the junction heading.
    step = (hi - lo) / (n_grid - 1)
    for _ in range(60):
        improved = False
        for cand in (best_hj - step, best_hj + step):
            pair = _biarc_candidate(base, target, cand)
            if pair is not None and balance(pair) < best_score - 1e-15:
                best_hj, best_pair, best_score = cand, pair, balance(pair)
                improved = True
        if not improved:
            step *= 0.5
            if step < 1e-12:
                break
    residual = _pose_error(planar_chain_end(base, list(best_pair)), target)
    if residual > 1e-6:
        raise UnreachableTargetError(
            f"two-arc residual {residual:.3e} mm", residual=residual
        )
    return best_pair


def planar_to_arcs(arcs: list[PlanarArc], plane_angle: float = 0.0) -> list[ArcParams]:
    """Embed signed planar arcs as 3-D arc parameters in the plane at the
    given bending-direction angle."""
    out = []
    for arc in arcs:
        if arc.k >= 0:
            out.append(ArcParams(s=arc.s, kappa=arc.k, phi=plane_angle))
        else:
            out.append(
                ArcParams(s=arc.s, kappa=-arc.k, phi=wrap_angle(plane_angle + np.pi))
            )
    return out


def arcs_to_planar(arcs: list[ArcParams]) -> tuple[list[PlanarArc], float]:
    """Inverse embedding for a coplanar chain; returns arcs + plane angle."""
    plane = None
    for a in arcs:
        if a.kappa > 1e-12:
            plane = a.phi
            break
    if plane is None:
        return [PlanarArc(0.0, a.s) for a in arcs], 0.0
    out = []
    for a in arcs:
        if a.kappa <= 1e-12:
            out.append(PlanarArc(0.0, a.s))
            continue
        delta = wrap_angle(a.phi - plane)
        if abs(delta) < 1e-9:
            out.append(PlanarArc(a.kappa, a.s))
        elif abs(abs(delta) - np.pi) < 1e-9:
            out.append(PlanarArc(-a.kappa, a.s))
        else:
            raise ValueError("arcs are not coplanar")
    return out, plane


def two_segment_ik(
    target: PlanarPose, base: PlanarPose = PlanarPose(0.0, 0.0, 0.0)
) -> list[ArcParams]:
    """Planar two-arc inverse kinematics returning arc parameters in the
    canonical x-z plane of the base frame."""
    pair = two_segment_planar_ik(target, base)
    return planar_to_arcs(list(pair))


def insert_segments(arcs: list[ArcParams], n: int) -> list[ArcParams]:
    """Split arcs (longest first, exact halves) until the chain has n
    segments; the traced curve is unchanged."""
    if n < len(arcs):
        raise ValueError(f"cannot reduce {len(arcs)} arcs to {n}")
    chain = list(arcs)
    while len(chain) < n:
        idx = int(np.argmax([a.s for a in chain]))
        a = chain[idx]
        half = ArcParams(s=a.s / 2.0, kappa=a.kappa, phi=a.phi)
        chain[idx : idx + 1] = [half, half]
    return chain


def _criterion_value(arcs: list[PlanarArc], criterion: str) -> float:
    if criterion == "balance-curvature":
        return float(np.var([abs(a.k) for a in arcs]))
    if criterion == "balance-length":
        return float(np.var([a.s for a in arcs]))
    raise ValueError(f"unknown criterion {criterion!r}")


def _arc_points(pose: PlanarPose, arc: PlanarArc, count: int = 24) -> np.ndarray:
    pts = [(pose.x, pose.z)]
    for i in range(1, count + 1):
        end = planar_arc_end(pose, PlanarArc(arc.k, arc.s * i / count))
        pts.append((end.x, end.z))
    return np.array(pts)


def _clears_obstacles(
    base: PlanarPose,
    arcs: list[PlanarArc],
    obstacles: list[tuple[float, float, float]],
    margin: float,
) -> bool:
    if not obstacles:
        return True
    pose = base
    for arc in arcs:
        pts = _arc_points(pose, arc)
        for cx, cz, radius in obstacles:
            d = np.hypot(pts[:, 0] - cx, pts[:, 1] - cz)
            if (d < radius + margin).any():
                return False
        pose = planar_arc_end(pose, arc)
    return True


def _admissible(
    arcs: list[PlanarArc],
    limits: list[SectionSpec] | None,
    plane: float = 0.0,
    cable_margin: float = 0.0,
) -> bool:
    """Kinematic admissibility of a planar chain embedded at the given
    bending-plane angle: arc length and bend in range, and every tendon
    length within the section's stroke (the actual reachability limit,
    which depends on the plane through the tendon azimuths)."""
    for i, arc in enumerate(arcs):
        if arc.s <= 0 or abs(arc.turn) >= _MAX_BEND:
            return False
        if limits is not None:
            spec = limits[i]
            if not (spec.s_min <= arc.s <= spec.s_max):
                return False
            if abs(arc.k) * spec.d >= 1.0:
                return False
            phi = plane if arc.k >= 0 else wrap_angle(plane + np.pi)
            cables = arc_to_cables(
                ArcParams(s=arc.s, kappa=abs(arc.k), phi=phi), spec.d
            )
            lo, hi = spec.s_min + cable_margin, spec.s_max - cable_margin
            if not all(lo <= v <= hi for v in cables.as_array()):
                return False
    return True


def _repair_last_two(
    base: PlanarPose,
    free: list[PlanarArc],
    target: PlanarPose,
    limits: list[SectionSpec] | None,
    obstacles,
    margin: float,
    criterion: str,
    plane: float = 0.0,
    cable_margin: float = 0.0,
    n_grid: int = 181,
) -> tuple[list[PlanarArc], float] | None:
    """Complete a chain to the target with a two-arc tail, choosing the
    feasible junction heading that best serves the criterion."""
    mid = planar_chain_end(base, free)
    best = None
    for hj in _junction_candidates(mid, target, n_grid):
        pair = _biarc_candidate(mid, target, float(hj))
        if pair is None:
            continue
        chain = free + list(pair)
        if not _admissible(chain, limits, plane, cable_margin):
            continue
        if not _clears_obstacles(base, chain, obstacles, margin):
            continue
        value = _criterion_value(chain, criterion)
        if best is None or value < best[1] - 1e-15:
            best = (chain, value)
    return best


def optimize_reference(
    arcs: list[ArcParams],
    criterion: str = "balance-curvature",
    obstacles: list[tuple[float, float, float]] | None = None,
    limits: list[SectionSpec] | None = None,
    margin: float = 2.0,
    cable_margin: float = 0.0,
    max_passes: int = 40,
) -> list[ArcParams]:
    """Deterministic local search over the chain's redundancy that reduces
    the balance criterion while holding the end pose fixed, keeping every
    sampled arc point outside the obstacle discs (plus margin) and every
    arc within its section limits (including tendon stroke).

    Obstacles are (x, z, radius) discs in the reference plane. Returns the
    input unchanged when it is already at a local optimum.
    """
    obstacles = list(obstacles or [])
    planar, plane = arcs_to_planar(arcs)
    n = len(planar)
    if limits is not None and len(limits) != n:
        raise ValueError("one SectionSpec per arc required")
    base = PlanarPose(0.0, 0.0, 0.0)
    target = planar_chain_end(base, planar)

    input_feasible = _admissible(
        planar, limits, plane, cable_margin
    ) and _clears_obstacles(base, planar, obstacles, margin)
    best_chain = planar if input_feasible else None
    best_value = _criterion_value(planar, criterion) if input_feasible else np.inf
    changed = False

    if n < 2:
        if best_chain is None:
            raise InfeasibleReferenceError("single-arc chain violates constraints")
        return arcs

    def consider(chain_value):
        nonlocal best_chain, best_value, changed
        if chain_value is not None and chain_value[1] < best_value - 1e-15:
            best_chain, best_value = chain_value
            changed = True
            return True
        return False

    def repair(free):
        return _repair_last_two(
            base,
            free,
            target,
            limits,
            obstacles,
            margin,
            criterion,
            plane,
            cable_margin,
        )

    if n == 2:
        # The junction heading is the only freedom.
        for _ in range(max_passes):
            if not consider(repair([])):
                break
    else:
        dk, ds = 5e-4, 4.0
        for _ in range(max_passes):
            improved = False
            for idx in range(n - 2):
                free = best_chain[: n - 2] if best_chain else planar[: n - 2]
                for delta_k, delta_s in (
                    (dk, 0.0),
                    (-dk, 0.0),
                    (0.0, ds),
                    (0.0, -ds),
                ):
                    cand = list(free)
                    cand[idx] = PlanarArc(
                        k=cand[idx].k + delta_k, s=max(cand[idx].s + delta_s, 1.0)
                    )
                    if consider(repair(cand)):
                        improved = True
            if not improved:
                dk *= 0.5
                ds *= 0.5
                if dk < 1e-7 and ds < 1e-3:
                    break

    if best_chain is None:
        raise InfeasibleReferenceError(
            "no obstacle-free admissible reference found"
        )
    if not changed:
        return arcs
    reached = planar_chain_end(base, best_chain)
    if _pose_error(reached, target) > 1e-6:
        raise InfeasibleReferenceError("optimizer lost the end pose")
    return planar_to_arcs(best_chain, plane)


def chain_frames(arcs: list[ArcParams], base: RigidTransform) -> list[RigidTransform]:
    frames = []
    current = base
    for arc in arcs:
        current = current @ section_forward(arc)
        frames.append(current)
    return frames


def reference_features(
    arcs: list[ArcParams], base: RigidTransform, camera: Camera
) -> FeatureVector:
    """Project the junction/tip point of every arc segment: the reference
    feature vector the controller servoes toward."""
    tips = [fr.translation for fr in chain_frames(arcs, base)]
    return features_from_tips(tips, camera)


def make_reference(
    config: RobotConfig,
    camera: Camera,
    pixel: tuple[float, float],
    depth_m: float,
    tangent: float | None = None,
    criterion: str = "balance-curvature",
    obstacles: list[tuple[float, float, float]] | None = None,
    margin: float = 2.0,
) -> tuple[list[ArcParams], FeatureVector]:
    """Clicked pixel + depth to a whole-body reference for this robot.

    The reference plane contains the base tangent and the selected world
    point; the target tangent angle defaults to the single-arc
    continuation (twice the chord angle).
    """
    point = backproject(np.asarray(pixel, dtype=float), depth_m, camera)
    local = config.base.inverse().apply(point)
    x, y, z = local
    rho = float(np.hypot(x, y))
    plane = float(np.arctan2(y, x)) if rho > 1e-9 else 0.0
    if z <= 0:
        raise UnreachableTargetError(
            f"target z = {z:.1f} mm is behind the base tangent plane"
        )
    psi = float(tangent) if tangent is not None else 2.0 * float(np.arctan2(rho, z))
    pair = two_segment_planar_ik(PlanarPose(rho, float(z), psi))
    # Embed into the target plane before optimizing: tendon-stroke limits
    # depend on the plane through the tendon azimuths.
    chain = insert_segments(planar_to_arcs(list(pair), plane), config.n_sections)
    try:
        arcs = optimize_reference(
            chain,
            criterion=criterion,
            obstacles=obstacles,
            limits=list(config.sections),
            margin=margin,
            cable_margin=2.0,
        )
    except InfeasibleReferenceError as exc:
        raise UnreachableTargetError(str(exc)) from None
    return arcs, reference_features(arcs, config.base, camera)


def sample_reference(
    config: RobotConfig,
    camera: Camera,
    rng: np.random.Generator,
    s_shape: bool = False,
    via_ik: bool = False,
    max_tries: int = 50,
) -> tuple[list[ArcParams], FeatureVector]:
    """Random admissible whole-body reference, visible to the camera.

    s_shape forces strictly alternating planar curvature signs. via_ik
    routes the sampled end pose through the two-arc solver and segment
    insertion instead of using the sampled chain directly.
    """
    n = config.n_sections
    for _ in range(max_tries):
        plane = rng.uniform(-np.pi, np.pi)
        planar = []
        sign = 1.0 if rng.random() < 0.5 else -1.0
        for i in range(n):
            spec = config.sections[i]
            s = rng.uniform(spec.s_min + 10.0, spec.s_max - 10.0)
            theta = rng.uniform(0.25, 1.6)
            if s_shape:
                arc_sign = sign * (-1.0) ** i
            else:
                arc_sign = 1.0 if rng.random() < 0.5 else -1.0
            planar.append(PlanarArc(k=arc_sign * theta / s, s=s))
        if via_ik:
            target = planar_chain_end(PlanarPose(0.0, 0.0, 0.0), planar)
            try:
                pair = two_segment_planar_ik(target)
                chain = insert_segments(planar_to_arcs(list(pair), plane), n)
                chain = optimize_reference(
                    chain, limits=list(config.sections), cable_margin=2.0
                )
                planar, plane = arcs_to_planar(chain)
            except (UnreachableTargetError, InfeasibleReferenceError):
                continue
        if not _admissible(planar, list(config.sections), plane, cable_margin=2.0):
            continue
        arcs = planar_to_arcs(planar, plane)
        try:
            feats = reference_features(arcs, config.base, camera)
        except Exception:
            continue
        return arcs, feats
    raise UnreachableTargetError("could not sample a visible admissible reference")
