"""Constant-curvature section kinematics and cable-space Jacobians.

A section's robot-independent state is the arc triple (s, kappa, phi):
arc length in mm, curvature in 1/mm (kept non-negative, direction lives in
phi), and bending-direction angle in rad. The robot-dependent state is the
triple of tendon lengths per section. The forward map goes through a
virtual prismatic-universal-prismatic (PUP) linkage: two equal-length
prismatic links meeting at a universal joint placed at the intersection of
the tangent lines at the section's base and tip.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import KinematicsDomainError, SingularityWarning
from .geometry import RigidTransform, rotz, roty, wrap_angle

# Below this bend angle the tangent-intersection length and the arc
# translation are evaluated by Taylor series to avoid 0/0 forms.
THETA_SERIES_CUTOFF = 1e-6
# Bend angles below this use the series for d(l1)/d(kappa), whose exact
# expression cancels catastrophically near straight.
_DLDK_SERIES_CUTOFF = 1e-3
# Curvature floor for Jacobian evaluation: at kappa=0 the cable->arc
# derivative is exactly singular (phi unobservable), so the Jacobian is
# evaluated at a clamped nearby state and a warning is issued.
KAPPA_FLOOR = 1e-5


@dataclass(frozen=True)
class ArcParams:
    """Robot-independent section state: arc length, curvature, direction."""

    s: float
    kappa: float
    phi: float

    def __post_init__(self):
        s, kappa, phi = float(self.s), float(self.kappa), float(self.phi)
        if not np.isfinite([s, kappa, phi]).all():
            raise KinematicsDomainError("non-finite arc parameters")
        if s <= 0:
            raise KinematicsDomainError(f"arc length must be positive, got {s}")
        if kappa < 0:
            raise KinematicsDomainError("curvature must be >= 0 (direction in phi)")
        if kappa * s >= np.pi:
            raise KinematicsDomainError(
                f"bend angle kappa*s = {kappa * s:.4f} must stay below pi"
            )
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "phi", wrap_angle(phi))

    @property
    def theta(self) -> float:
        """Total bend angle of the section."""
        return self.kappa * self.s


@dataclass(frozen=True)
class CableLengths:
    """Tendon lengths of one section, mm."""

    l1: float
    l2: float
    l3: float

    def __post_init__(self):
        vals = np.array([self.l1, self.l2, self.l3], dtype=float)
        if not np.isfinite(vals).all() or (vals <= 0).any():
            raise KinematicsDomainError(f"cable lengths must be positive, got {vals}")
        object.__setattr__(self, "l1", float(vals[0]))
        object.__setattr__(self, "l2", float(vals[1]))
        object.__setattr__(self, "l3", float(vals[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.l1, self.l2, self.l3])

    @property
    def mean(self) -> float:
        return (self.l1 + self.l2 + self.l3) / 3.0


@dataclass(frozen=True)
class PupJointVector:
    """Virtual-linkage joints: twist, link, bend, link, untwist."""

    q1: float  # rad, selects the bending plane
    q2: float  # mm, first prismatic link
    q3: float  # rad, universal-joint bend
    q4: float  # mm, second prismatic link (always equals q2)
    q5: float  # rad, always -q1 so the tip frame carries no axial roll

    def __post_init__(self):
        if abs(self.q2 - self.q4) > 1e-12 * max(1.0, abs(self.q2)):
            raise KinematicsDomainError("prismatic links must have equal length")
        if abs(self.q1 + self.q5) > 1e-12:
            raise KinematicsDomainError("tip twist must undo the plane selection")


@dataclass(frozen=True)
class SectionSpec:
    """Per-section geometry: tendon placement radius and length limits."""

    d: float
    s_min: float
    s_max: float

    def __post_init__(self):
        if not (0 < self.s_min < self.s_max):
            raise ValueError("need 0 < s_min < s_max")
        if self.d <= 0:
            raise ValueError("tendon radius d must be positive")

    def admissible_arc(self, arc: ArcParams, tol: float = 0.0) -> bool:
        return (
            self.s_min * (1 - tol) <= arc.s <= self.s_max * (1 + tol)
            and arc.kappa * self.d < 1.0
        )

    def admissible_cables(self, cables: CableLengths, tol: float = 0.0) -> bool:
        lo, hi = self.s_min * (1 - tol), self.s_max * (1 + tol)
        return all(lo <= v <= hi for v in cables.as_array())


@dataclass(frozen=True)
class RobotConfig:
    """Ordered sections plus the base pose in the world frame."""

    sections: tuple[SectionSpec, ...]
    base: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        sections = tuple(self.sections)
        if len(sections) < 1:
            raise ValueError("robot needs at least one section")
        object.__setattr__(self, "sections", sections)

    @property
    def n_sections(self) -> int:
        return len(self.sections)


def arc_to_cables(arc: ArcParams, d: float) -> CableLengths:
    """Closed-form arc-to-tendon mapping for three tendons at radius d.

    The tendons sit 120 degrees apart; the mean of the three lengths equals
    the arc length identically.
    """
    kd = arc.kappa * d
    if kd >= 1.0:
        raise KinematicsDomainError(
            f"kappa*d = {kd:.4f} >= 1 would give a non-positive cable length"
        )
    s, phi = arc.s, arc.phi
    return CableLengths(
        l1=s * (1.0 - kd * np.sin(phi)),
        l2=s * (1.0 + kd * np.sin(np.pi / 3.0 + phi)),
        l3=s * (1.0 - kd * np.cos(np.pi / 6.0 + phi)),
    )


def cables_to_arc(cables: CableLengths, d: float) -> ArcParams:
    """Invert the tendon mapping; straight sections get phi = 0.

    Defined on the image of arc_to_cables: tendon differentials implying a
    bend of pi or more raise, since no valid arc reproduces them.
    """
    l1, l2, l3 = cables.l1, cables.l2, cables.l3
    total = l1 + l2 + l3
    s = total / 3.0
    disc = l1 * l1 + l2 * l2 + l3 * l3 - l1 * l2 - l2 * l3 - l3 * l1
    kappa = 2.0 * np.sqrt(max(disc, 0.0)) / (d * total)
    if kappa == 0.0:
        phi = 0.0
    else:
        phi = float(np.arctan2(l2 + l3 - 2.0 * l1, np.sqrt(3.0) * (l2 - l3)))
    return ArcParams(s=s, kappa=float(kappa), phi=phi)


def _link_length(s: float, kappa: float) -> float:
    """Prismatic link length: distance from section base to the tangent
    intersection, tan(theta/2)/kappa, with a series fallback near straight."""
    theta = kappa * s
    if theta < THETA_SERIES_CUTOFF:
        t2 = theta * theta
        return 0.5 * s * (1.0 + t2 / 12.0 + t2 * t2 / 120.0)
    return float(np.tan(0.5 * theta) / kappa)


def _link_length_grad(s: float, kappa: float) -> tuple[float, float]:
    """(d l1/d s, d l1/d kappa)."""
    theta = kappa * s
    half = 0.5 * theta
    sec2 = 1.0 / np.cos(half) ** 2
    dl_ds = 0.5 * sec2
    if theta < _DLDK_SERIES_CUTOFF:
        dl_dk = (kappa * s**3 / 12.0) * (1.0 + theta * theta / 5.0)
    else:
        dl_dk = (half * sec2 - np.tan(half)) / kappa**2
    return float(dl_ds), float(dl_dk)


def arc_to_pup(arc: ArcParams) -> PupJointVector:
    """Arc state to the five virtual-linkage joint values."""
    theta = arc.theta
    if theta >= np.pi:
        raise KinematicsDomainError("bend angle must stay below pi")
    l1 = _link_length(arc.s, arc.kappa)
    return PupJointVector(q1=arc.phi, q2=l1, q3=theta, q4=l1, q5=-arc.phi)


# Modified (proximal) D-H factor: RotX(alpha) TransX(a) RotZ(theta) TransZ(d).
# This axis ordering is the one under which the tabled linkage parameters
# reproduce the constant-curvature tip frame.
_DH_ROWS_ALPHA = (0.0, 0.0, -np.pi / 2.0, np.pi / 2.0, 0.0)


def _dh_factor(alpha: float, d: float, theta: float) -> np.ndarray:
    ca, sa = np.cos(alpha), np.sin(alpha)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [ct, -st, 0.0, 0.0],
            [ca * st, ca * ct, -sa, -sa * d],
            [sa * st, sa * ct, ca, ca * d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _dh_factor_dtheta(alpha: float, theta: float) -> np.ndarray:
    ca, sa = np.cos(alpha), np.sin(alpha)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [-st, -ct, 0.0, 0.0],
            [ca * ct, -ca * st, 0.0, 0.0],
            [sa * ct, -sa * st, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )


def _dh_factor_dd(alpha: float) -> np.ndarray:
    m = np.zeros((4, 4))
    m[1, 3] = -np.sin(alpha)
    m[2, 3] = np.cos(alpha)
    return m


def _pup_factors(q: PupJointVector) -> list[np.ndarray]:
    ds = (0.0, q.q2, 0.0, q.q4, 0.0)
    thetas = (q.q1, 0.0, q.q3, 0.0, q.q5)
    return [_dh_factor(a, d, t) for a, d, t in zip(_DH_ROWS_ALPHA, ds, thetas)]


def section_forward(arc: ArcParams) -> RigidTransform:
    """Base-to-tip transform of one section via the five-link virtual chain."""
    m = np.eye(4)
    for f in _pup_factors(arc_to_pup(arc)):
        m = m @ f
    return RigidTransform.from_matrix(m)


def pcc_closed_form(arc: ArcParams) -> RigidTransform:
    """Base-to-tip transform straight from the circular-arc equations.

    Independent of the virtual-linkage chain; used as its oracle.
    """
    s, kappa, phi = arc.s, arc.kappa, arc.phi
    theta = kappa * s
    if theta < THETA_SERIES_CUTOFF:
        t2 = theta * theta
        xp = s * 0.5 * theta * (1.0 - t2 / 12.0 + t2 * t2 / 360.0)
        z = s * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
    else:
        xp = 2.0 * np.sin(0.5 * theta) ** 2 / kappa
        z = np.sin(theta) / kappa
    translation = np.array([xp * np.cos(phi), xp * np.sin(phi), z])
    rotation = rotz(phi) @ roty(theta) @ rotz(-phi)
    return RigidTransform(rotation=rotation, translation=translation)


def robot_forward(config: RobotConfig, arcs: list[ArcParams]) -> list[RigidTransform]:
    """World-frame tip transform of every section; last entry is the
    end-effector frame."""
    if len(arcs) != config.n_sections:
        raise ValueError(
            f"expected {config.n_sections} arcs, got {len(arcs)}"
        )
    frames = []
    current = config.base
    for arc in arcs:
        current = current @ section_forward(arc)
        frames.append(current)
    return frames


def _cable_arc_derivative(arc: ArcParams, d: float) -> np.ndarray:
    """d(l1,l2,l3)/d(s,kappa,phi), the Jacobian of arc_to_cables."""
    s, kappa, phi = arc.s, arc.kappa, arc.phi
    g = np.array(
        [-np.sin(phi), np.sin(np.pi / 3.0 + phi), -np.cos(np.pi / 6.0 + phi)]
    )
    gp = np.array(
        [-np.cos(phi), np.cos(np.pi / 3.0 + phi), np.sin(np.pi / 6.0 + phi)]
    )
    out = np.empty((3, 3))
    out[:, 0] = 1.0 + kappa * d * g
    out[:, 1] = s * d * g
    out[:, 2] = s * kappa * d * gp
    return out


def _section_transform_gradient(
    arc: ArcParams,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Section transform and its derivative w.r.t. (s, kappa, phi).

    Returns (T, [dT/ds, dT/dkappa, dT/dphi]) with T 4x4, chained through the
    five virtual-linkage factors.
    """
    q = arc_to_pup(arc)
    factors = _pup_factors(q)

    prefixes = [np.eye(4)]
    for f in factors:
        prefixes.append(prefixes[-1] @ f)
    suffixes = [np.eye(4)]
    for f in reversed(factors):
        suffixes.insert(0, f @ suffixes[0])
    # prefixes[k] = M1..Mk, suffixes[k] = M(k+1)..M5
    transform = prefixes[5]

    d_factors = [
        _dh_factor_dtheta(_DH_ROWS_ALPHA[0], q.q1),
        _dh_factor_dd(_DH_ROWS_ALPHA[1]),
        _dh_factor_dtheta(_DH_ROWS_ALPHA[2], q.q3),
        _dh_factor_dd(_DH_ROWS_ALPHA[3]),
        _dh_factor_dtheta(_DH_ROWS_ALPHA[4], q.q5),
    ]
    d_wrt_q = [prefixes[k] @ d_factors[k] @ suffixes[k + 1] for k in range(5)]

    dl_ds, dl_dk = _link_length_grad(arc.s, arc.kappa)
    # Rows: q1..q5, columns: (s, kappa, phi).
    q_grad = np.array(
        [
            [0.0, 0.0, 1.0],
            [dl_ds, dl_dk, 0.0],
            [arc.kappa, arc.s, 0.0],
            [dl_ds, dl_dk, 0.0],
            [0.0, 0.0, -1.0],
        ]
    )
    grads = []
    for m in range(3):
        g = np.zeros((4, 4))
        for k in range(5):
            if q_grad[k, m] != 0.0:
                g += d_wrt_q[k] * q_grad[k, m]
        grads.append(g)
    return transform, grads


def _clamped_arc(arc: ArcParams, floor: float) -> ArcParams:
    if arc.kappa >= floor:
        return arc
    warnings.warn(
        f"curvature {arc.kappa:.2e} below {floor:.0e}; Jacobian evaluated at "
        "a nearby bent state",
        SingularityWarning,
        stacklevel=3,
    )
    return ArcParams(s=arc.s, kappa=floor, phi=arc.phi)


def tip_jacobian_blocks(
    config: RobotConfig,
    cables: list[CableLengths],
    kappa_floor: float = KAPPA_FLOOR,
) -> list[list[np.ndarray]]:
    """All lower-triangular blocks d(tip_i)/d(cables_j), j <= i.

    Returns blocks[i][j] (both 0-based) of shape (3, 3). Derivatives chain
    through cables->arc, arc->joints, and the five-factor transform product,
    evaluated consistently at a curvature-clamped state near straight.
    """
    n = config.n_sections
    if len(cables) != n:
        raise ValueError(f"expected {n} cable triples, got {len(cables)}")
    arcs = [
        _clamped_arc(cables_to_arc(c, spec.d), kappa_floor)
        for c, spec in zip(cables, config.sections)
    ]
    transforms, grads, arc_from_cable = [], [], []
    for arc, spec in zip(arcs, config.sections):
        t, g = _section_transform_gradient(arc)
        transforms.append(t)
        grads.append(g)
        arc_from_cable.append(np.linalg.inv(_cable_arc_derivative(arc, spec.d)))

    world = [config.base.as_matrix()]
    for t in transforms:
        world.append(world[-1] @ t)
    # world[j] carries frame of section j's base (j 0-based).

    origin = np.array([0.0, 0.0, 0.0, 1.0])
    blocks: list[list[np.ndarray]] = [[None] * n for _ in range(n)]
    for i in range(n):
        r = origin.copy()  # tip i expressed in the running section tip frame
        for j in range(i, -1, -1):
            d_arc = np.column_stack(
                [(world[j] @ (grads[j][m] @ r))[:3] for m in range(3)]
            )
            blocks[i][j] = d_arc @ arc_from_cable[j]
            r = transforms[j] @ r
    return blocks


def robot_jacobian(
    config: RobotConfig,
    cables: list[CableLengths],
    i: int,
    kappa_floor: float = KAPPA_FLOOR,
) -> np.ndarray:
    """Map stacked cable velocities of sections 1..i to the world-frame
    linear velocity of tip i. Shape (3, 3*i), i is 1-based."""
    if not 1 <= i <= config.n_sections:
        raise ValueError(f"section index {i} out of range 1..{config.n_sections}")
    blocks = tip_jacobian_blocks(config, cables, kappa_floor)
    return np.hstack(blocks[i - 1][:i])


def fd_robot_jacobian(
    config: RobotConfig,
    cables: list[CableLengths],
    i: int,
    h: float = 1e-4,
) -> np.ndarray:
    """Central-difference oracle for robot_jacobian (independent of the
    analytic chain)."""

    def tip(flat: np.ndarray) -> np.ndarray:
        cl = [CableLengths(*flat[3 * k : 3 * k + 3]) for k in range(i)]
        arcs = [cables_to_arc(c, s.d) for c, s in zip(cl, config.sections)]
        frames = robot_forward(
            RobotConfig(sections=config.sections[:i], base=config.base), arcs
        )
        return frames[-1].translation

    flat0 = np.concatenate([c.as_array() for c in cables[:i]])
    jac = np.empty((3, 3 * i))
    for col in range(3 * i):
        dv = np.zeros_like(flat0)
        dv[col] = h
        jac[:, col] = (tip(flat0 + dv) - tip(flat0 - dv)) / (2.0 * h)
    return jac
