"""Geometry and kinematics of the 3-actuator balance platform.

The base anchors ``A_i`` and platform anchors ``b_i`` sit on equilateral
triangles of circumradius ``R`` and ``r``.  Each anchor ``B_i`` is confined to
the vertical plane through ``A_i`` and the z axis, which leaves three
independent coordinates: the tilt-axis azimuth ``alpha``, the tilt ``beta``
and the height ``z``.  The remaining pose coordinates follow from
``gamma = -alpha`` and the closed forms for ``x`` and ``y``.

Angles are ZYZ Euler angles, ``R = Rz(alpha) Ry(beta) Rz(gamma)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConvergenceError, WorkspaceError
from .rotations import (
    skew,
    so3_exp,
    so3_left_jacobian,
    zyz_matrix,
    zyz_spatial_rate_matrix,
)

SQRT3 = math.sqrt(3.0)

# In-plane normals of the three constraint planes y=0, y=-sqrt(3)x, y=sqrt(3)x.
PLANE_NORMALS = np.array([
    [0.0, 1.0, 0.0],
    [SQRT3, 1.0, 0.0],
    [-SQRT3, 1.0, 0.0],
]) / np.array([[1.0], [2.0], [2.0]])

_LIMIT_SLACK = 1e-12


@dataclass(frozen=True)
class AnkleRom:
    """Ankle range of motion in degrees (used for report-only checks)."""

    dorsiflexion: float = 20.0
    plantarflexion: float = 50.0
    adduction: float = 10.0
    abduction: float = 5.0
    eversion: float = 20.0
    inversion: float = 35.0


@dataclass(frozen=True)
class PlatformGeometry:
    base_radius: float = 0.30
    platform_radius: float = 0.25
    mount_angle: float = math.radians(70.0)
    stroke_max: float = 0.20
    joint_limit: float = math.radians(18.0)
    actuator_min_length: float = 0.15
    rom: AnkleRom = field(default_factory=AnkleRom)

    def __post_init__(self):
        if not (self.base_radius > 0 and self.platform_radius > 0):
            raise ValueError("radii must be positive")
        if not 0 < self.mount_angle < math.pi / 2:
            raise ValueError("mount angle must lie in (0, pi/2)")
        if not (self.stroke_max > 0 and self.actuator_min_length > 0):
            raise ValueError("stroke and minimum length must be positive")
        if not self.joint_limit > 0:
            raise ValueError("joint limit must be positive")

    @property
    def max_length(self):
        return self.actuator_min_length + self.stroke_max

    @property
    def mid_length(self):
        return self.actuator_min_length + 0.5 * self.stroke_max

    def level_height(self, length):
        """Platform height of the level pose with all legs at ``length``."""
        offset = self.base_radius - self.platform_radius
        if length <= abs(offset):
            raise WorkspaceError(f"leg length {length:g} m cannot reach a level pose")
        return math.sqrt(length**2 - offset**2)

    def home_pose(self):
        """Level pose with all actuators at mid-stroke."""
        return Pose(0.0, 0.0, self.level_height(self.mid_length), 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, cfg):
        """Build from the JSON block used by scenario files."""
        defaults = cls()
        return cls(
            base_radius=cfg.get("base_radius_m", defaults.base_radius),
            platform_radius=cfg.get("platform_radius_m", defaults.platform_radius),
            mount_angle=math.radians(cfg.get("mount_angle_deg", 70.0)),
            stroke_max=cfg.get("stroke_m", defaults.stroke_max),
            actuator_min_length=cfg.get("min_length_m", defaults.actuator_min_length),
            joint_limit=math.radians(cfg.get("joint_limit_deg", 18.0)),
        )

    def to_dict(self):
        return {
            "base_radius_m": self.base_radius,
            "platform_radius_m": self.platform_radius,
            "mount_angle_deg": math.degrees(self.mount_angle),
            "stroke_m": self.stroke_max,
            "min_length_m": self.actuator_min_length,
            "joint_limit_deg": math.degrees(self.joint_limit),
        }


@dataclass(frozen=True)
class Pose:
    """Platform centre position and ZYZ orientation in the base frame."""

    x: float
    y: float
    z: float
    alpha: float
    beta: float
    gamma: float

    def position(self):
        return np.array([self.x, self.y, self.z])

    def rotation(self):
        return zyz_matrix(self.alpha, self.beta, self.gamma)

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.alpha, self.beta, self.gamma])

    def reduced(self):
        """The independent coordinates (alpha, beta, z)."""
        return np.array([self.alpha, self.beta, self.z])


def _triangle(radius):
    h = SQRT3 / 2.0 * radius
    return np.array([
        [radius, 0.0, 0.0],
        [-radius / 2.0, h, 0.0],
        [-radius / 2.0, -h, 0.0],
    ])


def base_anchors(geom):
    """Rows are A_1..A_3 in the base frame."""
    return _triangle(geom.base_radius)


def platform_anchors_local(geom):
    """Rows are b_1..b_3 in the platform frame."""
    return _triangle(geom.platform_radius)


def pose_transform(pose):
    """4x4 homogeneous transform of the platform frame."""
    t = np.eye(4)
    t[:3, :3] = pose.rotation()
    t[:3, 3] = pose.position()
    return t


def platform_anchors_world(pose, geom):
    """Rows are B_1..B_3, each ``T @ [b_i, 1]``."""
    b = platform_anchors_local(geom)
    homog = np.hstack([b, np.ones((3, 1))])
    return (pose_transform(pose) @ homog.T).T[:, :3]


def platform_anchors_world_expanded(pose, geom):
    """Anchor positions written out term by term (no matrix products)."""
    r = geom.platform_radius
    ca, sa = math.cos(pose.alpha), math.sin(pose.alpha)
    cb, sb = math.cos(pose.beta), math.sin(pose.beta)
    cg, sg = math.cos(pose.gamma), math.sin(pose.gamma)
    # first and second columns of Rz(alpha) Ry(beta) Rz(gamma)
    u = (ca * cb * cg - sa * sg, sa * cb * cg + ca * sg, -sb * cg)
    v = (-ca * cb * sg - sa * cg, -sa * cb * sg + ca * cg, sb * sg)
    p = (pose.x, pose.y, pose.z)
    b1 = [r * u[k] + p[k] for k in range(3)]
    b2 = [(-r * u[k] + SQRT3 * r * v[k]) / 2.0 + p[k] for k in range(3)]
    b3 = [(-r * u[k] - SQRT3 * r * v[k]) / 2.0 + p[k] for k in range(3)]
    return np.array([b1, b2, b3])


def plane_residuals(pose, geom):
    """Signed distances of B_i from their constraint planes."""
    b = platform_anchors_world(pose, geom)
    return np.einsum("ij,ij->i", PLANE_NORMALS, b)


def _check_angle_limits(alpha, beta, geom):
    lim = geom.joint_limit + _LIMIT_SLACK
    if abs(beta) > lim:
        raise WorkspaceError(
            f"tilt beta={math.degrees(beta):.4f} deg exceeds the "
            f"{math.degrees(geom.joint_limit):g} deg tilt limit")
    if abs(alpha) > lim:
        raise WorkspaceError(
            f"alpha={math.degrees(alpha):.4f} deg exceeds the "
            f"{math.degrees(geom.joint_limit):g} deg joint limit")


def constrained_offsets(alpha, beta, geom):
    """Centre offsets (x, y) from the constraint planes for gamma = -alpha.

    Uses the plane relations directly: with ``R = zyz(alpha, beta, -alpha)``,
    ``x = r (R00 - R11) / 2`` and ``y = -r R10``.
    """
    r = geom.platform_radius
    rot = zyz_matrix(alpha, beta, -alpha)
    return r * (rot[0, 0] - rot[1, 1]) / 2.0, -r * rot[1, 0]


def constraint_derivatives(alpha, beta, geom):
    """Closed-form x, y and their first/second partials in (alpha, beta).

    Returns ``(xy, grad, hess)`` where ``grad`` is 2x2 (rows x, y; columns
    alpha, beta) and ``hess`` is 2x2x2.
    """
    r = geom.platform_radius
    cb, sb = math.cos(beta), math.sin(beta)
    c2, s2 = math.cos(2 * alpha), math.sin(2 * alpha)
    k = 1.0 - cb
    x = -r * k * c2 / 2.0
    y = r * k * s2 / 2.0
    grad = np.array([
        [r * k * s2, -r * sb * c2 / 2.0],
        [r * k * c2, r * sb * s2 / 2.0],
    ])
    hess = np.array([
        [[2 * r * k * c2, r * sb * s2], [r * sb * s2, -r * cb * c2 / 2.0]],
        [[-2 * r * k * s2, r * sb * c2], [r * sb * c2, r * cb * s2 / 2.0]],
    ])
    return np.array([x, y]), grad, hess


def resolve_constraints(alpha, beta, z, geom, check_limits=True):
    """Complete the pose from the three independent coordinates."""
    if check_limits:
        _check_angle_limits(alpha, beta, geom)
    x, y = constrained_offsets(alpha, beta, geom)
    return Pose(x, y, z, alpha, beta, -alpha)


def leg_vectors(pose, geom):
    """Rows are ``B_i - A_i``."""
    return platform_anchors_world(pose, geom) - base_anchors(geom)


def leg_lengths(pose, geom):
    return np.linalg.norm(leg_vectors(pose, geom), axis=1)


def check_stroke(lengths, geom):
    lo, hi = geom.actuator_min_length, geom.max_length
    for i, length in enumerate(lengths):
        if not lo - _LIMIT_SLACK <= length <= hi + _LIMIT_SLACK:
            raise WorkspaceError(
                f"leg {i + 1} length {length:.6f} m outside stroke [{lo:g}, {hi:g}] m")


def inverse_kinematics(pose, geom, check=True):
    """Actuator lengths ``L_i = |B_i - A_i|``; raises on stroke violation."""
    lengths = leg_lengths(pose, geom)
    if check:
        check_stroke(lengths, geom)
    return lengths


def length_jacobian(alpha, beta, z, geom):
    """Analytic dL/d(alpha, beta, z) along the constraint manifold (3x3)."""
    pose = resolve_constraints(alpha, beta, z, geom, check_limits=False)
    rot = pose.rotation()
    rho = platform_anchors_local(geom) @ rot.T
    d = leg_vectors(pose, geom)
    s_hat = d / np.linalg.norm(d, axis=1)[:, None]
    _, grad, _ = constraint_derivatives(alpha, beta, geom)
    t_s = zyz_spatial_rate_matrix(alpha, beta)
    # spatial angular velocity per unit rate of alpha (gamma follows -alpha) and beta
    omega = [t_s @ np.array([1.0, 0.0, -1.0]), t_s @ np.array([0.0, 1.0, 0.0])]
    jac = np.zeros((3, 3))
    for i in range(3):
        for k in range(2):
            dp = np.array([grad[0, k], grad[1, k], 0.0])
            jac[i, k] = s_hat[i] @ (dp - skew(rho[i]) @ omega[k])
        jac[i, 2] = s_hat[i, 2]
    return jac


# -- forward kinematics ----------------------------------------------------
#
# Newton iterates on the tilt vector w = beta * (-sin alpha, cos alpha, 0)
# and z.  It is the rotation vector of zyz(alpha, beta, -alpha), so the
# parametrisation stays regular at the level pose where alpha is undefined.

def tilt_vector(alpha, beta):
    return np.array([-beta * math.sin(alpha), beta * math.cos(alpha)])


def angles_from_tilt(wx, wy):
    """Inverse of :func:`tilt_vector` with alpha folded into (-pi/2, pi/2]."""
    beta = math.hypot(wx, wy)
    if beta == 0.0:
        return 0.0, 0.0
    alpha = math.atan2(-wx, wy)
    if alpha > math.pi / 2:
        alpha -= math.pi
        beta = -beta
    elif alpha <= -math.pi / 2:
        alpha += math.pi
        beta = -beta
    return alpha, beta


def _tilt_model(q, geom):
    """Leg lengths and their Jacobian in the (wx, wy, z) coordinates."""
    r = geom.platform_radius
    w = np.array([q[0], q[1], 0.0])
    rot = so3_exp(w)
    jl = so3_left_jacobian(w)
    p = np.array([r * (rot[0, 0] - rot[1, 1]) / 2.0, -r * rot[1, 0], q[2]])
    b_local = platform_anchors_local(geom)
    d = p + b_local @ rot.T - base_anchors(geom)
    lengths = np.linalg.norm(d, axis=1)
    s_hat = d / lengths[:, None]
    jac = np.zeros((3, 3))
    for k in range(2):
        d_rot = skew(jl[:, k]) @ rot
        dp = np.array([r * (d_rot[0, 0] - d_rot[1, 1]) / 2.0, -r * d_rot[1, 0], 0.0])
        db = dp + b_local @ d_rot.T
        jac[:, k] = np.einsum("ij,ij->i", s_hat, db)
    jac[:, 2] = s_hat[:, 2]
    return lengths, jac


def forward_kinematics(lengths, geom, initial_guess=None, tol=1e-10,
                       max_iter=50, check=True):
    """Constrained pose reproducing ``lengths`` (damped Newton).

    The step is halved until the residual norm decreases; when no halving
    helps the solver gives up with :class:`ConvergenceError`.
    """
    target = np.asarray(lengths, dtype=float)
    if check:
        check_stroke(target, geom)
    if initial_guess is None:
        mean = float(np.mean(target))
        offset = geom.base_radius - geom.platform_radius
        z0 = math.sqrt(max(mean**2 - offset**2, (0.5 * mean) ** 2))
        q = np.array([0.0, 0.0, z0])
    else:
        q = np.array([*tilt_vector(initial_guess.alpha, initial_guess.beta),
                      initial_guess.z])

    value, jac = _tilt_model(q, geom)
    res = value - target
    norm = float(np.max(np.abs(res)))
    polished = False
    for it in range(1, max_iter + 1):
        if norm <= tol:
            if polished:
                break
            polished = True
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        lam = 1.0
        accepted = False
        for _ in range(30):
            trial = q + lam * step
            t_value, t_jac = _tilt_model(trial, geom)
            t_res = t_value - target
            t_norm = float(np.max(np.abs(t_res)))
            if t_norm < norm or (norm <= tol and t_norm <= norm):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            if norm <= tol:
                break
            raise ConvergenceError(
                f"forward kinematics stalled (residual {norm:.3e} m)", norm, it)
        q, jac, res, norm = trial, t_jac, t_res, t_norm
    else:
        if norm > tol:
            raise ConvergenceError(
                f"forward kinematics did not converge in {max_iter} iterations "
                f"(residual {norm:.3e} m)", norm, max_iter)

    alpha, beta = angles_from_tilt(q[0], q[1])
    return resolve_constraints(alpha, beta, float(q[2]), geom, check_limits=False)


def actuator_tip_and_center(lengths, mount_angles, geom):
    """Fixed-inclination estimate of the actuator tips and platform centre.

    Each actuator is taken to stand at its mounting angle ``theta_i`` from the
    base plane regardless of pose, so the result is an approximation; the
    exact centre is the translation part of :func:`pose_transform`.
    Returns ``(tips, centre)`` with ``tips`` of shape (3, 3).
    """
    l1, l2, l3 = lengths
    t1, t2, t3 = mount_angles
    big_r = geom.base_radius
    tips = np.array([
        [big_r - l1 * math.cos(t1), 0.0, l1 * math.sin(t1)],
        [(-big_r + l2 * math.cos(t2)) / 2.0, SQRT3 * (big_r - l2 * math.cos(t2)) / 2.0,
         l2 * math.sin(t2)],
        [(-big_r + l3 * math.cos(t3)) / 2.0, SQRT3 * (-big_r + l3 * math.cos(t3)) / 2.0,
         l3 * math.sin(t3)],
    ])
    return tips, tips.mean(axis=0)


# -- workspace report -------------------------------------------------------

@dataclass
class WorkspaceReport:
    tilt_deg: float
    azimuth_deg: float
    joint_angles_deg: np.ndarray
    joint_deviation_deg: np.ndarray
    lengths: np.ndarray
    stroke_usage: np.ndarray
    sagittal_deg: float
    frontal_deg: float
    violations: list = field(default_factory=list)
    rom_notes: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _angle_between(u, v):
    c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(min(1.0, max(-1.0, c)))


def workspace_check(pose, geom):
    """Report joint angles, stroke usage and tilt against the limits.

    Pass/fail covers the tilt and azimuth limits and the stroke range.  The
    angle between each leg and the platform normal (and its change from the
    level pose at the same height) is reported; anterior is +y, so the
    sagittal tilt is the rotation about +x.  ROM comparisons are notes only.
    """
    violations = []
    lim_deg = math.degrees(geom.joint_limit)
    tilt = math.degrees(pose.beta)
    azimuth = math.degrees(pose.alpha)
    if abs(pose.beta) > geom.joint_limit + _LIMIT_SLACK:
        violations.append(f"tilt {tilt:.4f} deg exceeds {lim_deg:g} deg limit")
    if abs(pose.alpha) > geom.joint_limit + _LIMIT_SLACK:
        violations.append(f"alpha {azimuth:.4f} deg exceeds {lim_deg:g} deg limit")

    d = leg_vectors(pose, geom)
    lengths = np.linalg.norm(d, axis=1)
    normal = pose.rotation()[:, 2]
    joint = np.array([math.degrees(_angle_between(d[i], normal)) for i in range(3)])
    level = Pose(pose.x, pose.y, pose.z, 0.0, 0.0, 0.0)
    d0 = leg_vectors(level, geom)
    joint0 = np.array([math.degrees(_angle_between(d0[i], [0.0, 0.0, 1.0]))
                       for i in range(3)])
    usage = (lengths - geom.actuator_min_length) / geom.stroke_max
    for i, u in enumerate(usage):
        if u < -_LIMIT_SLACK or u > 1.0 + _LIMIT_SLACK:
            violations.append(f"leg {i + 1} stroke usage {u:.3f} outside [0, 1]")

    # rotation vector of a zero-torsion tilt: beta * (-sin alpha, cos alpha, 0)
    wx, wy = tilt_vector(pose.alpha, pose.beta)
    sagittal = math.degrees(wx)
    frontal = math.degrees(wy)
    rom = geom.rom
    notes = []
    if sagittal > rom.dorsiflexion:
        notes.append(f"dorsiflexion {sagittal:.2f} deg beyond ROM {rom.dorsiflexion:g}")
    if -sagittal > rom.plantarflexion:
        notes.append(f"plantarflexion {-sagittal:.2f} deg beyond ROM {rom.plantarflexion:g}")
    if frontal > rom.inversion:
        notes.append(f"inversion {frontal:.2f} deg beyond ROM {rom.inversion:g}")
    if -frontal > rom.eversion:
        notes.append(f"eversion {-frontal:.2f} deg beyond ROM {rom.eversion:g}")

    return WorkspaceReport(
        tilt_deg=tilt,
        azimuth_deg=azimuth,
        joint_angles_deg=joint,
        joint_deviation_deg=joint - joint0,
        lengths=lengths,
        stroke_usage=usage,
        sagittal_deg=sagittal,
        frontal_deg=frontal,
        violations=violations,
        rom_notes=notes,
    )
