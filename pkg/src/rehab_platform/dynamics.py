"""Task-space rigid-body dynamics ``M(X) X'' + C(X, X') X' + G(X) = F``.

The task vector is ``X = [x, y, z, roll, pitch, yaw]`` with the platform
rotation ``Rz(yaw) Ry(pitch) Rx(roll)``.  Each actuator is a two-part rod
(fixed piston of mass ``m1`` centred ``c1`` from the base joint, sliding
stroke of mass ``m2`` centred ``c2`` from the tip) whose dynamics are written
in the coordinates of its attachment point ``x_i`` and mapped to task space
through the leg Jacobian ``J_i = [I | -S(rho_i) T_s]``.

Two Coriolis variants are available.  ``"corrected"`` (default) uses
``C_p + sum(J^T M_i dJ/dt + J^T C_i J)``; ``"published"`` keeps the printed
assembly ``C_p + sum(J^T M_i J + J^T C_i J)`` together with the
``dT^T I_p T`` platform term.  Only the corrected variant balances power.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .errors import SingularityError
from .geometry import PLANE_NORMALS, PlatformGeometry, base_anchors, platform_anchors_local
from .rotations import rpy_from_matrix, rpy_matrix, skew

GRAVITY = 9.8
VARIANTS = ("corrected", "published")


@dataclass(frozen=True)
class ActuatorParams:
    """Inertial parameters of one linear actuator.

    ``inertia1``/``inertia2`` are 3x3 tensors about the part centres in base
    axes.  Only the component transverse to the leg enters the energy, so an
    isotropic tensor is exact for a slender rod.
    """

    m1: float = 1.2
    c1: float = 0.12
    m2: float = 0.6
    c2: float = 0.08
    inertia1: np.ndarray = None
    inertia2: np.ndarray = None

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError("actuator masses must be non-negative")
        for name, mass, half in (("inertia1", self.m1, self.c1),
                                 ("inertia2", self.m2, self.c2)):
            tensor = getattr(self, name)
            if tensor is None:
                tensor = mass * (2.0 * half) ** 2 / 12.0 * np.eye(3)
            tensor = np.asarray(tensor, dtype=float)
            if tensor.shape != (3, 3) or not np.allclose(tensor, tensor.T):
                raise ValueError(f"{name} must be a symmetric 3x3 matrix")
            if np.linalg.eigvalsh(tensor).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, tensor)

    @property
    def inertia(self):
        return self.inertia1 + self.inertia2

    def scaled(self, factor):
        return ActuatorParams(self.m1 * factor, self.c1, self.m2 * factor, self.c2,
                              self.inertia1 * factor, self.inertia2 * factor)

    @classmethod
    def from_dict(cls, cfg):
        kw = {k: cfg[k] for k in ("m1", "c1", "m2", "c2") if k in cfg}
        if "I1" in cfg:
            kw["inertia1"] = _as_tensor(cfg["I1"])
        if "I2" in cfg:
            kw["inertia2"] = _as_tensor(cfg["I2"])
        return cls(**kw)


@dataclass(frozen=True)
class PlatformBody:
    mass: float = 8.0
    inertia: np.ndarray = None
    gravity: float = GRAVITY

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("platform mass must be positive")
        tensor = np.diag([0.15, 0.15, 0.3]) if self.inertia is None else self.inertia
        tensor = np.asarray(tensor, dtype=float)
        if tensor.shape != (3, 3) or not np.allclose(tensor, tensor.T):
            raise ValueError("platform inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(tensor).min() <= 0:
            raise ValueError("platform inertia must be positive definite")
        object.__setattr__(self, "inertia", tensor)

    @property
    def gravity_vector(self):
        return np.array([0.0, 0.0, -self.gravity])

    def scaled(self, factor):
        return PlatformBody(self.mass * factor, self.inertia * factor, self.gravity)

    @classmethod
    def from_dict(cls, cfg):
        kw = {}
        if "mass_kg" in cfg:
            kw["mass"] = cfg["mass_kg"]
        if "inertia" in cfg:
            kw["inertia"] = _as_tensor(cfg["inertia"])
        if "gravity" in cfg:
            kw["gravity"] = cfg["gravity"]
        return cls(**kw)


def _as_tensor(value):
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        return float(arr) * np.eye(3)
    if arr.shape == (3,):
        return np.diag(arr)
    return arr


@dataclass(frozen=True)
class DynamicsModel:
    geometry: PlatformGeometry = field(default_factory=PlatformGeometry)
    body: PlatformBody = field(default_factory=PlatformBody)
    actuators: tuple = field(default_factory=lambda: (ActuatorParams(),) * 3)
    variant: str = "corrected"

    def __post_init__(self):
        if len(self.actuators) != 3:
            raise ValueError("exactly three actuators are required")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def scaled(self, factor):
        """Same model with every mass and inertia multiplied by ``factor``."""
        return DynamicsModel(self.geometry, self.body.scaled(factor),
                             tuple(a.scaled(factor) for a in self.actuators),
                             self.variant)

    @classmethod
    def from_dict(cls, cfg, geometry=None):
        geometry = geometry or PlatformGeometry()
        body = PlatformBody.from_dict(cfg.get("platform", {}))
        acts = cfg.get("actuators")
        if acts is None:
            actuators = (ActuatorParams(),) * 3
        elif len(acts) == 1:
            actuators = (ActuatorParams.from_dict(acts[0]),) * 3
        else:
            actuators = tuple(ActuatorParams.from_dict(a) for a in acts)
        return cls(geometry, body, actuators, cfg.get("variant", "corrected"))


@dataclass
class TaskState:
    """Task-space position, velocity and acceleration (6-vectors)."""

    X: np.ndarray
    Xd: np.ndarray = None
    Xdd: np.ndarray = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Xd = np.zeros(6) if self.Xd is None else np.asarray(self.Xd, dtype=float)
        self.Xdd = np.zeros(6) if self.Xdd is None else np.asarray(self.Xdd, dtype=float)
        for name in ("X", "Xd", "Xdd"):
            arr = getattr(self, name)
            if arr.shape != (6,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be a finite 6-vector")

    @property
    def rotation(self):
        return rpy_matrix(*self.X[3:])

    @property
    def angles(self):
        return self.X[3:]

    @property
    def rates(self):
        return self.Xd[3:]


@dataclass
class DynamicsMatrices:
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray
    condition: float = float("nan")
    warning: str = None


def task_coordinates(pose):
    """Task vector of a geometry :class:`~rehab_platform.geometry.Pose`."""
    return np.concatenate([pose.position(), rpy_from_matrix(pose.rotation())])


# -- Euler-rate maps ----------------------------------------------------------

def t_reverse(roll, pitch, yaw, frame="body"):
    """Matrix taking (roll', pitch', yaw') to the angular velocity.

    ``frame="body"`` gives the platform-frame angular velocity (used with the
    constant body inertia); ``frame="spatial"`` the base-frame one.  Both are
    the identity at zero angles.
    """
    cp = math.cos(pitch)
    if abs(cp) < 1e-9:
        raise SingularityError("Euler-rate map is singular at pitch = +-pi/2")
    sp = math.sin(pitch)
    if frame == "body":
        cr, sr = math.cos(roll), math.sin(roll)
        return np.array([
            [1.0, 0.0, -sp],
            [0.0, cr, cp * sr],
            [0.0, -sr, cp * cr],
        ])
    if frame == "spatial":
        cy, sy = math.cos(yaw), math.sin(yaw)
        return np.array([
            [cy * cp, -sy, 0.0],
            [sy * cp, cy, 0.0],
            [-sp, 0.0, 1.0],
        ])
    raise ValueError("frame must be 'body' or 'spatial'")


def t_reverse_dot(angles, rates, frame="body"):
    """Time derivative of :func:`t_reverse` along ``rates``."""
    roll, pitch, yaw = angles
    dr, dp, dy = rates
    cp, sp = math.cos(pitch), math.sin(pitch)
    if frame == "body":
        cr, sr = math.cos(roll), math.sin(roll)
        return np.array([
            [0.0, 0.0, -cp * dp],
            [0.0, -sr * dr, -sp * sr * dp + cp * cr * dr],
            [0.0, -cr * dr, -sp * cr * dp - cp * sr * dr],
        ])
    if frame == "spatial":
        cy, sy = math.cos(yaw), math.sin(yaw)
        return np.array([
            [-sy * cp * dy - cy * sp * dp, -cy * dy, 0.0],
            [cy * cp * dy - sy * sp * dp, -sy * dy, 0.0],
            [-cp * dp, 0.0, 0.0],
        ])
    raise ValueError("frame must be 'body' or 'spatial'")


# -- legs ---------------------------------------------------------------------

@dataclass
class LegState:
    anchor: np.ndarray      # a_i, base joint
    rho: np.ndarray         # R b_i, platform anchor relative to the centre
    point: np.ndarray       # x_i = X_c + rho_i
    s_hat: np.ndarray
    length: float
    point_velocity: np.ndarray
    length_rate: float
    omega: np.ndarray       # leg angular velocity


def leg_kinematics(state, geom, i):
    rot = state.rotation
    rho = rot @ platform_anchors_local(geom)[i]
    anchor = base_anchors(geom)[i]
    point = state.X[:3] + rho
    d = point - anchor
    length = float(np.linalg.norm(d))
    if length < 1e-9:
        raise SingularityError(f"leg {i + 1} has zero length")
    s_hat = d / length
    xdot = leg_jacobian(state, geom, i) @ state.Xd
    return LegState(anchor, rho, point, s_hat, length, xdot,
                    float(s_hat @ xdot), np.cross(s_hat, xdot) / length)


def leg_jacobian(state, geom, i):
    """3x6 map from task velocity to the velocity of attachment point i."""
    rho = state.rotation @ platform_anchors_local(geom)[i]
    jac = np.zeros((3, 6))
    jac[:, :3] = np.eye(3)
    jac[:, 3:] = -skew(rho) @ t_reverse(*state.angles, frame="spatial")
    return jac


def leg_jacobian_dot(state, geom, i):
    t_s = t_reverse(*state.angles, frame="spatial")
    t_s_dot = t_reverse_dot(state.angles, state.rates, frame="spatial")
    rho = state.rotation @ platform_anchors_local(geom)[i]
    rho_dot = np.cross(t_s @ state.rates, rho)
    jdot = np.zeros((3, 6))
    jdot[:, 3:] = -skew(rho_dot) @ t_s - skew(rho) @ t_s_dot
    return jdot


def _leg_terms(params, length):
    h = (params.m1 * params.c1**2 + params.m2 * (length - params.c2) ** 2) / length**2
    dh = (2.0 * params.m2 * (length - params.c2) / length**2
          - 2.0 * (params.m1 * params.c1**2 + params.m2 * (length - params.c2) ** 2)
          / length**3)
    return h, dh


def leg_mass_matrix(s_hat, length, params):
    h, _ = _leg_terms(params, length)
    s = skew(s_hat)
    uu = np.outer(s_hat, s_hat)
    return (h * (np.eye(3) - uu) + params.m2 * uu
            - s @ params.inertia @ s / length**2)


def leg_coriolis_matrix(s_hat, length, xdot, params):
    """C_i with ``C_i x' = dM/dt x' - 1/2 d(x'^T M x')/dx``."""
    u, v, inertia = s_hat, xdot, params.inertia
    h, dh = _leg_terms(params, length)
    p_perp = np.eye(3) - np.outer(u, u)
    su = skew(u)
    l_dot = float(u @ v)
    u_dot = p_perp @ v / length
    su_dot = skew(u_dot)
    m_dot = (dh * l_dot * p_perp
             + (params.m2 - h) * (np.outer(u_dot, u) + np.outer(u, u_dot))
             - (su_dot @ inertia @ su + su @ inertia @ su_dot) / length**2
             + 2.0 * l_dot * su @ inertia @ su / length**3)
    q = su @ v
    n = (dh * np.outer(u, v @ p_perp)
         + 2.0 * (params.m2 - h) / length * np.outer(p_perp @ v, u)
         + 2.0 * p_perp @ skew(v) @ inertia @ su / length**3
         - 2.0 * np.outer(u, q @ inertia @ su) / length**3)
    return m_dot - 0.5 * n


def leg_gravity_vector(s_hat, length, params, gravity_vector):
    s2 = skew(s_hat) @ skew(s_hat)
    return ((params.m1 * params.c1 - params.m2 * params.c2) / length * s2
            - params.m2 * np.eye(3)) @ gravity_vector


def actuator_matrices(state, params, geom, i, gravity=GRAVITY):
    """(M_i, C_i, G_i) of actuator ``i`` in attachment-point coordinates."""
    leg = leg_kinematics(state, geom, i)
    g_vec = np.array([0.0, 0.0, -gravity])
    m = leg_mass_matrix(leg.s_hat, leg.length, params)
    c = leg_coriolis_matrix(leg.s_hat, leg.length, leg.point_velocity, params)
    g = leg_gravity_vector(leg.s_hat, leg.length, params, g_vec)
    return m, c, g


# -- platform -----------------------------------------------------------------

def platform_matrices(state, body, variant="corrected"):
    """(M_p, C_p, G_p) of the moving platform in task coordinates."""
    t_b = t_reverse(*state.angles, frame="body")
    t_b_dot = t_reverse_dot(state.angles, state.rates, frame="body")
    omega = t_b @ state.rates
    ip = body.inertia
    mp = np.zeros((6, 6))
    mp[:3, :3] = body.mass * np.eye(3)
    mp[3:, 3:] = t_b.T @ ip @ t_b
    cp = np.zeros((6, 6))
    if variant == "published":
        cp[3:, 3:] = t_b_dot.T @ ip @ t_b + t_b.T @ skew(omega) @ ip @ t_b
    else:
        cp[3:, 3:] = t_b.T @ ip @ t_b_dot + t_b.T @ skew(omega) @ ip @ t_b
    gp = np.zeros(6)
    gp[:3] = -body.mass * body.gravity_vector
    return mp, cp, gp


# -- assembly -----------------------------------------------------------------

COND_WARN = 1e8
COND_FAIL = 1e12


def _skew_batch(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _actuator_stack(model):
    """Per-leg parameters as arrays, cached on the (immutable) model."""
    cached = model.__dict__.get("_stack")
    if cached is None:
        acts = model.actuators
        cached = tuple(np.array([getattr(a, k) for a in acts])[:, None, None]
                       for k in ("m1", "c1", "m2", "c2"))
        cached += (np.stack([a.inertia for a in acts]),)
        object.__setattr__(model, "_stack", cached)
    return cached


_EYE3 = np.eye(3)


def assemble(state, model):
    """Task-space ``(M, C, G)`` with the mass-matrix condition number.

    Evaluates the same expressions as :func:`actuator_matrices` and
    :func:`leg_jacobian_dot`, batched over the three legs.
    """
    geom = model.geometry
    X, Xd = state.X, state.Xd
    angles, rates = X[3:], Xd[3:]
    m_all, c_all, g_all = platform_matrices(state, model.body, model.variant)
    m1, c1, m2, c2, inertia = _actuator_stack(model)
    rot = rpy_matrix(*angles)
    t_s = t_reverse(*angles, frame="spatial")
    t_s_dot = t_reverse_dot(angles, rates, frame="spatial")
    rho = platform_anchors_local(geom) @ rot.T                    # (3, 3) rows
    d = X[:3] + rho - base_anchors(geom)
    length = np.sqrt(np.einsum("ij,ij->i", d, d))
    if length.min() < 1e-9:
        raise SingularityError("a leg has zero length")
    u = d / length[:, None]
    s_rho = _skew_batch(rho)
    jac = np.zeros((3, 3, 6))
    jac[:, :, :3] = _EYE3
    jac[:, :, 3:] = -s_rho @ t_s
    v = jac @ Xd                                                  # (3, 3)
    ln = length[:, None, None]
    reach = ln - c2
    num = m1 * c1**2 + m2 * reach**2
    h = num / ln**2
    uu = u[:, :, None] * u[:, None, :]
    p_perp = _EYE3 - uu
    su = _skew_batch(u)
    si = su @ inertia
    sis = si @ su
    m_i = h * p_perp + m2 * uu - sis / ln**2
    g_mat = (m1 * c1 - m2 * c2) / ln * (su @ su) - m2 * _EYE3
    g_i = g_mat @ model.body.gravity_vector                       # (3, 3)
    jac_t = np.swapaxes(jac, 1, 2)
    jtm = jac_t @ m_i
    m_all = m_all + (jtm @ jac).sum(axis=0)
    g_all = g_all + np.einsum("kji,kj->i", jac, g_i)

    dh = 2.0 * m2 * reach / ln**2 - 2.0 * num / ln**3
    l_dot = np.einsum("ij,ij->i", u, v)[:, None, None]
    pv = v - l_dot[:, :, 0] * u
    u_dot = pv / length[:, None]
    su_dot = _skew_batch(u_dot)
    ud_u = u_dot[:, :, None] * u[:, None, :]
    m_dot = (dh * l_dot * p_perp
             + (m2 - h) * (ud_u + np.swapaxes(ud_u, 1, 2))
             - (su_dot @ inertia @ su + su @ inertia @ su_dot) / ln**2
             + 2.0 * l_dot * sis / ln**3)
    q = (su @ v[:, :, None])[:, :, 0]
    q_is = np.einsum("kj,kjl->kl", q, inertia @ su)
    n = (dh * u[:, :, None] * pv[:, None, :]
         + 2.0 * (m2 - h) / ln * pv[:, :, None] * u[:, None, :]
         + 2.0 * p_perp @ _skew_batch(v) @ inertia @ su / ln**3
         - 2.0 * u[:, :, None] * q_is[:, None, :] / ln**3)
    c_i = m_dot - 0.5 * n
    if model.variant == "published":
        c_all = c_all + ((jtm + jac_t @ c_i) @ jac).sum(axis=0)
    else:
        omega_s = t_s @ rates
        jdot = np.zeros((3, 3, 6))
        jdot[:, :, 3:] = (-_skew_batch(rho @ _skew_batch(omega_s).T) @ t_s
                          - s_rho @ t_s_dot)
        c_all = c_all + (jtm @ jdot + jac_t @ c_i @ jac).sum(axis=0)
    m_all = 0.5 * (m_all + m_all.T)
    cond = float(np.linalg.cond(m_all))
    note = None
    if cond > COND_WARN:
        note = f"mass matrix is ill-conditioned (cond {cond:.3e})"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return DynamicsMatrices(m_all, c_all, g_all, cond, note)


def inverse_dynamics(state, model):
    """Generalised task force ``F = M X'' + C X' + G``."""
    mats = assemble(state, model)
    return mats.M @ state.Xdd + mats.C @ state.Xd + mats.G


def forward_dynamics(state, force, model):
    """Task acceleration solving the equation of motion for ``force``."""
    mats = assemble(state, model)
    if not mats.condition < COND_FAIL:
        raise SingularityError(
            f"mass matrix is singular (cond {mats.condition:.3e})", mats.condition)
    return np.linalg.solve(mats.M, np.asarray(force, dtype=float)
                           - mats.C @ state.Xd - mats.G)


def kinetic_energy(state, model):
    mats = assemble(state, model)
    return 0.5 * float(state.Xd @ mats.M @ state.Xd)


def potential_energy(state, model):
    """Gravitational potential of platform and actuators (base plane = 0)."""
    g_vec = model.body.gravity_vector
    energy = -model.body.mass * float(g_vec @ state.X[:3])
    for i, params in enumerate(model.actuators):
        leg = leg_kinematics(state, model.geometry, i)
        lever = params.m1 * params.c1 + params.m2 * (leg.length - params.c2)
        energy -= float(g_vec @ (lever * leg.s_hat))
    return energy


def actuator_forces(state, force, model):
    """Split a task force into axial actuator forces and plane reactions.

    Solves ``F = sum_i J_i^T (s_i f_i + n_i lam_i)`` where ``n_i`` is the
    normal of leg i's constraint plane.  Returns ``(f, lam)``.
    """
    cols = []
    for i in range(3):
        jac = leg_jacobian(state, model.geometry, i)
        leg = leg_kinematics(state, model.geometry, i)
        cols.append(jac.T @ leg.s_hat)
    for i in range(3):
        jac = leg_jacobian(state, model.geometry, i)
        cols.append(jac.T @ PLANE_NORMALS[i])
    a = np.column_stack(cols)
    sol = np.linalg.solve(a, np.asarray(force, dtype=float))
    return sol[:3], sol[3:]
