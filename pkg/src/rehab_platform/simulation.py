"""Closed-loop simulation: reference -> constraints -> IK -> dynamics -> FK.

A reference in the independent coordinates (alpha, beta, z) is lifted to the
six task coordinates of the dynamics model together with its analytic
velocity and acceleration.  A computed-torque law built on the *model*
drives a *plant* (identical to the model in consistency mode, with scaled
inertia in mismatch mode) integrated by classical RK4.  Each sample records
the actuator lengths of the achieved state, the pose reconstructed from them
by forward kinematics, the axial actuator forces and the tracking error.
"""

from dataclasses import dataclass, field
import functools
import math

import numpy as np

from .dynamics import (
    COND_FAIL,
    DynamicsModel,
    TaskState,
    actuator_forces,
    assemble,
    t_reverse,
    t_reverse_dot,
)
from .errors import ConvergenceError, PlatformError, SingularityError, WorkspaceError
from .geometry import (
    base_anchors,
    constraint_derivatives,
    forward_kinematics,
    inverse_kinematics,
    platform_anchors_local,
    resolve_constraints,
)
from .rotations import (
    rpy_from_matrix,
    rpy_matrix,
    zyz_spatial_rate_matrix,
    zyz_spatial_rate_matrix_dot,
)

KINDS = ("step", "sine", "composite")
MODES = ("consistency", "mismatch")
CHANNELS = ("alpha", "beta", "z")
METRIC_DEFINITION = ("rms = sqrt(mean(err^2)); "
                     "accuracy_pct = 100 * (1 - rms(err) / rms(ref))")
PUBLISHED_MIN_ACCURACY_PCT = 96.2975


class SimulationAborted(PlatformError):
    """Raised when a run leaves the workspace or a solver fails.

    ``trace`` holds every sample recorded before the failure and ``cause``
    the underlying exception.
    """

    def __init__(self, message, trace, cause=None):
        super().__init__(message)
        self.trace = trace
        self.cause = cause


# -- references ---------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceTrajectory:
    """Reference for (alpha [rad], beta [rad], z [m]).

    ``offset`` is the constant part; a ``None`` height means the level
    height at mid-stroke.  ``sine`` adds ``amplitude * sin(2 pi f t)`` per
    channel, ``step`` adds ``amplitude`` after ``step_time`` through a cosine
    ramp of length ``ramp``, ``composite`` adds both (the step part uses
    ``step_amplitude``).
    """

    kind: str = "sine"
    amplitude: tuple = (math.radians(10.0), math.radians(6.0), 0.02)
    frequency: tuple = (0.2, 0.5, 0.3)
    offset: tuple = (0.0, math.radians(10.0), None)
    duration: float = 10.0
    sample_dt: float = 0.01
    step_time: float = 1.0
    ramp: float = 0.05
    step_amplitude: tuple = (0.0, math.radians(3.0), 0.01)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"reference kind must be one of {KINDS}")
        if not self.duration >= 0:
            raise ValueError("duration must be non-negative")
        if not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")
        if not self.ramp > 0:
            raise ValueError("ramp must be positive")
        for name in ("amplitude", "frequency", "offset", "step_amplitude"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} needs one value per channel")

    def resolved_offset(self, geom):
        a, b, z = self.offset
        if z is None:
            z = geom.level_height(geom.mid_length)
        return np.array([a, b, z], dtype=float)

    @classmethod
    def from_dict(cls, cfg):
        kw = dict(cfg)
        for key in ("amplitude", "frequency", "offset", "step_amplitude"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


_SNAP = 1e-12


def _ramp(t, t0, width, side=1):
    """Cosine ramp from 0 to 1 on [t0, t0 + width] and its derivatives.

    The acceleration jumps at both ends; ``side`` picks the right (+1) or
    left (-1) limit there so that RK4 stages bracketing a breakpoint see the
    smooth piece they integrate over.
    """
    tau = t - t0
    if abs(tau) <= _SNAP:
        tau = 0.0
    if abs(tau - width) <= _SNAP:
        tau = width
    if tau < 0.0 or (tau == 0.0 and side < 0):
        return 0.0, 0.0, 0.0
    if tau > width or (tau == width and side > 0):
        return 1.0, 0.0, 0.0
    k = math.pi / width
    ph = k * tau
    return 0.5 * (1.0 - math.cos(ph)), 0.5 * k * math.sin(ph), 0.5 * k * k * math.cos(ph)


def reference_at(spec, t, geom, side=1):
    """Reference value, velocity and acceleration of (alpha, beta, z) at ``t``.

    ``side`` selects the one-sided limit at step-ramp breakpoints.
    """
    q = spec.resolved_offset(geom)
    qd = np.zeros(3)
    qdd = np.zeros(3)
    if spec.kind in ("sine", "composite"):
        amp = np.asarray(spec.amplitude, dtype=float)
        w = 2.0 * math.pi * np.asarray(spec.frequency, dtype=float)
        s, c = np.sin(w * t), np.cos(w * t)
        q = q + amp * s
        qd = qd + amp * w * c
        qdd = qdd - amp * w * w * s
    if spec.kind in ("step", "composite"):
        amp = np.asarray(spec.amplitude if spec.kind == "step" else spec.step_amplitude,
                         dtype=float)
        v, dv, ddv = _ramp(t, spec.step_time, spec.ramp, side)
        q = q + amp * v
        qd = qd + amp * dv
        qdd = qdd + amp * ddv
    return q, qd, qdd


def sample_times(spec):
    """Uniform grid ``k * sample_dt``; a zero duration gives no samples."""
    if spec.duration == 0:
        return np.zeros(0)
    n = int(round(spec.duration / spec.sample_dt))
    return np.arange(n + 1) * spec.sample_dt


@dataclass
class ReferenceSamples:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray


def generate_reference(spec, geom):
    """Sample the reference; raises WorkspaceError if any sample is unreachable."""
    t = sample_times(spec)
    q = np.zeros((len(t), 3))
    qd = np.zeros_like(q)
    qdd = np.zeros_like(q)
    for k, tk in enumerate(t):
        q[k], qd[k], qdd[k] = reference_at(spec, tk, geom)
        try:
            inverse_kinematics(resolve_constraints(*q[k], geom), geom)
        except WorkspaceError as exc:
            raise WorkspaceError(f"reference leaves the workspace at t={tk:g} s: {exc}") \
                from None
    return ReferenceSamples(t, q, qd, qdd)


def task_reference(q, qd, qdd, geom):
    """Lift (alpha, beta, z) and derivatives to task X, X', X''."""
    alpha, beta, z = q
    a_d, b_d, z_d = qd
    a_dd, b_dd, z_dd = qdd
    xy, grad, hess = constraint_derivatives(alpha, beta, geom)
    ab_d = np.array([a_d, b_d])
    xy_d = grad @ ab_d
    xy_dd = grad @ np.array([a_dd, b_dd]) + np.einsum("ijk,j,k->i", hess, ab_d, ab_d)

    rot = resolve_constraints(alpha, beta, z, geom, check_limits=False).rotation()
    angles = rpy_from_matrix(rot)
    zyz_rates = np.array([a_d, b_d, -a_d])
    zyz_acc = np.array([a_dd, b_dd, -a_dd])
    t_zyz = zyz_spatial_rate_matrix(alpha, beta)
    omega = t_zyz @ zyz_rates
    omega_d = zyz_spatial_rate_matrix_dot(alpha, beta, a_d, b_d) @ zyz_rates + t_zyz @ zyz_acc
    t_s = t_reverse(*angles, frame="spatial")
    rates = np.linalg.solve(t_s, omega)
    acc = np.linalg.solve(t_s, omega_d - t_reverse_dot(angles, rates, "spatial") @ rates)

    X = np.concatenate([[xy[0], xy[1], z], angles])
    Xd = np.concatenate([[xy_d[0], xy_d[1], z_d], rates])
    Xdd = np.concatenate([[xy_dd[0], xy_dd[1], z_dd], acc])
    return X, Xd, Xdd


def task_lengths(X, geom):
    """Actuator lengths of a task-space state (no constraint projection)."""
    d = X[:3] + platform_anchors_local(geom) @ rpy_matrix(*X[3:]).T - base_anchors(geom)
    return np.linalg.norm(d, axis=1)


# -- closed loop --------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    kp: float = 100.0
    kd: float = 20.0
    mode: str = "consistency"
    mismatch_factor: float = 1.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be non-negative")


@dataclass
class SimulationTrace:
    t: np.ndarray
    ref: np.ndarray          # (n, 3) alpha, beta, z
    out: np.ndarray          # (n, 3) reconstructed by forward kinematics
    lengths: np.ndarray      # (n, 3)
    forces: np.ndarray       # (n, 3) axial actuator forces
    err: np.ndarray          # ref - out
    final_state: np.ndarray = None
    final_reference: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def columns(self):
        names = ["t[s]"]
        units = {"alpha": "rad", "beta": "rad", "z": "m"}
        for prefix in ("ref", "out"):
            names += [f"{prefix}_{c}[{units[c]}]" for c in CHANNELS]
        names += [f"L{i}[m]" for i in (1, 2, 3)]
        names += [f"F{i}[N]" for i in (1, 2, 3)]
        names += [f"err_{c}[{units[c]}]" for c in CHANNELS]
        return names

    def table(self):
        return np.column_stack([self.t, self.ref, self.out, self.lengths,
                                self.forces, self.err]).reshape(len(self.t), 16)

    def to_csv(self, path):
        write_csv(path, self.columns(), self.table())


def write_csv(path, columns, rows):
    """Comma-separated file with a unit-bearing header and round-trip floats."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _empty_trace(meta):
    z = np.zeros((0, 3))
    return SimulationTrace(np.zeros(0), z, z.copy(), z.copy(), z.copy(), z.copy(), meta=meta)


def run_closed_loop(spec, geom=None, model=None, config=None):
    """Run the closed loop and return a :class:`SimulationTrace`.

    ``spec.sample_dt`` must be a whole multiple of ``config.dt``.
    """
    config = config or IntegratorConfig()
    if model is None:
        model = DynamicsModel() if geom is None else DynamicsModel(geometry=geom)
    geom = model.geometry
    plant = model if config.mode == "consistency" else model.scaled(config.mismatch_factor)
    ratio = spec.sample_dt / config.dt
    every = int(round(ratio))
    if every < 1 or abs(ratio - every) > 1e-9 * ratio:
        raise ValueError("sample_dt must be a whole multiple of the integration step")
    meta = {"mode": config.mode, "dt": config.dt, "kind": spec.kind,
            "metric": METRIC_DEFINITION}

    times = sample_times(spec)
    if len(times) == 0:
        return _empty_trace(meta)
    generate_reference(spec, geom)          # rejects unreachable references early

    @functools.lru_cache(maxsize=8)
    def reference(t, side=1):
        # RK4 revisits t + dt/2 and t + dt, so each lift is computed once
        return task_reference(*reference_at(spec, t, geom, side), geom)

    def command(t, X, Xd, side=1):
        """Computed-torque force and the plant acceleration it produces."""
        X_r, Xd_r, Xdd_r = reference(t, side)
        a_cmd = Xdd_r + config.kd * (Xd_r - Xd) + config.kp * (X_r - X)
        state = TaskState(X, Xd, a_cmd)
        mats = assemble(state, model)
        force = mats.M @ a_cmd + mats.C @ Xd + mats.G
        pm = mats if plant is model else assemble(state, plant)
        if not pm.condition < COND_FAIL:
            raise SingularityError(f"plant mass matrix is singular (cond {pm.condition:.3e})",
                                   pm.condition)
        acc = np.linalg.solve(pm.M, force - pm.C @ Xd - pm.G)
        return force, acc

    def deriv(t, y, side=1):
        _, acc = command(t, y[:6], y[6:], side)
        return np.concatenate([y[6:], acc])

    n = len(times)
    rec = {k: np.zeros((n, 3)) for k in ("ref", "out", "lengths", "forces")}
    X0, Xd0, _ = reference(0.0)
    y = np.concatenate([X0, Xd0])
    guess = None
    dt = config.dt
    step = 0

    def partial(k):
        parts = (rec[name][:k] for name in ("ref", "out", "lengths", "forces"))
        return SimulationTrace(times[:k], *parts, rec["ref"][:k] - rec["out"][:k],
                               meta=meta)

    for k, tk in enumerate(times):
        try:
            while step < k * every:
                t = step * dt
                k1 = deriv(t, y)
                k2 = deriv(t + 0.5 * dt, y + 0.5 * dt * k1)
                k3 = deriv(t + 0.5 * dt, y + 0.5 * dt * k2)
                k4 = deriv(t + dt, y + dt * k3, -1)
                y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                step += 1
            if not np.all(np.isfinite(y)):
                raise SingularityError("state became non-finite")
            lengths = task_lengths(y[:6], geom)
            pose = forward_kinematics(lengths, geom, initial_guess=guess)
            guess = pose
            force, _ = command(tk, y[:6], y[6:])
            f_axial, _ = actuator_forces(TaskState(y[:6], y[6:]), force, model)
        except (WorkspaceError, ConvergenceError, SingularityError,
                np.linalg.LinAlgError) as exc:
            raise SimulationAborted(f"simulation aborted at t={tk:g} s: {exc}",
                                    partial(k), exc) from exc
        rec["ref"][k] = reference_at(spec, tk, geom)[0]
        rec["out"][k] = pose.reduced()
        rec["lengths"][k] = lengths
        rec["forces"][k] = f_axial

    trace = partial(n)
    trace.final_state = y.copy()
    trace.final_reference = np.concatenate(reference(times[-1])[:2])
    return trace


# -- metrics ------------------------------------------------------------------

def rms(values):
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(values**2)))


def accuracy_percent(ref, out):
    """``100 (1 - rms(ref - out) / rms(ref))``; None when the reference is zero."""
    ref = np.asarray(ref, dtype=float)
    err_rms = rms(ref - np.asarray(out, dtype=float))
    ref_rms = rms(ref)
    if ref_rms == 0.0:
        return None
    return 100.0 * (1.0 - err_rms / ref_rms)


def rms_report(trace):
    """Per-channel RMS error, reference RMS and accuracy percentage."""
    report = {"metric": METRIC_DEFINITION, "samples": len(trace),
              "published_min_accuracy_pct": PUBLISHED_MIN_ACCURACY_PCT, "channels": {}}
    for j, name in enumerate(CHANNELS):
        if len(trace) == 0:
            report["channels"][name] = {"rms_error": None, "rms_reference": None,
                                        "accuracy_pct": None, "max_abs_error": None}
            continue
        report["channels"][name] = {
            "rms_error": rms(trace.err[:, j]),
            "rms_reference": rms(trace.ref[:, j]),
            "accuracy_pct": accuracy_percent(trace.ref[:, j], trace.out[:, j]),
            "max_abs_error": float(np.max(np.abs(trace.err[:, j]))),
        }
    accs = [c["accuracy_pct"] for c in report["channels"].values()
            if c["accuracy_pct"] is not None]
    report["min_accuracy_pct"] = min(accs) if accs else None
    return report


def final_state_error(trace):
    """Infinity norm of the task-space error at the last sample."""
    return float(np.max(np.abs(trace.final_state - trace.final_reference)))
