"""Per-actuator PID position control of a simulated linear motor.

The plant is a moving mass with viscous and (smoothed) Coulomb friction and a
constant gravity load::

    m x'' = u - b x' - Fc tanh(x' / v_eps) - Fg

integrated with RK4 at ``plant_dt`` while the controller runs at
``control_dt`` with a zero-order hold on its output.  The controller sees
the position delayed by ``latency`` plus Gaussian sensor noise.  Positions are
displacements from the starting point of each run.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import PlatformError
from .simulation import accuracy_percent

REFERENCES = ("step", "sine")
COULOMB_VELOCITY = 5e-3     # m/s, width of the tanh friction smoothing
DIVERGENCE_FACTOR = 10.0

# Tracking accuracies quoted for the hardware; kept for annotation only.
PUBLISHED_STEP_ACCURACY = (94.6, 96.86, 96.8)
PUBLISHED_SINE_ACCURACY = (89.8, 88.8, 84.3)


class TuningError(PlatformError):
    """No gain set in the search box kept the loop stable."""


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    output_limit: float = 900.0
    integral_limit: float = None    # bound on |ki * integral| [N]; None -> output_limit

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be non-negative")
        if not self.output_limit > 0:
            raise ValueError("output_limit must be positive")
        if self.integral_limit is None:
            object.__setattr__(self, "integral_limit", self.output_limit)
        if not self.integral_limit > 0:
            raise ValueError("integral_limit must be positive")

    def as_tuple(self):
        return (self.kp, self.ki, self.kd)

    @classmethod
    def from_dict(cls, cfg):
        return cls(**cfg)


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = None


@dataclass(frozen=True)
class MotorPlant:
    mass: float = 15.0              # kg, moving mass incl. reflected load
    viscous: float = 100.0          # N s/m
    coulomb: float = 20.0           # N
    gravity_load: float = 150.0     # N, opposing positive motion
    noise_sigma: float = 5e-4       # m
    latency: float = 0.01           # s
    stroke: float = 0.20            # m

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("plant mass must be positive")
        if min(self.viscous, self.coulomb, self.noise_sigma, self.latency) < 0:
            raise ValueError("friction, noise and latency must be non-negative")
        if not self.stroke > 0:
            raise ValueError("stroke must be positive")

    @classmethod
    def from_dict(cls, cfg):
        return cls(**cfg)


def _clamp(value, limit):
    return max(-limit, min(limit, value))


def pid_step(gains, state, error, dt):
    """One controller update; returns ``(u, new_state)``.

    Integration is skipped while the output is saturated in the direction of
    the error (conditional integration), and ``|ki * integral|`` never
    exceeds ``integral_limit``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    deriv = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    integral = state.integral + error * dt
    if gains.ki > 0:
        integral = _clamp(integral, gains.integral_limit / gains.ki)
    raw = gains.kp * error + gains.ki * integral + gains.kd * deriv
    if abs(raw) > gains.output_limit and raw * error > 0:
        integral = state.integral
        raw = gains.kp * error + gains.ki * integral + gains.kd * deriv
    u = _clamp(raw, gains.output_limit)
    return u, PidState(integral, error)


# -- references and tracking ----------------------------------------------------

@dataclass(frozen=True)
class TrackingReference:
    kind: str = "step"
    amplitude: float = 0.05         # m
    frequency: float = 0.5          # Hz (sine)
    duration: float = 5.0           # s
    step_time: float = 0.0

    def __post_init__(self):
        if self.kind not in REFERENCES:
            raise ValueError(f"reference kind must be one of {REFERENCES}")
        if not self.duration >= 0:
            raise ValueError("duration must be non-negative")

    def value(self, t):
        if self.kind == "step":
            return self.amplitude if t >= self.step_time else 0.0
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t)

    @classmethod
    def default(cls, kind):
        if kind == "sine":
            return cls("sine", 0.05, 0.5, 10.0)
        return cls(kind)


@dataclass
class MotorTrace:
    t: np.ndarray
    ref: np.ndarray
    pos: np.ndarray
    u: np.ndarray
    integral_term: np.ndarray
    diverged: bool = False
    accuracy: float = None


@dataclass
class TrackingResult:
    motors: list
    reference: TrackingReference
    control_dt: float
    plant_dt: float
    seed: int = None
    published_accuracy: tuple = field(default=None)

    @property
    def accuracies(self):
        return [m.accuracy for m in self.motors]

    def columns(self):
        cols = ["t[s]"]
        for i in range(1, len(self.motors) + 1):
            cols += [f"ref_m{i}[m]", f"pos_m{i}[m]", f"u{i}[N]"]
        return cols

    def table(self):
        n = min(len(m.t) for m in self.motors)
        parts = [self.motors[0].t[:n]]
        for m in self.motors:
            parts += [m.ref[:n], m.pos[:n], m.u[:n]]
        return np.column_stack(parts)


def _plant_rk4(plant, x, v, u, h):
    m, b, fc, fg = plant.mass, plant.viscous, plant.coulomb, plant.gravity_load

    def acc(vel):
        return (u - b * vel - fc * math.tanh(vel / COULOMB_VELOCITY) - fg) / m

    a1 = acc(v)
    v2 = v + 0.5 * h * a1
    a2 = acc(v2)
    v3 = v + 0.5 * h * a2
    a3 = acc(v3)
    v4 = v + h * a3
    a4 = acc(v4)
    x_new = x + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return x_new, v_new


def simulate_motor(gains, plant, reference, rng, control_dt=0.01, plant_dt=1e-3):
    """Closed-loop run of one motor; ``rng`` supplies the sensor noise."""
    sub = int(round(control_dt / plant_dt))
    if sub < 1 or abs(sub * plant_dt - control_dt) > 1e-9 * control_dt:
        raise ValueError("control_dt must be a whole multiple of plant_dt")
    delay = int(round(plant.latency / plant_dt))
    n = int(round(reference.duration / control_dt))
    n = n + 1 if reference.duration > 0 else 0
    t = np.arange(n) * control_dt
    ref = np.array([reference.value(tk) for tk in t])
    pos = np.zeros(n)
    u_log = np.zeros(n)
    i_log = np.zeros(n)

    # start at rest with the integrator already holding the gravity load
    state = PidState()
    if gains.ki > 0:
        hold = _clamp(plant.gravity_load, gains.integral_limit)
        state = PidState(hold / gains.ki, None)
    x, v = 0.0, 0.0
    history = [0.0] * (delay + 1)       # ring of past positions, oldest first
    limit = DIVERGENCE_FACTOR * plant.stroke
    diverged = False
    for k in range(n):
        measured = history[0] + (rng.normal(0.0, plant.noise_sigma)
                                 if plant.noise_sigma > 0 else 0.0)
        u, state = pid_step(gains, state, ref[k] - measured, control_dt)
        pos[k], u_log[k], i_log[k] = x, u, gains.ki * state.integral
        for _ in range(sub):
            x, v = _plant_rk4(plant, x, v, u, plant_dt)
            history.append(x)
            del history[0]
        if not (abs(x) <= limit and math.isfinite(v)):
            diverged = True
            t, ref, pos, u_log, i_log = (a[:k + 1] for a in (t, ref, pos, u_log, i_log))
            break
    trace = MotorTrace(t, ref, pos, u_log, i_log, diverged)
    if not diverged and n:
        trace.accuracy = accuracy_percent(ref, pos)
    return trace


def motor_rngs(seed, count=3):
    """Independent, reproducible noise streams, one per motor."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def simulate_tracking(gains, plants, reference, seed=0, control_dt=0.01, plant_dt=1e-3):
    """Run every motor in turn; ``gains`` and ``plants`` are per-motor lists."""
    if len(gains) != len(plants):
        raise ValueError("need one gain set per plant")
    rngs = motor_rngs(seed, len(plants))
    motors = [simulate_motor(g, p, reference, rng, control_dt, plant_dt)
              for g, p, rng in zip(gains, plants, rngs)]
    published = PUBLISHED_STEP_ACCURACY if reference.kind == "step" else PUBLISHED_SINE_ACCURACY
    return TrackingResult(motors, reference, control_dt, plant_dt, seed, published)


# -- tuning ---------------------------------------------------------------------

DEFAULT_BOX = ((1e3, 1e5), (1e2, 1e5), (1e1, 1e4))
DEFAULT_INITIAL = PidGains(2e4, 2e4, 1e3)


@dataclass
class TuningResult:
    gains: PidGains
    accuracy: float
    evaluations: int
    history: list


def _score(gains, plant, references, seed, control_dt, plant_dt):
    """Worst accuracy over ``references``; None if any run diverges."""
    worst = None
    for ref in references:
        rng = motor_rngs(seed, 1)[0]
        acc = simulate_motor(gains, plant, ref, rng, control_dt, plant_dt).accuracy
        if acc is None:
            return None
        worst = acc if worst is None else min(worst, acc)
    return worst


def search_gains(plant, references, budget=40, initial=None, box=DEFAULT_BOX, seed=0,
                 control_dt=0.01, plant_dt=1e-3):
    """Log-space coordinate search maximising the worst-case accuracy.

    The box corners are scored first when the budget allows, so the result is
    never worse than any corner.  ``budget`` counts simulations of one gain
    set; ``budget=0`` returns ``initial`` untouched.
    """
    if isinstance(references, TrackingReference):
        references = [references]
    initial = initial or DEFAULT_INITIAL
    if budget <= 0:
        return TuningResult(initial, None, 0, [])
    lo = np.log10([b[0] for b in box])
    hi = np.log10([b[1] for b in box])
    template = initial

    def make(logk):
        kp, ki, kd = 10.0 ** np.asarray(logk)
        return replace(template, kp=float(kp), ki=float(ki), kd=float(kd))

    history = []

    def evaluate(logk):
        g = make(logk)
        acc = _score(g, plant, references, seed, control_dt, plant_dt)
        history.append((g.as_tuple(), acc))
        return acc

    def better(a, b):
        return a is not None and (b is None or a > b)

    start = np.clip(np.log10(np.maximum(initial.as_tuple(), 1e-300)), lo, hi)
    best_k, best = start, evaluate(start)
    corners = [np.where([(c >> j) & 1 for j in range(3)], hi, lo) for c in range(8)]
    if budget >= 1 + len(corners):
        for c in corners:
            acc = evaluate(c)
            if better(acc, best):
                best_k, best = c, acc

    step = 0.5
    while len(history) < budget and step >= 0.01:
        improved = False
        for j in range(3):
            for sign in (1.0, -1.0):
                if len(history) >= budget:
                    break
                trial = best_k.copy()
                trial[j] = np.clip(trial[j] + sign * step, lo[j], hi[j])
                if trial[j] == best_k[j]:
                    continue
                acc = evaluate(trial)
                if better(acc, best):
                    best_k, best, improved = trial, acc, True
                    break
        if not improved:
            step *= 0.5
    if best is None:
        raise TuningError("no gain set in the search box stabilised the plant")
    return TuningResult(make(best_k), best, len(history), history)


def tune_gains(plant, reference, budget=40, initial=None, box=DEFAULT_BOX, seed=0,
               control_dt=0.01, plant_dt=1e-3):
    """Gains from :func:`search_gains`; ``budget=0`` returns ``initial``."""
    result = search_gains(plant, reference, budget, initial, box, seed, control_dt, plant_dt)
    return result.gains
