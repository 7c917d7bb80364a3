"""Load-cell data model and posturography analytics.

Upper platform: eight cells, regions 1-4 under the left foot and 5-8 under
the right foot, ordered toes, metatarsals, midfoot, heel.  Lower platform:
three cells (9, 10, 11) at 90, 210 and 330 degrees on a circle of radius
``r_low``.  Platform axes: +x to the right, +y anterior.
"""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import PlatformError

G = 9.8
UPPER_CAPACITY_N = 10.0 * G
LOWER_CAPACITY_N = 40.0 * G
ZONES = ("toes", "metatarsals", "middle", "heel")
SIDES = ("left", "right")
LOWER_ANGLES_DEG = (90.0, 210.0, 330.0)

# Average footpad pressure [N/cm^2] by zone (toes, metatarsals, middle, heel).
TABLE1_PRESSURE = {
    "right": (3.54, 28.24, 0.97, 12.42),
    "left": (3.16, 23.85, 1.19, 12.51),
}

# Anthropometric averages: height [cm], weight [kg], foot length/width [cm].
ANTHROPOMETRICS = {
    "women": {"height_cm": 162.94, "weight_kg": 67.12,
              "foot_length_cm": 23.62, "foot_width_cm": 9.17},
    "men": {"height_cm": 175.58, "weight_kg": 74.74,
            "foot_length_cm": 26.15, "foot_width_cm": 10.28},
}

# Static load-cell evaluation, mean and sd per region 1..8 for cases 1..3.
# Region 5 / case 2 is printed malformed; it is read as 74.4 +- 0.489.
TABLE3_MEAN = np.array([
    [49.02, 43.51, 10.67, 130.82, 46.79, 44.08, 9.56, 133.79],
    [81.52, 83.18, 10.54, 64.07, 74.40, 72.17, 4.02, 65.57],
    [19.97, 28.53, 10.39, 163.76, 26.84, 19.68, 3.82, 159.35],
])
TABLE3_SD = np.array([
    [0.086, 0.066, 0.058, 0.102, 0.533, 0.124, 0.489, 0.241],
    [0.872, 1.872, 0.195, 1.028, 0.489, 0.563, 0.095, 0.172],
    [0.062, 0.186, 0.051, 0.041, 0.443, 0.426, 0.223, 0.858],
])

HEEL_SHARE = 0.5
DEFAULT_TEST_LOAD_N = 20.0 * G
STATIC_CASES = ("static-1", "static-2", "static-3")
DYNAMIC_CASES = ("dynamic-plantar", "dynamic-dorsi", "dynamic-inver", "dynamic-ever")
CASES = STATIC_CASES + DYNAMIC_CASES


class UndefinedCopError(PlatformError, ZeroDivisionError):
    """Vertical force too small for a centre of pressure."""


# -- frames -------------------------------------------------------------------

@dataclass(frozen=True)
class LoadCellFrame:
    t: float
    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        upper = np.asarray(self.upper, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        if upper.shape != (8,) or lower.shape != (3,):
            raise ValueError("a frame holds 8 upper and 3 lower cell forces")
        if np.any(upper < 0) or np.any(lower < 0):
            raise ValueError("load-cell forces must be non-negative")
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)

    @property
    def saturated_upper(self):
        """1-based region numbers at or beyond the upper cell capacity."""
        return [int(i) + 1 for i in np.flatnonzero(self.upper >= UPPER_CAPACITY_N)]

    @property
    def saturated_lower(self):
        return [int(i) + 9 for i in np.flatnonzero(self.lower >= LOWER_CAPACITY_N)]


@dataclass
class LoadCellStream:
    """Frames stored column-wise: ``t`` (n,), ``upper`` (n, 8), ``lower`` (n, 3)."""

    t: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def frame(self, k):
        return LoadCellFrame(float(self.t[k]), self.upper[k], self.lower[k])

    def mean_frame(self):
        return LoadCellFrame(float(np.mean(self.t)), self.upper.mean(axis=0),
                             self.lower.mean(axis=0))

    @staticmethod
    def columns():
        return (["t[s]"] + [f"u{i}[N]" for i in range(1, 9)]
                + [f"l{i}[N]" for i in range(9, 12)])

    def to_csv(self, path):
        from .simulation import write_csv
        write_csv(path, self.columns(), np.column_stack([self.t, self.upper, self.lower]))

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file")
        names = [c.split("[")[0].strip() for c in rows[0]]
        expected = [c.split("[")[0] for c in cls.columns()]
        if names != expected:
            raise ValueError(f"{path}: expected columns {expected}, got {names}")
        data = np.array(rows[1:], dtype=float).reshape(-1, 12)
        if np.any(data[:, 1:] < 0):
            raise ValueError(f"{path}: negative load-cell force")
        return cls(data[:, 0], data[:, 1:9], data[:, 9:12])


# -- layout -------------------------------------------------------------------

@dataclass(frozen=True)
class FootLayout:
    """Cell positions and zone contact areas for one foot size.

    Zone centres lie along the foot axis at fixed fractions of the foot
    length measured from the heel cell; the heel cell is fixed and the other
    cells slide on rails.  Platform coordinates put the left heel at
    ``(-half_stance, heel_y)`` and the right heel at ``(+half_stance, heel_y)``.
    """

    foot_length: float = 0.2615         # m
    foot_width: float = 0.1028          # m
    half_stance: float = 0.08           # m
    heel_y: float = -0.10               # m
    zone_positions: tuple = (0.80, 0.62, 0.38, 0.0)     # fraction of foot length
    zone_area_fractions: tuple = (0.15, 0.25, 0.18, 0.20)   # of length x width
    rail_travel: tuple = (0.10, 0.25)   # m, allowed heel-to-toe-cell offset

    def __post_init__(self):
        if not (self.foot_length > 0 and self.foot_width > 0):
            raise ValueError("foot dimensions must be positive")
        if len(self.zone_positions) != 4 or len(self.zone_area_fractions) != 4:
            raise ValueError("four zones are required")
        if self.zone_positions[3] != 0.0:
            raise ValueError("the heel cell is the fixed origin of the rail system")
        if min(self.zone_area_fractions) <= 0:
            raise ValueError("zone areas must be positive")
        offsets = np.array(self.zone_positions[:3]) * self.foot_length
        lo, hi = self.rail_travel
        if offsets.max() > hi + 1e-12 or offsets.min() < 0:
            raise ValueError(f"rail offsets {offsets.round(4).tolist()} m exceed the "
                             f"rail travel [0, {hi}] m")
        if offsets[0] < lo - 1e-12:
            raise ValueError(f"toe offset {offsets[0]:.4f} m shorter than rail minimum {lo} m")

    @classmethod
    def from_anthropometrics(cls, group="men", **kw):
        a = ANTHROPOMETRICS[group]
        return cls(a["foot_length_cm"] / 100.0, a["foot_width_cm"] / 100.0, **kw)

    @classmethod
    def from_dict(cls, cfg):
        kw = dict(cfg)
        for key in ("zone_positions", "zone_area_fractions", "rail_travel"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    def rail_offsets(self):
        """Heel-to-cell distances along the foot axis [m], toes first."""
        return np.array(self.zone_positions) * self.foot_length

    def zone_areas_cm2(self):
        return (np.array(self.zone_area_fractions)
                * self.foot_length * self.foot_width * 1e4)

    def cell_positions(self):
        """(8, 2) platform x, y of regions 1..8."""
        pos = np.zeros((8, 2))
        ys = self.heel_y + self.rail_offsets()
        pos[:4, 0], pos[:4, 1] = -self.half_stance, ys
        pos[4:, 0], pos[4:, 1] = self.half_stance, ys
        return pos


def lower_cell_positions(r_low=0.25):
    ang = np.radians(LOWER_ANGLES_DEG)
    return r_low * np.column_stack([np.cos(ang), np.sin(ang)])


# -- analytics ----------------------------------------------------------------

def center_of_mass(lower, r_low=0.25, min_total=1e-6):
    """Force-weighted centroid of the three lower cells; None when unloaded."""
    w = np.asarray(lower, dtype=float)
    total = float(w.sum())
    if not total > min_total:
        return None
    return w @ lower_cell_positions(r_low) / total


def center_of_pressure(m_x, f_y, f_z, h=0.03, min_fz=1e-9):
    """``(M_x - h F_y) / F_z`` with ``h`` the base height above ground."""
    if abs(f_z) <= min_fz:
        raise UndefinedCopError(f"vertical force {f_z:g} N too small for a centre of pressure")
    return (m_x - h * f_y) / f_z


def upper_force_centroid(upper, layout):
    """Force-weighted centroid of the eight upper cells; None when unloaded."""
    w = np.asarray(upper, dtype=float)
    total = float(w.sum())
    if not total > 0:
        return None
    return w @ layout.cell_positions() / total


def pressure_ratios(frame, layout):
    """Zone pressures [N/cm^2] per foot plus foot totals and saturation flags."""
    areas = layout.zone_areas_cm2()
    upper = np.asarray(frame.upper, dtype=float)
    out = {}
    for s, side in enumerate(SIDES):
        forces = upper[4 * s:4 * s + 4]
        out[side] = dict(zip(ZONES, (forces / areas).tolist()))
    out["totals_N"] = {"left": float(upper[:4].sum()), "right": float(upper[4:].sum())}
    out["saturated"] = [int(i) + 1 for i in np.flatnonzero(upper >= UPPER_CAPACITY_N)]
    return out


def heel_share(upper):
    upper = np.asarray(upper, dtype=float)
    return float((upper[3] + upper[7]) / upper.sum())


def region_ordering(upper):
    """Region numbers sorted by decreasing load."""
    upper = np.asarray(upper, dtype=float)
    return [int(i) + 1 for i in np.argsort(-upper, kind="stable")]


def table1_frame(layout, t=0.0):
    """Frame whose zone pressures equal the tabulated footpad averages."""
    areas = layout.zone_areas_cm2()
    upper = np.concatenate([np.array(TABLE1_PRESSURE[s]) * areas for s in SIDES])
    return LoadCellFrame(t, upper, np.zeros(3))


# -- synthesis ----------------------------------------------------------------

def case_profile(case):
    """Region load fractions (sum 1) and per-region relative noise for a static case.

    Case 1 is rescaled so the heels carry exactly half of the load; the zone
    order inside each group is unchanged.
    """
    idx = STATIC_CASES.index(case)
    mean = TABLE3_MEAN[idx]
    frac = mean / mean.sum()
    if idx == 0:
        heel = np.zeros(8, dtype=bool)
        heel[[3, 7]] = True
        frac = np.where(heel, frac * HEEL_SHARE / frac[heel].sum(),
                        frac * (1.0 - HEEL_SHARE) / frac[~heel].sum())
    rel_sd = TABLE3_SD[idx] / mean
    return frac, rel_sd


def _side_shift(frac, right_share):
    out = frac.copy()
    out[:4] *= (1.0 - right_share) / frac[:4].sum()
    out[4:] *= right_share / frac[4:].sum()
    return out


def dynamic_target(case):
    """Distribution reached at the extreme of an ankle motion."""
    base, _ = case_profile("static-1")
    if case == "dynamic-plantar":
        return case_profile("static-2")[0]
    if case == "dynamic-dorsi":
        return case_profile("static-3")[0]
    if case == "dynamic-inver":
        return _side_shift(base, 0.7)
    if case == "dynamic-ever":
        return _side_shift(base, 0.3)
    raise ValueError(f"unknown dynamic case {case!r}")


def barycentric_lower(point, r_low=0.25):
    """Weights of the three lower cells whose centroid is ``point``."""
    v = lower_cell_positions(r_low)
    a = np.vstack([v.T, np.ones(3)])
    w = np.linalg.solve(a, np.array([point[0], point[1], 1.0]))
    if np.any(w < -1e-12):
        raise ValueError(f"point {np.round(point, 4).tolist()} lies outside the lower triangle")
    return np.clip(w, 0.0, None)


def synthesize_loads(case, duration=10.0, rate=100.0, seed=0, total_load=DEFAULT_TEST_LOAD_N,
                     layout=None, r_low=0.25):
    """Deterministic load-cell stream for a static or dynamic test case.

    Static cases hold the tabulated distribution with Gaussian noise whose
    relative size follows the tabulated spread.  Dynamic cases blend from
    the case-1 distribution towards the motion's target and back with a
    raised cosine over ``duration``.  Lower cells carry the same total,
    split so that their centroid matches the upper force centroid.
    """
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}")
    layout = layout or FootLayout()
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    base, rel_sd = case_profile("static-1" if case in DYNAMIC_CASES else case)
    if case in DYNAMIC_CASES:
        target = dynamic_target(case)
        s = 0.5 * (1.0 - np.cos(2.0 * math.pi * t / duration)) if duration > 0 else t
        frac = base + s[:, None] * (target - base)
    else:
        frac = np.broadcast_to(base, (n, 8))
    clean = total_load * frac
    upper = np.clip(clean * (1.0 + rel_sd * rng.standard_normal((n, 8))), 0.0, None)
    positions = layout.cell_positions()
    lower = np.zeros((n, 3))
    for k in range(n):
        total = upper[k].sum()
        lower[k] = total * barycentric_lower(upper[k] @ positions / total, r_low)
    meta = {"case": case, "seed": seed, "rate_hz": rate, "total_load_N": total_load}
    return LoadCellStream(t, upper, lower, meta)


# -- reaction time ------------------------------------------------------------

@dataclass(frozen=True)
class ReactionEvent:
    stimulus_time: float
    response_time: float = None
    latency: float = None
    channel: int = None

    @property
    def responded(self):
        return self.response_time is not None


def detect_reaction(t, signals, stimuli, k=5.0, baseline=0.5, window=2.0, min_delta=0.5):
    """First threshold crossing after each stimulus.

    The threshold per channel is ``max(k * sd, min_delta)`` around the
    channel's mean over ``baseline`` seconds before the stimulus.  Samples in
    ``[stimulus, stimulus + window]`` are scanned; ``channel`` is 0-based.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(signals, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    events = []
    for stim in stimuli:
        base = (t >= stim - baseline) & (t < stim)
        if not base.any():
            raise ValueError(f"no baseline samples before stimulus at {stim:g} s")
        mu = x[base].mean(axis=0)
        thr = np.maximum(k * x[base].std(axis=0), min_delta)
        resp = np.flatnonzero((t >= stim) & (t <= stim + window))
        hits = np.abs(x[resp] - mu) > thr
        rows = np.flatnonzero(hits.any(axis=1))
        if rows.size == 0:
            events.append(ReactionEvent(float(stim)))
            continue
        j = resp[rows[0]]
        channel = int(np.flatnonzero(hits[rows[0]])[0])
        events.append(ReactionEvent(float(stim), float(t[j]), float(t[j] - stim), channel))
    return events


def events_table(events):
    """Rows for the events CSV; missing responses are written as NaN."""
    nan = float("nan")
    return np.array([[e.stimulus_time,
                      nan if e.response_time is None else e.response_time,
                      nan if e.latency is None else e.latency,
                      nan if e.channel is None else e.channel] for e in events]).reshape(-1, 4)


EVENT_COLUMNS = ["stimulus_t[s]", "response_t[s]", "latency_s[s]", "channel[-]"]
