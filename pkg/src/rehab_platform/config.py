"""Scenario configuration: JSON schema, loading and model construction."""

import json

import jsonschema

from .control import MotorPlant, PidGains, TrackingReference
from .dynamics import DynamicsModel
from .geometry import PlatformGeometry
from .posturography import CASES, FootLayout
from .simulation import IntegratorConfig, ReferenceTrajectory


class ConfigError(ValueError):
    """Configuration that fails validation; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_TENSOR = {"oneOf": [
    _NONNEG,
    {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3},
    {"type": "array", "minItems": 3, "maxItems": 3, "items": _VEC3},
]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


GEOMETRY_SCHEMA = _obj({
    "base_radius_m": _POS, "platform_radius_m": _POS,
    "mount_angle_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 90},
    "stroke_m": _POS, "min_length_m": _POS, "joint_limit_deg": _POS,
})

ACTUATOR_SCHEMA = _obj({"m1": _NONNEG, "c1": _NONNEG, "m2": _NONNEG, "c2": _NONNEG,
                        "I1": _TENSOR, "I2": _TENSOR})

DYNAMICS_SCHEMA = _obj({
    "platform": _obj({"mass_kg": _POS, "inertia": _TENSOR, "gravity": _POS}),
    "actuators": {"type": "array", "items": ACTUATOR_SCHEMA, "minItems": 1, "maxItems": 3},
    "variant": {"enum": ["corrected", "published"]},
})

_OFFSET = {"type": "array", "minItems": 3, "maxItems": 3,
           "items": {"type": ["number", "null"]}}

REFERENCE_SCHEMA = _obj({
    "kind": {"enum": ["step", "sine", "composite"]},
    "amplitude": _VEC3, "frequency": _VEC3, "offset": _OFFSET,
    "duration": _NONNEG, "sample_dt": _POS, "step_time": _NONNEG, "ramp": _POS,
    "step_amplitude": _VEC3,
})

SIMULATION_SCHEMA = _obj({"kp": _NONNEG, "kd": _NONNEG, "mismatch_factor": _POS})

GAINS_SCHEMA = _obj({"kp": _NONNEG, "ki": _NONNEG, "kd": _NONNEG,
                     "output_limit": _POS, "integral_limit": _POS}, ("kp", "ki", "kd"))

PLANT_SCHEMA = _obj({"mass": _POS, "viscous": _NONNEG, "coulomb": _NONNEG,
                     "gravity_load": _NUM, "noise_sigma": _NONNEG, "latency": _NONNEG,
                     "stroke": _POS})


def _one_or_three(schema):
    return {"oneOf": [schema, {"type": "array", "items": schema,
                               "minItems": 3, "maxItems": 3}]}


CONTROL_SCHEMA = _obj({
    "reference": {"enum": ["step", "sine"]},
    "amplitude_m": _NUM, "frequency_hz": _POS, "duration_s": _NONNEG, "step_time_s": _NONNEG,
    "gains": _one_or_three(GAINS_SCHEMA),
    "plant": _one_or_three(PLANT_SCHEMA),
    "control_dt": _POS, "plant_dt": _POS,
    "tune": _obj({"budget": {"type": "integer", "minimum": 0},
                  "box": {"type": "array", "minItems": 3, "maxItems": 3,
                          "items": {"type": "array", "items": _POS,
                                    "minItems": 2, "maxItems": 2}}}),
})

LAYOUT_SCHEMA = _obj({
    "foot_length": _POS, "foot_width": _POS, "half_stance": _NONNEG, "heel_y": _NUM,
    "zone_positions": {"type": "array", "items": _NONNEG, "minItems": 4, "maxItems": 4},
    "zone_area_fractions": {"type": "array", "items": _POS, "minItems": 4, "maxItems": 4},
    "rail_travel": {"type": "array", "items": _NONNEG, "minItems": 2, "maxItems": 2},
})

POSTURE_SCHEMA = _obj({
    "case": {"enum": list(CASES)},
    "duration_s": _NONNEG, "rate_hz": _POS, "total_load_N": _POS, "r_low_m": _POS,
    "layout": LAYOUT_SCHEMA,
    "reaction": _obj({"k": _POS, "baseline_s": _POS, "window_s": _POS,
                      "min_delta_N": _NONNEG,
                      "stimuli_s": {"type": "array", "items": _NONNEG}}),
})

SCENARIO_SCHEMA = _obj({
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "seed": {"type": "integer", "minimum": 0},
    "geometry": GEOMETRY_SCHEMA,
    "dynamics": DYNAMICS_SCHEMA,
    "reference": REFERENCE_SCHEMA,
    "dt": _POS,
    "duration": _NONNEG,
    "mode": {"enum": ["consistency", "mismatch"]},
    "simulation": SIMULATION_SCHEMA,
    "control": CONTROL_SCHEMA,
    "posture": POSTURE_SCHEMA,
    "outputs": _obj({"dir": {"type": "string"}}),
})


def _path(error):
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def validate(cfg, schema=SCENARIO_SCHEMA):
    """Raise :class:`ConfigError` naming the first offending field."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(err.message, _path(err))
    return cfg


def load(path, schema=SCENARIO_SCHEMA):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON ({exc.msg}, line {exc.lineno})") from None
    return validate(cfg, schema)


def _build(what, fn, *args):
    """Wrap constructor invariants as config errors carrying the block name."""
    try:
        return fn(*args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), what) from None


def geometry_from(cfg):
    return _build("geometry", PlatformGeometry.from_dict, cfg.get("geometry", {}))


def model_from(cfg):
    geom = geometry_from(cfg)
    return _build("dynamics", DynamicsModel.from_dict, cfg.get("dynamics", {}), geom)


def reference_from(cfg):
    ref = dict(cfg.get("reference", {}))
    if "duration" in cfg:
        ref["duration"] = cfg["duration"]
    return _build("reference", ReferenceTrajectory.from_dict, ref)


def integrator_from(cfg):
    sim = cfg.get("simulation", {})
    kw = {k: sim[k] for k in ("kp", "kd", "mismatch_factor") if k in sim}
    if "dt" in cfg:
        kw["dt"] = cfg["dt"]
    if "mode" in cfg:
        kw["mode"] = cfg["mode"]
    return _build("simulation", lambda: IntegratorConfig(**kw))


def _three(value, factory, what):
    if value is None:
        return None
    items = value if isinstance(value, list) else [value] * 3
    return [_build(what, factory, item) for item in items]


def control_from(cfg):
    """(reference, gains list or None, plants list, control_dt, plant_dt, tune block)."""
    ctl = cfg.get("control", {})
    kind = ctl.get("reference", "step")
    base = TrackingReference.default(kind)
    ref = _build("control", lambda: TrackingReference(
        kind, ctl.get("amplitude_m", base.amplitude), ctl.get("frequency_hz", base.frequency),
        ctl.get("duration_s", base.duration), ctl.get("step_time_s", base.step_time)))
    gains = _three(ctl.get("gains"), PidGains.from_dict, "control.gains")
    plants = _three(ctl.get("plant", {}), MotorPlant.from_dict, "control.plant")
    return ref, gains, plants, ctl.get("control_dt", 0.01), ctl.get("plant_dt", 1e-3), \
        ctl.get("tune", {})


def layout_from(cfg):
    post = cfg.get("posture", {})
    return _build("posture.layout", FootLayout.from_dict, post.get("layout", {}))

