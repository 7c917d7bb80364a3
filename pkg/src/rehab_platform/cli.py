"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 workspace or
domain error, 3 numerical failure.
"""

import argparse
import concurrent.futures
import json
import math
import os
import re
import sys

import numpy as np

from . import config as cfgmod
from .control import (
    DEFAULT_INITIAL,
    PidGains,
    TrackingReference,
    TuningError,
    search_gains,
    simulate_tracking,
)
from .errors import ConvergenceError, PlatformError, SingularityError, WorkspaceError
from .geometry import (
    Pose,
    forward_kinematics,
    inverse_kinematics,
    resolve_constraints,
    workspace_check,
)
from .posturography import (
    CASES,
    EVENT_COLUMNS,
    LoadCellStream,
    center_of_mass,
    detect_reaction,
    events_table,
    heel_share,
    pressure_ratios,
    region_ordering,
    synthesize_loads,
)
from .simulation import (
    METRIC_DEFINITION,
    SimulationAborted,
    rms_report,
    run_closed_loop,
    write_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3

_ANGLE_UNITS = {"deg": math.pi / 180.0, "rad": 1.0}
_LENGTH_UNITS = {"m": 1.0, "cm": 0.01, "mm": 0.001}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-z]*)\s*$")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _quantity(text, units, default, what):
    m = _QUANTITY.match(text)
    if not m or (m.group(2) and m.group(2) not in units):
        raise argparse.ArgumentTypeError(
            f"invalid {what} {text!r} (units: {', '.join(units)})")
    return float(m.group(1)) * units[m.group(2) or default]


def angle(text):
    """Angle in radians; a bare number is read as degrees."""
    return _quantity(text, _ANGLE_UNITS, "deg", "angle")


def length(text):
    """Length in metres; a bare number is read as metres."""
    return _quantity(text, _LENGTH_UNITS, "m", "length")


def length_list(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated lengths")
    return [length(p) for p in parts]


def gains_triplet(text):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid gains {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError("expected kp,ki,kd")
    return values


def time_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid time list {text!r}") from None


# -- output helpers -------------------------------------------------------------

def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _out_dir(args, cfg):
    path = args.out_dir or cfg.get("outputs", {}).get("dir") or "."
    os.makedirs(path, exist_ok=True)
    return path


def _seed(args, cfg):
    if args.seed is not None:
        return args.seed
    return cfg.get("seed", 0)


def _print_pose(pose):
    # adding 0.0 turns -0.0 into 0.0
    print(f"alpha={pose.alpha + 0.0:.12g} rad beta={pose.beta + 0.0:.12g} rad "
          f"gamma={pose.gamma + 0.0:.12g} rad")
    print(f"x={pose.x + 0.0:.12g} m y={pose.y + 0.0:.12g} m z={pose.z + 0.0:.12g} m")


def _pose_dict(pose):
    return {"x_m": pose.x, "y_m": pose.y, "z_m": pose.z,
            "alpha_rad": pose.alpha, "beta_rad": pose.beta, "gamma_rad": pose.gamma,
            "alpha_deg": math.degrees(pose.alpha), "beta_deg": math.degrees(pose.beta),
            "gamma_deg": math.degrees(pose.gamma)}


# -- ik / fk ----------------------------------------------------------------------

def cmd_ik(args, cfg):
    geom = cfgmod.geometry_from(cfg)
    pose = resolve_constraints(args.alpha, args.beta, args.z, geom)
    lengths = inverse_kinematics(pose, geom)
    report = workspace_check(pose, geom)
    result = {"pose": _pose_dict(pose), "lengths_m": lengths.tolist(),
              "workspace_ok": report.ok, "joint_angles_deg": report.joint_angles_deg,
              "stroke_usage": report.stroke_usage}
    if args.json:
        _dump_json(result)
    else:
        _print_pose(pose)
        print("L1={:.12g} m L2={:.12g} m L3={:.12g} m".format(*(lengths + 0.0)))
    return EXIT_OK


def cmd_fk(args, cfg):
    geom = cfgmod.geometry_from(cfg)
    guess = None
    if args.guess_alpha is not None or args.guess_beta is not None or args.guess_z is not None:
        home = geom.home_pose()
        guess = Pose(0.0, 0.0, args.guess_z if args.guess_z is not None else home.z,
                     args.guess_alpha or 0.0, args.guess_beta or 0.0, 0.0)
    pose = forward_kinematics(args.lengths, geom, initial_guess=guess)
    residual = float(np.max(np.abs(inverse_kinematics(pose, geom, check=False)
                                   - np.asarray(args.lengths))))
    report = workspace_check(pose, geom)
    if args.json:
        _dump_json({"pose": _pose_dict(pose), "residual_m": residual,
                    "workspace_ok": report.ok, "violations": report.violations})
    else:
        _print_pose(pose)
        print(f"residual={residual:.3e} m")
    for v in report.violations:
        print(f"workspace violation: {v}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_DOMAIN


# -- simulate ---------------------------------------------------------------------

def _scenario_name(path, cfg, index):
    if "name" in cfg:
        return cfg["name"]
    if path:
        return os.path.splitext(os.path.basename(path))[0]
    return f"scenario{index}" if index else "scenario"


def _run_scenario(job):
    """Worker for one scenario; returns (name, exit code, message)."""
    name, cfg, out_dir, overrides = job
    cfg = dict(cfg)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        model = cfgmod.model_from(cfg)
        spec = cfgmod.reference_from(cfg)
        integ = cfgmod.integrator_from(cfg)
    except cfgmod.ConfigError as exc:
        return name, EXIT_USAGE, f"config error: {exc}"
    csv_path = os.path.join(out_dir, f"{name}.csv")
    summary_path = os.path.join(out_dir, f"{name}_summary.json")
    summary = {"scenario": name, "mode": integ.mode, "dt_s": integ.dt,
               "reference_kind": spec.kind, "metric_definition": METRIC_DEFINITION}
    try:
        trace = run_closed_loop(spec, model=model, config=integ)
        code, message = EXIT_OK, "ok"
    except SimulationAborted as exc:
        trace = exc.trace
        numeric = not isinstance(exc.cause, WorkspaceError)
        code, message = (EXIT_NUMERIC if numeric else EXIT_DOMAIN), str(exc)
        summary["aborted"] = message
    except WorkspaceError as exc:
        return name, EXIT_DOMAIN, f"workspace error: {exc}"
    trace.to_csv(csv_path)
    summary.update(rms_report(trace))
    _dump_json(summary, summary_path)
    return name, code, message


def cmd_simulate(args, cfg):
    paths = args.scenarios or []
    if paths:
        cfgs = [(p, cfgmod.load(p)) for p in paths]
    else:
        cfgs = [(args.config, cfg)]
    out_dir = _out_dir(args, cfg)
    overrides = {"mode": args.mode, "dt": args.dt, "duration": args.duration}
    jobs = [(_scenario_name(p, c, i if len(cfgs) > 1 else 0), c, out_dir, overrides)
            for i, (p, c) in enumerate(cfgs)]
    if args.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_scenario, jobs))
    else:
        results = [_run_scenario(j) for j in jobs]
    code = EXIT_OK
    for name, rc, message in results:
        stream = sys.stdout if rc == EXIT_OK else sys.stderr
        print(f"{name}: {message}", file=stream)
        code = max(code, rc)
    return code


# -- control ----------------------------------------------------------------------

def _plants_from_file(path):
    data = cfgmod.load(path, cfgmod._one_or_three(cfgmod.PLANT_SCHEMA))
    return cfgmod.control_from({"control": {"plant": data}})[2]


def _control_setup(args, cfg):
    ref, gains, plants, control_dt, plant_dt, tune = cfgmod.control_from(cfg)
    if args.ref in ("step", "sine"):
        ctl = dict(cfg.get("control", {}))
        ctl["reference"] = args.ref
        ref = cfgmod.control_from({"control": {k: v for k, v in ctl.items()
                                               if k not in ("gains", "plant")}})[0]
    if args.duration is not None:
        ref = TrackingReference(ref.kind, ref.amplitude, ref.frequency, args.duration,
                                ref.step_time)
    if args.plant:
        plants = _plants_from_file(args.plant)
    return ref, gains, plants, control_dt, plant_dt, tune


def _tracking_summary(result, gains):
    return {
        "reference": {"kind": result.reference.kind, "amplitude_m": result.reference.amplitude,
                      "frequency_hz": result.reference.frequency,
                      "duration_s": result.reference.duration},
        "gains": [{"kp": g.kp, "ki": g.ki, "kd": g.kd, "output_limit": g.output_limit,
                   "integral_limit": g.integral_limit} for g in gains],
        "accuracy_pct": result.accuracies,
        "diverged": [m.diverged for m in result.motors],
        "published_accuracy_pct_annotation": list(result.published_accuracy),
        "metric_definition": METRIC_DEFINITION + " (on displacement from the start)",
        "control_dt_s": result.control_dt, "plant_dt_s": result.plant_dt,
        "seed": result.seed,
    }


def cmd_control_sim(args, cfg):
    ref, gains, plants, control_dt, plant_dt, _ = _control_setup(args, cfg)
    if args.gains:
        gains = [PidGains(*args.gains)] * 3
    gains = gains or [DEFAULT_INITIAL] * 3
    seed = _seed(args, cfg)
    result = simulate_tracking(gains, plants, ref, seed, control_dt, plant_dt)
    out_dir = _out_dir(args, cfg)
    write_csv(os.path.join(out_dir, f"control_{ref.kind}.csv"), result.columns(), result.table())
    summary = _tracking_summary(result, gains)
    _dump_json(summary, os.path.join(out_dir, f"control_{ref.kind}_summary.json"))
    for i, (acc, m) in enumerate(zip(result.accuracies, result.motors), 1):
        state = "diverged" if m.diverged else f"accuracy {acc:.3f} %"
        print(f"motor {i}: {state}")
    return EXIT_NUMERIC if any(m.diverged for m in result.motors) else EXIT_OK


def cmd_control_tune(args, cfg):
    ref, gains, plants, control_dt, plant_dt, tune = _control_setup(args, cfg)
    kinds = ["step", "sine"] if args.ref in (None, "both") else [args.ref]
    refs = [TrackingReference.default(k) if k != ref.kind else ref for k in kinds]
    budget = args.budget if args.budget is not None else tune.get("budget", 40)
    box = tuple(tuple(b) for b in tune["box"]) if "box" in tune else None
    kw = {"box": box} if box else {}
    seed = _seed(args, cfg)
    initial = gains[0] if gains else None
    result = search_gains(plants[0], refs, budget, initial, seed=seed,
                          control_dt=control_dt, plant_dt=plant_dt, **kw)
    g = result.gains
    summary = {"gains": {"kp": g.kp, "ki": g.ki, "kd": g.kd},
               "worst_accuracy_pct": result.accuracy, "evaluations": result.evaluations,
               "references": kinds, "seed": seed, "metric_definition": METRIC_DEFINITION}
    out_dir = _out_dir(args, cfg)
    _dump_json(summary, os.path.join(out_dir, "control_tune_summary.json"))
    print(f"kp={g.kp:.6g} ki={g.ki:.6g} kd={g.kd:.6g} worst accuracy "
          f"{result.accuracy if result.accuracy is None else round(result.accuracy, 3)} %")
    return EXIT_OK


# -- posture ----------------------------------------------------------------------

def cmd_posture_synth(args, cfg):
    post = cfg.get("posture", {})
    layout = cfgmod.layout_from(cfg)
    case = args.case or post.get("case", "static-1")
    duration = args.duration if args.duration is not None else post.get("duration_s", 10.0)
    kw = {}
    if "total_load_N" in post:
        kw["total_load"] = post["total_load_N"]
    stream = synthesize_loads(case, duration, post.get("rate_hz", 100.0), _seed(args, cfg),
                              layout=layout, r_low=post.get("r_low_m", 0.25), **kw)
    out = args.out or os.path.join(_out_dir(args, cfg), f"frames_{case}.csv")
    stream.to_csv(out)
    print(f"wrote {len(stream)} frames to {out}")
    return EXIT_OK


def cmd_posture_analyze(args, cfg):
    post = cfg.get("posture", {})
    if args.layout:
        layout_cfg = cfgmod.load(args.layout, cfgmod.LAYOUT_SCHEMA)
        layout = cfgmod.layout_from({"posture": {"layout": layout_cfg}})
    else:
        layout = cfgmod.layout_from(cfg)
    try:
        stream = LoadCellStream.from_csv(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = {"frames": len(stream), "metric_definition": "zone pressure = force / area"}
    if len(stream):
        mean = stream.mean_frame()
        com = center_of_mass(mean.lower, post.get("r_low_m", 0.25))
        summary.update({
            "region_mean_N": mean.upper,
            "region_ordering": region_ordering(mean.upper),
            "heel_share": heel_share(mean.upper) if mean.upper.sum() > 0 else None,
            "pressure_N_per_cm2": pressure_ratios(mean, layout),
            "center_of_mass_m": None if com is None else com,
            "saturated_frames": int(sum(bool(stream.frame(k).saturated_upper
                                             or stream.frame(k).saturated_lower)
                                        for k in range(len(stream)))),
        })
    react = post.get("reaction", {})
    stimuli = args.stimuli if args.stimuli is not None else react.get("stimuli_s")
    out_dir = _out_dir(args, cfg)
    if stimuli:
        signals = np.column_stack([stream.upper, stream.lower])
        events = detect_reaction(stream.t, signals, stimuli, react.get("k", 5.0),
                                 react.get("baseline_s", 0.5), react.get("window_s", 2.0),
                                 react.get("min_delta_N", 0.5))
        write_csv(os.path.join(out_dir, "events.csv"), EVENT_COLUMNS, events_table(events))
        summary["events"] = [{"stimulus_t": e.stimulus_time, "response_t": e.response_time,
                              "latency_s": e.latency, "channel": e.channel} for e in events]
    _dump_json(summary, os.path.join(out_dir, "posture_summary.json"))
    if len(stream):
        print("region ordering (most loaded first):",
              " ".join(map(str, summary["region_ordering"])))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="rehab-platform",
                description="Balance-platform kinematics, dynamics, control and posturography.")
    p.add_argument("--config", help="scenario JSON file")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--out-dir", help="directory for CSV and summary files")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenarios (simulate)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ik = sub.add_parser("ik", help="leg lengths for (alpha, beta, z)")
    ik.add_argument("--alpha", type=angle, default=0.0, help="tilt azimuth (deg default)")
    ik.add_argument("--beta", type=angle, default=0.0, help="tilt (deg default)")
    ik.add_argument("--z", type=length, required=True, help="height (m default; cm, mm)")
    ik.add_argument("--json", action="store_true")
    ik.set_defaults(func=cmd_ik)

    fk = sub.add_parser("fk", help="pose from three leg lengths")
    fk.add_argument("--lengths", type=length_list, required=True, help="L1,L2,L3")
    fk.add_argument("--guess-alpha", type=angle)
    fk.add_argument("--guess-beta", type=angle)
    fk.add_argument("--guess-z", type=length)
    fk.add_argument("--json", action="store_true")
    fk.set_defaults(func=cmd_fk)

    sim = sub.add_parser("simulate", help="closed-loop dynamics simulation")
    sim.add_argument("scenarios", nargs="*", help="scenario JSON files (default: --config)")
    sim.add_argument("--mode", choices=["consistency", "mismatch"])
    sim.add_argument("--dt", type=float)
    sim.add_argument("--duration", type=float)
    sim.set_defaults(func=cmd_simulate)

    ctl = sub.add_parser("control", help="per-motor PID tracking")
    csub = ctl.add_subparsers(dest="control_command", required=True, parser_class=_Parser)
    cs = csub.add_parser("sim", help="simulate step or sine tracking")
    cs.add_argument("--ref", choices=["step", "sine"])
    cs.add_argument("--gains", type=gains_triplet, help="kp,ki,kd")
    cs.add_argument("--plant", help="plant JSON (one object or a list of three)")
    cs.add_argument("--duration", type=float)
    cs.set_defaults(func=cmd_control_sim)
    ct = csub.add_parser("tune", help="coordinate search for PID gains")
    ct.add_argument("--ref", choices=["step", "sine", "both"])
    ct.add_argument("--budget", type=int)
    ct.add_argument("--plant")
    ct.add_argument("--duration", type=float)
    ct.set_defaults(func=cmd_control_tune)

    post = sub.add_parser("posture", help="load-cell synthesis and analysis")
    psub = post.add_subparsers(dest="posture_command", required=True, parser_class=_Parser)
    ps = psub.add_parser("synth", help="write a synthetic load-cell stream")
    ps.add_argument("--case", choices=CASES)
    ps.add_argument("--duration", type=float)
    ps.add_argument("--out")
    ps.set_defaults(func=cmd_posture_synth)
    pa = psub.add_parser("analyze", help="summarise a load-cell CSV")
    pa.add_argument("--in", dest="input", required=True)
    pa.add_argument("--layout")
    pa.add_argument("--stimuli", type=time_list, help="stimulus times in seconds")
    pa.set_defaults(func=cmd_posture_analyze)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            parser.error("--jobs must be at least 1")
    except SystemExit as exc:
        # argparse exits on --help and on usage errors; report the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = cfgmod.load(args.config) if args.config else {}
        return args.func(args, cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WorkspaceError as exc:
        print(f"workspace error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConvergenceError, SingularityError, SimulationAborted, TuningError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PlatformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
