"""Umbrella command line: plan, simulate, track, metrics, calibrate, sweep.

Every run writes its outputs plus a manifest with all resolved parameters so
the run can be reproduced bit-for-bit (`lanechange rerun --manifest ...`).
Exit codes: 0 success, 2 validation error, 3 infeasible plan, 4 controller
fault.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationConfig, genetic_calibrate, write_calibration_json
from .carfollow import CollisionStateError
from .planner import (
    NoFeasiblePlanError,
    optimize,
    sweep_omega,
    write_grid_csv,
    write_sweep_csv,
)
from .scenario_io import ScenarioFileError, load_scenario
from .simulation import (
    AV_ID,
    EdieRegion,
    build_context,
    edie_metrics,
    export_heatmap_data,
    run_scenario,
    ttt_difference,
    write_heatmap_csv,
    write_log_csv,
)
from .tracker import ControllerFaultError, KinematicState, track
from .trajdata import extract_cf_pairs, load_trajectory_csv
from .trajectory import build_symmetric_trajectory

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_CONTROLLER = 4

OUT_DIR_ENV = "LANECHANGE_OUT"


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, payload: dict) -> None:
    payload = {"command": command, "version": __version__, **payload}
    with open(out / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _scenario_payload(path: str) -> dict:
    with open(path) as fh:
        import yaml

        return yaml.safe_load(fh)


def _trajectory_from_plan(plan_doc: dict):
    return build_symmetric_trajectory(
        plan_doc["v_start_mps"], plan_doc["duration_s"], plan_doc["x_final_m"],
        plan_doc["lane_width_m"], plan_doc["step_s"])


def cmd_plan(args) -> int:
    out = _out_dir(args)
    bundle = load_scenario(args.scenario)
    sc = bundle.scenario
    if args.omega_av is not None:
        sc = replace(sc, weights=replace(sc.weights, omega_av=args.omega_av))
    ctx = build_context(sc)
    plan = optimize(sc, sc.weights, bundle.planner, ctx)
    doc = {
        "duration_s": plan.best.duration,
        "x_final_m": plan.best.x_final,
        "v_start_mps": sc.av_start_speed,
        "lane_width_m": sc.lane_width,
        "step_s": sc.step,
        "refined": plan.refined,
        "losses": plan.breakdown.as_dict(),
        "scenario_file": str(args.scenario),
    }
    with open(out / "plan.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    write_grid_csv(plan.grid, sc.weights, ctx, out / "grid.csv")
    with open(out / "hv_prediction.csv", "w", newline="") as fh:
        import csv as _csv

        w = _csv.writer(fh)
        w.writerow(["t_s", "vehicle_id", "x_m", "v_mps", "a_mps2"])
        pred = plan.hv_prediction
        for i, t in enumerate(pred["t"]):
            for j, vid in enumerate(pred["ids"]):
                w.writerow([f"{t:.9g}", vid, f"{pred['x'][i, j]:.9g}",
                            f"{pred['v'][i, j]:.9g}", f"{pred['a'][i, j]:.9g}"])
    if args.sweep:
        omegas = [float(v) for v in args.sweep.split(",")]
        rows = sweep_omega(sc, omegas, bundle.planner, ctx)
        write_sweep_csv(rows, out / "sweep.csv")
    _write_manifest(out, "plan", {
        "scenario": _scenario_payload(args.scenario),
        "omega_av": sc.weights.omega_av,
        "sweep": args.sweep,
    })
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    bundle = load_scenario(args.scenario)
    sc = bundle.scenario
    omegas = [float(v) for v in args.omegas.split(",")]
    ctx = build_context(sc)
    rows = sweep_omega(sc, omegas, bundle.planner, ctx)
    write_sweep_csv(rows, out / "sweep.csv")
    _write_manifest(out, "sweep", {
        "scenario": _scenario_payload(args.scenario),
        "omegas": omegas,
    })
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    bundle = load_scenario(args.scenario)
    sc = bundle.scenario
    traj = None
    plan_doc = None
    if args.plan:
        with open(args.plan) as fh:
            plan_doc = json.load(fh)
        traj = _trajectory_from_plan(plan_doc)
    log = run_scenario(sc, traj)
    write_log_csv(log, out / "log.csv")
    _write_manifest(out, "simulate", {
        "scenario": _scenario_payload(args.scenario),
        "plan": plan_doc,
        "events": {k: (None if isinstance(v, float) and math.isnan(v) else v)
                   for k, v in log.events.items()},
    })
    return EXIT_OK


def cmd_track(args) -> int:
    out = _out_dir(args)
    with open(args.plan) as fh:
        plan_doc = json.load(fh)
    traj = _trajectory_from_plan(plan_doc)
    cfg = load_scenario(args.scenario).tracker if args.scenario else None
    log = track(traj, None, cfg)
    log.write_csv(out / "tracked.csv")
    _write_manifest(out, "track", {"plan": plan_doc,
                                   "scenario": _scenario_payload(args.scenario) if args.scenario else None})
    return EXIT_OK


class _CsvLog:
    """Metrics-facing view of a log.csv written by `simulate`."""

    def __init__(self, path):
        import csv as _csv

        rows = {}
        with open(path) as fh:
            for row in _csv.DictReader(fh):
                rows.setdefault(row["vehicle_id"], []).append(
                    (float(row["t_s"]), float(row["x_m"]), float(row["v_mps"])))
        self._series = {}
        for vid, data in rows.items():
            data.sort()
            arr = np.array(data)
            self._series[vid] = (arr[:, 0], arr[:, 1], arr[:, 2])
        self.ids = [vid for vid in self._series if vid != AV_ID]
        any_t = next(iter(self._series.values()))[0]
        self.t = any_t
        self.step = float(any_t[1] - any_t[0]) if len(any_t) > 1 else 0.1
        self.scenario = None

    def series(self, vid):
        return self._series[vid]


def cmd_metrics(args) -> int:
    out = _out_dir(args)
    log = _CsvLog(args.log)
    payload = {}
    if args.region:
        x0, length, t0, window = (float(v) for v in args.region.split(","))
        report = edie_metrics(log, EdieRegion(x0, length, t0, window),
                              include_av=args.include_av, clip=args.clip)
        payload["edie"] = report.as_dict()
    if args.baseline:
        if args.cross_section is None:
            raise ScenarioFileError("--cross-section is required with --baseline")
        base = _CsvLog(args.baseline)
        ttt = ttt_difference(log, base, args.cross_section, args.horizon)
        payload["ttt"] = {"delta_s": ttt.delta_s, "per_vehicle": ttt.per_vehicle,
                          "excluded": list(ttt.excluded)}
    if not payload:
        raise ScenarioFileError("nothing to compute: pass --region and/or --baseline")
    with open(out / "metrics.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    _write_manifest(out, "metrics", {
        "log": str(args.log), "baseline": args.baseline,
        "region": args.region, "cross_section": args.cross_section,
        "clip": args.clip, "include_av": args.include_av,
    })
    return EXIT_OK


def cmd_heatmap(args) -> int:
    out = _out_dir(args)
    log = _CsvLog(args.log)
    baseline = _CsvLog(args.baseline) if args.baseline else None
    rows = export_heatmap_data(log, baseline)
    write_heatmap_csv(rows, out / "heatmap.csv")
    _write_manifest(out, "heatmap", {"log": str(args.log), "baseline": args.baseline})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    out = _out_dir(args)
    cfg = CalibrationConfig(seed=args.seed)
    config_doc = None
    if args.config:
        import yaml

        with open(args.config) as fh:
            config_doc = yaml.safe_load(fh) or {}
        allowed = {"population", "generations", "crossover_prob", "mutation_prob",
                   "tournament_size", "blend_alpha", "elite", "seed", "objective"}
        unknown = set(config_doc) - allowed
        if unknown:
            raise ScenarioFileError(f"unknown calibration keys: {sorted(unknown)}")
        cfg = CalibrationConfig(**{**config_doc, "seed": config_doc.get("seed", args.seed)})
    data_dir = Path(args.data)
    csvs = sorted(data_dir.glob("*.csv"))
    if not csvs:
        raise ScenarioFileError(f"no CSV files under {data_dir}")
    records = []
    for path in csvs:
        records.extend(extract_cf_pairs(load_trajectory_csv(path)))
    if not records:
        raise ScenarioFileError("no usable leader-follower episodes found")
    results = [genetic_calibrate([rec], cfg) for rec in records]
    write_calibration_json(results, out / "calib.json", cfg)
    _write_manifest(out, "calibrate", {
        "data": str(data_dir), "files": [str(p) for p in csvs],
        "seed": cfg.seed, "config": config_doc,
        "record_count": len(records),
    })
    return EXIT_OK


def cmd_rerun(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    command = manifest.get("command")
    out = Path(args.out or os.environ.get(OUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    if command in ("plan", "sweep", "simulate"):
        scenario_doc = manifest["scenario"]
        tmp = out / "_rerun_scenario.yaml"
        import yaml

        with open(tmp, "w") as fh:
            yaml.safe_dump(scenario_doc, fh, sort_keys=False)
        argv = [command, "--scenario", str(tmp), "--out", str(out)]
        if command == "plan" and manifest.get("sweep"):
            argv += ["--sweep", manifest["sweep"]]
        if command == "sweep":
            argv += ["--omegas", ",".join(str(v) for v in manifest["omegas"])]
        return main(argv)
    raise ScenarioFileError(f"manifest command {command!r} cannot be re-run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanechange",
                                     description="Lane-change planning, tracking, and traffic impact toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="optimize a lane-change maneuver")
    p.add_argument("--scenario", required=True)
    p.add_argument("--omega-av", type=float, dest="omega_av")
    p.add_argument("--sweep", help="comma-separated omega values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", help="omega sensitivity sweep")
    p.add_argument("--scenario", required=True)
    p.add_argument("--omegas", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run a scenario, with or without a plan")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="closed-loop MPC tracking of a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--scenario", help="optional scenario file providing the tracker section")
    p.add_argument("--out")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("metrics", help="region flow/speed/density and travel-time deltas")
    p.add_argument("--log", required=True)
    p.add_argument("--baseline")
    p.add_argument("--region", help="x0,L,t0,Tw")
    p.add_argument("--cross-section", type=float, dest="cross_section")
    p.add_argument("--horizon", type=float)
    p.add_argument("--clip", choices=["interp", "step"])
    p.add_argument("--include-av", action="store_true", dest="include_av")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("heatmap", help="time-space speed field export")
    p.add_argument("--log", required=True)
    p.add_argument("--baseline")
    p.add_argument("--out")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("calibrate", help="fit driver parameters to trajectory data")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rerun)
    return parser


def _fail(code: int, exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioFileError, FileNotFoundError, ValueError) as exc:
        return _fail(EXIT_VALIDATION, exc)
    except (NoFeasiblePlanError,) as exc:
        return _fail(EXIT_INFEASIBLE, exc)
    except (ControllerFaultError,) as exc:
        return _fail(EXIT_CONTROLLER, exc)
    except CollisionStateError as exc:
        return _fail(EXIT_INFEASIBLE, exc)


if __name__ == "__main__":
    sys.exit(main())
