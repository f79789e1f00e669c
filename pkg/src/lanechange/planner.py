"""Tactical layer: search over (duration, final displacement) minimizing the
joint loss subject to kinematic bounds and collision clearance.

A coarse deterministic grid is evaluated first (the expensive part is one
platoon forward-simulation per candidate), then a derivative-free simplex
refinement polishes the best feasible grid point with infeasibility handled
by a large additive penalty. Candidate evaluations store the omega-free loss
components so one grid can be re-weighted across a whole omega sweep.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize as sciopt

from .carfollow import CollisionStateError
from .collision import EllipseBoundary, min_distance
from .cost import CostWeights, LossBreakdown, av_comfort_loss, av_efficiency_loss, total_loss
from .simulation import (
    PlanningContext,
    Scenario,
    _step_with_external,
    build_context,
)
from .trajectory import PlannedTrajectory, build_symmetric_trajectory, evaluate_arrays

__all__ = [
    "PlannerConfig",
    "CandidateEvaluation",
    "PlanResult",
    "NoFeasiblePlanError",
    "check_feasibility",
    "evaluate_candidate",
    "evaluate_grid",
    "optimize",
    "sweep_omega",
    "write_grid_csv",
    "write_sweep_csv",
]


class NoFeasiblePlanError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    t_min: float = 1.5
    t_max: float = 10.0
    t_step: float = 0.25
    xf_factor_min: float = 0.6
    xf_factor_max: float = 1.4
    xf_step: float = 2.0
    clearance_margin: float = 0.1
    penalty: float = 1e6
    refine: bool = True
    refine_maxiter: int = 120

    def __post_init__(self):
        if self.t_min <= 0 or self.t_max < self.t_min or self.t_step <= 0:
            raise ValueError("invalid duration range")
        if not 0 < self.xf_factor_min <= self.xf_factor_max or self.xf_step <= 0:
            raise ValueError("invalid displacement range")

    def t_grid(self) -> np.ndarray:
        n = int(math.floor((self.t_max - self.t_min) / self.t_step + 1e-9))
        return self.t_min + np.arange(n + 1) * self.t_step

    def xf_grid(self, v_start: float, duration: float) -> np.ndarray:
        lo = self.xf_factor_min * v_start * duration
        hi = self.xf_factor_max * v_start * duration
        n = int(math.floor((hi - lo) / self.xf_step + 1e-9))
        return lo + np.arange(n + 1) * self.xf_step


@dataclass(frozen=True)
class CandidateEvaluation:
    duration: float
    x_final: float
    feasible: bool
    violations: tuple[str, ...]
    violation_size: float
    av_comfort_raw: float = math.nan
    av_efficiency_raw: float = math.nan
    hv_comfort_per_vehicle: tuple[float, ...] = ()
    hv_efficiency_per_vehicle: tuple[float, ...] = ()

    def breakdown(self, weights: CostWeights, ctx: PlanningContext) -> LossBreakdown:
        return total_loss(self.av_comfort_raw, self.av_efficiency_raw,
                          self.hv_comfort_per_vehicle, self.hv_efficiency_per_vehicle,
                          weights, ctx.hv_weighting)


@dataclass
class PlanResult:
    best: CandidateEvaluation
    breakdown: LossBreakdown
    trajectory: PlannedTrajectory
    grid: tuple[CandidateEvaluation, ...]
    hv_prediction: dict
    weights: CostWeights
    refined: bool

    def as_dict(self) -> dict:
        return {
            "duration_s": self.best.duration,
            "x_final_m": self.best.x_final,
            "refined": self.refined,
            "losses": self.breakdown.as_dict(),
        }


def _ellipse_centers(x_front, y, heading, cfg):
    half = cfg.vehicle_length / 2.0
    return x_front - half * np.cos(heading), y - half * np.sin(heading)


def _simulate_candidate(ctx: PlanningContext, traj: PlannedTrajectory,
                        margin: float, collect_series: bool = False):
    """Forward-simulate the platoon against the maneuver, covering the loss
    window [lc_start, lc_end + settling extension].

    Returns (collision_violation, hv jerk series, hv speed series, extras);
    collision_violation is 0 when the clearance margin holds everywhere.
    """
    sc = ctx.scenario
    dt = sc.step
    n = int(round((traj.duration + sc.loss_settle_extra) / dt))
    platoon = ctx.platoon_copy()
    m = len(platoon)
    hv1 = ctx.hv1_index
    n_hv = m - hv1

    from .simulation import ManeuverAv, handoff_offset  # avoid import cycle at load

    av = ManeuverAv(sc, traj, ctx.x_av0, platoon if m else None)
    t_h = sc.lc_start + handoff_offset(traj, sc.lane_width, sc.handoff)

    grid = np.minimum(np.arange(n + 1) * dt, traj.duration)
    in_lc = np.arange(n + 1) * dt <= traj.duration + 1e-12
    f = evaluate_arrays(traj, grid)
    av_cx, av_cy = _ellipse_centers(ctx.x_av0 + f["x"], f["y"], f["heading"], sc.collision)
    ca, cb = sc.collision.semi_major, sc.collision.semi_minor
    reach = 2.0 * ca + margin

    jerk_series = np.zeros((n + 1, n_hv))
    speed_series = np.zeros((n + 1, n_hv))
    series = {"x": np.zeros((n + 1, m)), "v": np.zeros((n + 1, m)),
              "a": np.zeros((n + 1, m))} if collect_series else None
    worst = 0.0

    try:
        for i in range(n + 1):
            t = float(platoon.t) if m else sc.lc_start + i * dt
            av.maybe_spawn(t)
            if m:
                speed_series[i] = platoon.v[hv1:]
                if collect_series:
                    series["x"][i] = platoon.x
                    series["v"][i] = platoon.v
                # collision clearance during the maneuver; the circumscribed
                # circle prefilter skips the exact solve for distant pairs
                if in_lc[i]:
                    hv_cx = platoon.x - sc.collision.vehicle_length / 2.0
                    close = np.abs(hv_cx - av_cx[i]) < reach + 2.0
                    if np.any(close):
                        e_av = EllipseBoundary(av_cx[i], av_cy[i], f["heading"][i], ca, cb)
                        for j in np.nonzero(close)[0]:
                            d = min_distance(e_av, EllipseBoundary(hv_cx[j], sc.lane_width, 0.0, ca, cb))
                            if d <= margin:
                                worst = max(worst, margin - d + 1e-6)
                av.step()
                active = t >= t_h - 1e-12
                _step_with_external(platoon, av.state if active else None, hv1)
                jerk_series[i] = platoon.jerk[hv1:]
                if collect_series:
                    series["a"][i] = platoon.a
            else:
                av.step()
                platoon.t += dt
    except CollisionStateError:
        return math.inf, jerk_series, speed_series, series
    return worst, jerk_series, speed_series, series


def _bound_violations(traj: PlannedTrajectory, sc: Scenario, factor: int = 1
                      ) -> tuple[list[str], float]:
    dt = sc.step / factor
    n = int(round(traj.duration / dt))
    f = evaluate_arrays(traj, np.minimum(np.arange(n + 1) * dt, traj.duration))
    speed = np.hypot(f["vx"], f["vy"])
    out: list[str] = []
    size = 0.0

    def check(name, values, lo, hi):
        nonlocal size
        over = max(values.max() - hi, 0.0)
        under = max(lo - values.min(), 0.0)
        if over > 1e-9 or under > 1e-9:
            out.append(f"{name} outside [{lo}, {hi}]")
            size += over + under

    check("speed", speed, sc.v_min, sc.v_max)
    check("longitudinal acceleration", f["ax"], sc.a_min, sc.a_max)
    check("lateral acceleration", f["ay"], sc.a_min, sc.a_max)
    check("longitudinal jerk", f["jx"], sc.j_min, sc.j_max)
    check("lateral jerk", f["jy"], sc.j_min, sc.j_max)
    return out, size


def check_feasibility(traj: PlannedTrajectory, context: PlanningContext,
                      config: Optional[PlannerConfig] = None,
                      refine_factor: int = 1) -> tuple[bool, tuple[str, ...]]:
    """Kinematic bounds at every sample plus collision clearance against the
    propagated platoon; refine_factor > 1 re-checks on a finer time grid with
    platoon positions interpolated between simulation steps."""
    cfg = config or PlannerConfig()
    sc = context.scenario
    violations, _ = _bound_violations(traj, sc, refine_factor)
    worst, _, _, series = _simulate_candidate(context, traj, cfg.clearance_margin,
                                              collect_series=(refine_factor > 1))
    if worst == math.inf:
        violations.append("platoon spacing collapsed (collision)")
    elif worst > 0.0:
        violations.append(f"collision clearance below {cfg.clearance_margin} m")
    elif refine_factor > 1 and len(context.platoon) > 0:
        viol = _fine_collision_check(context, traj, series, cfg.clearance_margin, refine_factor)
        if viol:
            violations.append(viol)
    return len(violations) == 0, tuple(violations)


def _fine_collision_check(ctx: PlanningContext, traj: PlannedTrajectory, series,
                          margin: float, factor: int) -> Optional[str]:
    sc = ctx.scenario
    dt = sc.step
    n = int(round(traj.duration / dt))
    coarse = np.arange(n + 1) * dt
    fine = np.minimum(np.arange(n * factor + 1) * (dt / factor), traj.duration)
    f = evaluate_arrays(traj, fine)
    av_cx, av_cy = _ellipse_centers(ctx.x_av0 + f["x"], f["y"], f["heading"], sc.collision)
    ca, cb = sc.collision.semi_major, sc.collision.semi_minor
    reach = 2.0 * ca + margin
    for j in range(series["x"].shape[1]):
        xj = np.interp(fine, coarse, series["x"][:, j]) - sc.collision.vehicle_length / 2.0
        close = np.abs(xj - av_cx) < reach + 2.0
        for k in np.nonzero(close)[0]:
            e_av = EllipseBoundary(av_cx[k], av_cy[k], f["heading"][k], ca, cb)
            d = min_distance(e_av, EllipseBoundary(xj[k], sc.lane_width, 0.0, ca, cb))
            if d <= margin:
                return f"collision clearance below {margin} m (fine grid)"
    return None


def evaluate_candidate(duration: float, x_final: float, context: PlanningContext,
                       weights: Optional[CostWeights] = None,
                       config: Optional[PlannerConfig] = None) -> CandidateEvaluation:
    """Build the symmetric-family trajectory, forward-simulate the platoon,
    and accumulate the loss components. Deterministic for fixed inputs."""
    cfg = config or PlannerConfig()
    sc = context.scenario
    try:
        traj = build_symmetric_trajectory(sc.av_start_speed, duration, x_final,
                                          sc.lane_width, sc.step)
    except ValueError as exc:
        return CandidateEvaluation(duration, x_final, False, (str(exc),), 1.0)

    violations, size = _bound_violations(traj, sc)
    if violations:
        return CandidateEvaluation(duration, x_final, False, tuple(violations), size)

    worst, jerks, speeds, _ = _simulate_candidate(context, traj, cfg.clearance_margin)
    if worst == math.inf:
        return CandidateEvaluation(duration, x_final, False,
                                   ("platoon spacing collapsed (collision)",), 100.0)
    if worst > 0.0:
        return CandidateEvaluation(
            duration, x_final, False,
            (f"collision clearance below {cfg.clearance_margin} m",), worst)

    av_comfort = av_comfort_loss(traj)
    av_eff = av_efficiency_loss(traj, sc.av_target_speed)
    hv_c = np.abs(jerks).sum(axis=0)
    hv_e = np.abs(speeds - sc.lcm.desired_speed).sum(axis=0)
    return CandidateEvaluation(duration, x_final, True, (), 0.0,
                               av_comfort, av_eff, tuple(hv_c), tuple(hv_e))


def _objective(cand: CandidateEvaluation, weights: CostWeights,
               ctx: PlanningContext, penalty: float) -> float:
    if not cand.feasible:
        return penalty * (1.0 + min(cand.violation_size, 1e3))
    return cand.breakdown(weights, ctx).joint_total


def _key(cand: CandidateEvaluation, joint: float, v_start: float) -> tuple:
    """Lexicographic tie-break: lower joint loss, then shorter duration, then
    smaller displacement deviation."""
    return (joint, cand.duration, abs(cand.x_final - v_start * cand.duration))


def evaluate_grid(context: PlanningContext, config: Optional[PlannerConfig] = None
                  ) -> list[CandidateEvaluation]:
    cfg = config or PlannerConfig()
    out = []
    for T in cfg.t_grid():
        for xf in cfg.xf_grid(context.scenario.av_start_speed, T):
            out.append(evaluate_candidate(float(T), float(xf), context, config=cfg))
    return out


def optimize(scenario: Scenario, weights: Optional[CostWeights] = None,
             config: Optional[PlannerConfig] = None,
             context: Optional[PlanningContext] = None,
             grid: Optional[list[CandidateEvaluation]] = None) -> PlanResult:
    """Coarse grid plus simplex refinement; returns the best feasible plan."""
    cfg = config or PlannerConfig()
    ctx = context or build_context(scenario)
    scenario = ctx.scenario
    w = weights or scenario.weights
    cands = grid if grid is not None else evaluate_grid(ctx, cfg)
    feasible = [c for c in cands if c.feasible]
    if not feasible:
        raise NoFeasiblePlanError("every candidate on the planning grid is infeasible")

    v0 = scenario.av_start_speed
    best = None
    best_key = None
    for c in feasible:
        k = _key(c, c.breakdown(w, ctx).joint_total, v0)
        if best_key is None or k < best_key:
            best, best_key = c, k

    refined = False
    if cfg.refine:
        def fun(z):
            T, xf = float(z[0]), float(z[1])
            if not (cfg.t_min <= T <= cfg.t_max):
                return cfg.penalty * (1.0 + abs(T - np.clip(T, cfg.t_min, cfg.t_max)))
            lo = cfg.xf_factor_min * v0 * T
            hi = cfg.xf_factor_max * v0 * T
            if not (lo <= xf <= hi):
                return cfg.penalty * (1.0 + abs(xf - np.clip(xf, lo, hi)))
            return _objective(evaluate_candidate(T, xf, ctx, config=cfg), w, ctx, cfg.penalty)

        x0 = np.array([best.duration, best.x_final])
        simplex = np.array([x0, x0 + [cfg.t_step, 0.0], x0 + [0.0, cfg.xf_step]])
        res = sciopt.minimize(fun, x0, method="Nelder-Mead",
                              options={"initial_simplex": simplex, "xatol": 1e-3,
                                       "fatol": 1e-9, "maxiter": cfg.refine_maxiter,
                                       "maxfev": 4 * cfg.refine_maxiter})
        cand = evaluate_candidate(float(res.x[0]), float(res.x[1]), ctx, config=cfg)
        if cand.feasible:
            k = _key(cand, cand.breakdown(w, ctx).joint_total, v0)
            if k < best_key:
                best, best_key = cand, k
                refined = True

    traj = build_symmetric_trajectory(v0, best.duration, best.x_final,
                                      scenario.lane_width, scenario.step)
    _, _, _, series = _simulate_candidate(ctx, traj, cfg.clearance_margin, collect_series=True)
    n_rows = series["x"].shape[0]
    prediction = {
        "t": scenario.lc_start + np.arange(n_rows) * scenario.step,
        "ids": list(ctx.platoon.ids),
        "x": series["x"],
        "v": series["v"],
        "a": series["a"],
    }
    return PlanResult(best, best.breakdown(w, ctx), traj, tuple(cands),
                      prediction, w, refined)


def sweep_omega(scenario: Scenario, omegas, config: Optional[PlannerConfig] = None,
                context: Optional[PlanningContext] = None,
                reporting_weights: Optional[CostWeights] = None) -> list[dict]:
    """One optimization per omega over a shared candidate grid.

    Each row carries the per-omega losses of the chosen plan plus the same
    plan re-weighted at fixed reporting weights (0.5 by default)."""
    cfg = config or PlannerConfig()
    ctx = context or build_context(scenario)
    grid = evaluate_grid(ctx, cfg)
    report_w = reporting_weights or replace(scenario.weights, omega_av=0.5)
    rows = []
    for omega in omegas:
        if not 0.0 < omega <= 1.0:
            raise ValueError("omega values must lie in (0, 1]")
        w = replace(scenario.weights, omega_av=float(omega))
        plan = optimize(scenario, w, cfg, ctx, grid)
        reported = plan.best.breakdown(report_w, ctx)
        rows.append({
            "omega_av": float(omega),
            "duration_s": plan.best.duration,
            "x_final_m": plan.best.x_final,
            "breakdown": plan.breakdown,
            "reported": reported,
            "refined": plan.refined,
        })
    return rows


def write_grid_csv(grid, weights: CostWeights, ctx: PlanningContext, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["duration_s", "x_final_m", "feasible", "joint_total",
                    "av_total", "hv_total", "violations"])
        for c in grid:
            if c.feasible:
                b = c.breakdown(weights, ctx)
                w.writerow([c.duration, c.x_final, 1,
                            f"{b.joint_total:.9g}", f"{b.av_total:.9g}", f"{b.hv_total:.9g}", ""])
            else:
                w.writerow([c.duration, c.x_final, 0, "", "", "", "; ".join(c.violations)])


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_av", "duration_s", "x_final_m",
                    "av_total", "hv_total", "joint_total",
                    "reported_av_total", "reported_hv_total", "reported_total"])
        for r in rows:
            b, rep = r["breakdown"], r["reported"]
            w.writerow([r["omega_av"], r["duration_s"], r["x_final_m"],
                        f"{b.av_total:.9g}", f"{b.hv_total:.9g}", f"{b.joint_total:.9g}",
                        f"{rep.av_total:.9g}", f"{rep.hv_total:.9g}", f"{rep.reported_total:.9g}"])
