"""Deterministic single-target-lane scenario engine.

Timeline of a run: the target-lane platoon warms up under LCM until the
lane-change start; the lane changer then follows its planned quintic
maneuver, is handed to the first follower as its new leader when crossing
the lane boundary, and drives on as a regular LCM vehicle afterwards.
Region metrics (flow / space-mean speed / density) and total-travel-time
deltas are computed from the logged trajectories.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .carfollow import (
    A_MAX_DEFAULT,
    A_MIN_DEFAULT,
    V_MAX_DEFAULT,
    CollisionStateError,
    LcmParams,
    PlatoonState,
    VehicleState,
    _accel_raw,
    _jerk_raw,
    steady_spacing,
    step_platoon,
)
from .collision import CollisionConfig
from .cost import CostWeights, HvWeighting, hv_weights
from .trajectory import PlannedTrajectory, evaluate_arrays

__all__ = [
    "Scenario",
    "SimulationLog",
    "EdieRegion",
    "MetricsReport",
    "TttResult",
    "PlanningContext",
    "build_context",
    "run_scenario",
    "edie_metrics",
    "ttt_difference",
    "export_heatmap_data",
    "write_log_csv",
]

AV_ID = "AV"


@dataclass(frozen=True)
class Scenario:
    """Full experiment definition; every physical quantity in SI units."""

    step: float = 0.1
    duration: float = 300.0
    lc_start: float = 80.0
    lane_width: float = 3.5
    av_start_speed: float = 25.0
    av_target_speed: Optional[float] = None   # maneuver efficiency target; defaults to start speed
    av_desired_speed: float = 25.0            # post-LC car-following desire
    initial_gap: float = 10.0
    gap_reference: str = "follower"   # follower: gap ahead of HV1; leader: behind the preceding
    hv_count: int = 10
    hv_spacing: float | str = 40.0    # meters or "steady"
    hv_speed: float = 25.0
    preceding: bool = False
    preceding_gap: float = 200.0
    preceding_speed: float = 25.0
    lcm: LcmParams = field(default_factory=LcmParams)
    hv_params: Optional[tuple[LcmParams, ...]] = None
    av_lcm: Optional[LcmParams] = None
    weights: CostWeights = field(default_factory=CostWeights)
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    v_min: float = 5.0
    v_max: float = 30.0
    a_min: float = A_MIN_DEFAULT
    a_max: float = A_MAX_DEFAULT
    j_min: float = -8.0
    j_max: float = 8.0
    hv_weight_mode: str = "sigma"     # sigma | uniform
    handoff: str = "boundary"         # boundary | lc_start
    loss_settle_extra: float = 0.0
    edie_clip: str = "interp"         # interp | step

    def __post_init__(self):
        if self.av_target_speed is None:
            object.__setattr__(self, "av_target_speed", self.av_start_speed)
        if self.step <= 0 or self.duration <= 0:
            raise ValueError("step and duration must be positive")
        if not 0.0 <= self.lc_start < self.duration:
            raise ValueError("lc_start must lie inside the run")
        if self.hv_count < 0:
            raise ValueError("hv_count must be >= 0")
        if self.gap_reference not in ("follower", "leader"):
            raise ValueError("gap_reference must be follower or leader")
        if self.handoff not in ("boundary", "lc_start"):
            raise ValueError("handoff must be boundary or lc_start")
        if self.hv_weight_mode not in ("sigma", "uniform"):
            raise ValueError("hv_weight_mode must be sigma or uniform")
        if self.edie_clip not in ("interp", "step"):
            raise ValueError("edie_clip must be interp or step")
        if self.gap_reference == "leader" and not self.preceding:
            raise ValueError("gap_reference=leader needs a preceding vehicle")
        if self.hv_params is not None and len(self.hv_params) != self.hv_count:
            raise ValueError("hv_params must match hv_count")

    @property
    def spacing_value(self) -> float:
        if isinstance(self.hv_spacing, str):
            if self.hv_spacing != "steady":
                raise ValueError("hv_spacing must be a number or 'steady'")
            return steady_spacing(self.lcm, self.hv_speed)
        return float(self.hv_spacing)

    def params_for(self, i: int) -> LcmParams:
        return self.hv_params[i] if self.hv_params is not None else self.lcm

    @property
    def av_params(self) -> LcmParams:
        if self.av_lcm is not None:
            return self.av_lcm
        return replace(self.lcm, desired_speed=self.av_desired_speed)


@dataclass
class SimulationLog:
    step: float
    t: np.ndarray
    ids: list[str]
    x: np.ndarray          # (n_steps+1, n_vehicles), front-bumper positions
    v: np.ndarray
    a: np.ndarray
    jerk: np.ndarray
    headway: np.ndarray
    av: dict[str, np.ndarray]
    events: dict[str, float]
    scenario: Scenario

    @property
    def hv_indices(self) -> list[int]:
        return [i for i, vid in enumerate(self.ids) if vid.startswith("HV")]

    def series(self, vehicle_id: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(t, x, v) for one vehicle, the lane changer included."""
        if vehicle_id == AV_ID:
            return self.t, self.av["x"], self.av["vx"]
        i = self.ids.index(vehicle_id)
        return self.t, self.x[:, i], self.v[:, i]


@dataclass(frozen=True)
class EdieRegion:
    x0: float
    length: float
    t0: float
    window: float

    def __post_init__(self):
        if self.length <= 0 or self.window <= 0:
            raise ValueError("region must have positive extent")

    @property
    def area(self) -> float:
        return self.length * self.window


@dataclass(frozen=True)
class MetricsReport:
    flow_veh_h: float
    speed_km_h: float
    density_veh_km: float
    total_distance_m: float
    total_time_s: float
    area_m_s: float
    per_vehicle: dict[str, tuple[float, float]]  # id -> (time in region, distance in region)
    empty: bool = False

    def as_dict(self) -> dict:
        return {
            "flow_veh_h": self.flow_veh_h,
            "space_mean_speed_km_h": self.speed_km_h,
            "density_veh_km": self.density_veh_km,
            "total_distance_m": self.total_distance_m,
            "total_time_s": self.total_time_s,
            "area_m_s": self.area_m_s,
            "per_vehicle": {k: {"time_s": v[0], "distance_m": v[1]}
                            for k, v in self.per_vehicle.items()},
            "empty": self.empty,
        }


@dataclass(frozen=True)
class TttResult:
    delta_s: float
    per_vehicle: dict[str, float]
    excluded: tuple[str, ...]


@dataclass
class PlanningContext:
    """Warmed platoon state at the lane-change start plus the cut-in anchor."""

    scenario: Scenario
    platoon: PlatoonState
    x_av0: float
    hv1_index: int
    hv_weighting: HvWeighting

    def platoon_copy(self) -> PlatoonState:
        return copy.deepcopy(self.platoon)


def _initial_platoon(scenario: Scenario) -> tuple[PlatoonState, int]:
    """Platoon at t=0; returns (platoon, index of HV1)."""
    spacing = scenario.spacing_value
    vehicles = []
    params = []
    if scenario.preceding:
        vehicles.append(VehicleState("P", scenario.preceding_gap, scenario.preceding_speed, 0.0, 1))
        params.append(scenario.lcm)
    for i in range(scenario.hv_count):
        vehicles.append(VehicleState(f"HV{i + 1}", -spacing * i, scenario.hv_speed, 0.0, 1))
        params.append(scenario.params_for(i))
    hv1 = 1 if scenario.preceding else 0
    if not vehicles:
        # degenerate empty road: keep a placeholder-free empty platoon
        platoon = PlatoonState([], [], scenario.step, scenario.v_max,
                               scenario.a_min, scenario.a_max)
        return platoon, hv1
    platoon = PlatoonState(vehicles, params, scenario.step, scenario.v_max,
                           scenario.a_min, scenario.a_max)
    return platoon, hv1


def _state_at(platoon: PlatoonState, col: int, t_query: float) -> tuple[float, float, float]:
    """Interpolated (x, v, a) of one platoon vehicle at a past absolute time."""
    tau = platoon.t - t_query
    if tau < 0.0:
        tau = 0.0
    hist = platoon.history
    offset = tau / platoon.dt
    i = min(int(offset), hist.depth - 2)
    frac = offset - i
    newer = (hist.head - i) % hist.depth
    older = (hist.head - i - 1) % hist.depth
    w = 1.0 - frac
    return (w * hist.x[newer, col] + frac * hist.x[older, col],
            w * hist.v[newer, col] + frac * hist.v[older, col],
            w * hist.a[newer, col] + frac * hist.a[older, col])


def handoff_offset(traj: PlannedTrajectory, lane_width: float, mode: str) -> float:
    """Maneuver-local time at which the lane changer becomes the follower's
    leader: first crossing of half the lane width, or 0 in lc_start mode."""
    if mode == "lc_start":
        return 0.0
    target = lane_width / 2.0
    # symmetric family crosses half the lane width exactly at mid-maneuver
    mid = evaluate_arrays(traj, np.array([traj.duration / 2.0]))["y"][0]
    if abs(mid - target) < 1e-9:
        return traj.duration / 2.0
    ts = [s.t for s in traj.samples]
    ys = [s.y for s in traj.samples]
    hit = next((k for k in range(len(ts)) if ys[k] >= target), None)
    if hit is None:
        return traj.duration
    if hit == 0:
        return 0.0
    lo, hi = ts[hit - 1], ts[hit]
    f = evaluate_arrays
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(traj, np.array([mid]))["y"][0] >= target:
            hi = mid
        else:
            lo = mid
    return hi


def context_weighting(scenario: Scenario, platoon: PlatoonState, hv1: int,
                      x_av0: float) -> HvWeighting:
    gaps = x_av0 - platoon.x[hv1:]
    diffs = scenario.av_start_speed - platoon.v[hv1:]
    if scenario.hv_weight_mode == "uniform":
        n = len(gaps)
        if n == 0:
            return HvWeighting((), (), False)
        return HvWeighting(tuple(0.0 for _ in range(n)), tuple(1.0 / n for _ in range(n)), True)
    return hv_weights(gaps, diffs)


def build_context(scenario: Scenario) -> PlanningContext:
    """Warm the platoon to the lane-change start and anchor the cut-in point."""
    platoon, hv1 = _initial_platoon(scenario)
    n_warm = int(round(scenario.lc_start / scenario.step))
    for _ in range(n_warm):
        step_platoon(platoon)
    if len(platoon) == 0:
        x_av0 = 0.0
        weighting = HvWeighting((), (), False)
    elif scenario.gap_reference == "leader":
        x_av0 = platoon.x[0] - scenario.initial_gap
        weighting = context_weighting(scenario, platoon, hv1, x_av0)
    else:
        x_av0 = (platoon.x[hv1] + scenario.initial_gap) if len(platoon) > hv1 else 0.0
        weighting = context_weighting(scenario, platoon, hv1, x_av0)
    return PlanningContext(scenario, platoon, x_av0, hv1, weighting)


def make_av_lookup(traj: PlannedTrajectory, x_av0: float, lc_start: float,
                   v_start: float) -> Callable[[float], tuple[float, float, float]]:
    """Longitudinal (x, v, a) of the lane changer at any time up to the end
    of the maneuver (constant-speed extrapolation outside it)."""

    def lookup(t: float) -> tuple[float, float, float]:
        local = t - lc_start
        if local <= 0.0:
            return x_av0 + v_start * local, v_start, 0.0
        if local >= traj.duration:
            tail = traj.samples[-1]
            return x_av0 + tail.x + tail.vx * (local - traj.duration), tail.vx, 0.0
        f = evaluate_arrays(traj, np.array([local]))
        return x_av0 + f["x"][0], f["vx"][0], f["ax"][0]

    return lookup


class ManeuverAv:
    """Longitudinal state machine of the lane changer.

    Planned-trajectory kinematics during the maneuver, then a one-vehicle
    LCM platoon (following the target-lane preceding vehicle when present).
    Both the scenario engine and the planner's candidate rollouts drive this
    same object, so prediction and simulation share one dynamics model.
    """

    def __init__(self, scenario: Scenario, traj: PlannedTrajectory, x_av0: float,
                 lane_platoon: Optional[PlatoonState]):
        self.sc = scenario
        self.traj = traj
        self.x_av0 = x_av0
        self.lc_start = scenario.lc_start
        self.lc_end = scenario.lc_start + traj.duration
        self.lookup = make_av_lookup(traj, x_av0, scenario.lc_start, scenario.av_start_speed)
        self.lane_platoon = lane_platoon
        self.platoon: Optional[PlatoonState] = None

    def state(self, t: float) -> tuple[float, float, float]:
        if self.platoon is not None and t >= self.lc_end:
            return _state_at(self.platoon, 0, t)
        return self.lookup(t)

    def maybe_spawn(self, t: float) -> None:
        if self.platoon is not None or t < self.lc_end:
            return
        dt = self.sc.step
        tail = self.traj.samples[-1]
        self.platoon = PlatoonState(
            [VehicleState(AV_ID, self.x_av0 + tail.x, tail.vx, 0.0, 1)],
            [self.sc.av_params], dt, self.sc.v_max, self.sc.a_min, self.sc.a_max, t0=t)
        hist = self.platoon.history
        for k in range(hist.depth):
            row = (hist.head - k) % hist.depth
            hist.x[row, 0], hist.v[row, 0], hist.a[row, 0] = self.lookup(t - k * dt)

    def step(self) -> None:
        if self.platoon is None:
            return
        ext = None
        if self.sc.preceding and self.lane_platoon is not None and len(self.lane_platoon):
            ext = lambda tq, _p=self.lane_platoon: _state_at(_p, 0, tq)
        step_platoon(self.platoon, ext)


def run_scenario(scenario: Scenario, plan=None) -> SimulationLog:
    """Run the full scenario; without a plan the lane change never happens
    and the lane changer cruises in its original lane."""
    traj: Optional[PlannedTrajectory] = None
    if plan is not None:
        traj = plan if isinstance(plan, PlannedTrajectory) else plan.trajectory

    ctx = build_context(scenario)
    dt = scenario.step
    n_steps = int(round(scenario.duration / dt))
    platoon, hv1 = _initial_platoon(scenario)
    m = len(platoon)

    lc_start = scenario.lc_start
    lc_end = lc_start + (traj.duration if traj is not None else 0.0)
    t_handoff = math.inf
    if traj is not None:
        t_handoff = lc_start + handoff_offset(traj, scenario.lane_width, scenario.handoff)

    t_grid = np.arange(n_steps + 1) * dt
    X = np.zeros((n_steps + 1, m))
    V = np.zeros((n_steps + 1, m))
    A = np.zeros((n_steps + 1, m))
    J = np.zeros((n_steps + 1, m))
    HW = np.zeros((n_steps + 1, m))
    av_log = {k: np.zeros(n_steps + 1) for k in
              ("x", "y", "vx", "vy", "ax", "ay", "jx", "jy", "heading", "lane")}

    events = {"lc_start_s": lc_start if traj is not None else math.nan,
              "lc_end_s": lc_end if traj is not None else math.nan,
              "handoff_s": math.nan}
    av = ManeuverAv(scenario, traj, ctx.x_av0, platoon if m else None) if traj is not None else None

    def av_state(t: float) -> tuple[float, float, float]:
        if av is None:
            return ctx.x_av0 + scenario.av_start_speed * (t - lc_start), scenario.av_start_speed, 0.0
        return av.state(t)

    def log_av_row(i: int, t: float) -> None:
        if traj is not None and lc_start <= t <= lc_end:
            f = evaluate_arrays(traj, np.array([t - lc_start]))
            av_log["x"][i] = ctx.x_av0 + f["x"][0]
            av_log["y"][i] = f["y"][0]
            av_log["vx"][i] = f["vx"][0]
            av_log["vy"][i] = f["vy"][0]
            av_log["ax"][i] = f["ax"][0]
            av_log["ay"][i] = f["ay"][0]
            av_log["jx"][i] = f["jx"][0]
            av_log["jy"][i] = f["jy"][0]
            av_log["heading"][i] = f["heading"][0]
            av_log["lane"][i] = 1.0 if f["y"][0] >= scenario.lane_width / 2 else 0.0
        else:
            x, v, a = av_state(t)
            av_log["x"][i] = x
            av_log["vx"][i] = v
            av_log["ax"][i] = a
            done = traj is not None and t > lc_end
            av_log["y"][i] = scenario.lane_width if done else 0.0
            av_log["lane"][i] = 1.0 if done else 0.0

    try:
        for i in range(n_steps + 1):
            t = t_grid[i]
            if m:
                X[i] = platoon.x
                V[i] = platoon.v
                lead_x = None
                if traj is not None and t >= t_handoff:
                    lead_x = av_state(t)[0] if hv1 == 0 else None
                HW[i] = platoon.headways(lead_x)
                if traj is not None and t >= t_handoff and hv1 > 0:
                    gap = av_state(t)[0] - platoon.x[hv1]
                    HW[i, hv1] = gap / platoon.v[hv1] if platoon.v[hv1] > 1e-9 else math.inf
            log_av_row(i, t)

            if av is not None:
                av.maybe_spawn(t)
            if math.isnan(events["handoff_s"]) and traj is not None and t >= t_handoff:
                events["handoff_s"] = t

            if i == n_steps:
                if m:
                    A[i] = platoon.a
                    J[i] = platoon.jerk
                break

            if av is not None:
                av.step()
            if m:
                active = traj is not None and t >= t_handoff
                ext_leader = av_state if active else None
                _step_with_external(platoon, ext_leader, hv1)
                A[i] = platoon.a
                J[i] = platoon.jerk
    except CollisionStateError as exc:
        raise CollisionStateError(f"scenario aborted: {exc}") from exc

    return SimulationLog(dt, t_grid, list(platoon.ids) if m else [], X, V, A, J, HW,
                         av_log, events, scenario)


def _step_with_external(platoon: PlatoonState, external, follower_index: int) -> None:
    """step_platoon, but the external leader can feed any follower index."""
    if external is None or follower_index == 0:
        step_platoon(platoon, external)
        return
    # temporarily reroute: follower_index reads the external leader instead of
    # its in-platoon one, the vehicles ahead are untouched
    step_platoon_spliced(platoon, external, follower_index)


def step_platoon_spliced(platoon: PlatoonState, external, idx: int) -> None:
    """Advance with the external vehicle spliced in ahead of platoon[idx]."""
    dt = platoon.dt
    n = len(platoon)
    hist = platoon.history
    xd, vd, _ = hist.lookup(platoon.tau)

    lead_x = np.empty(n)
    lead_v = np.empty(n)
    lead_a = np.empty(n)
    offset = platoon.tau[1:] / dt
    i_back = np.minimum(offset.astype(int), hist.depth - 2)
    frac = offset - i_back
    cols = np.arange(n - 1)
    newer = (hist.head - i_back) % hist.depth
    older = (hist.head - i_back - 1) % hist.depth
    w = 1.0 - frac
    lead_x[1:] = w * hist.x[newer, cols] + frac * hist.x[older, cols]
    lead_v[1:] = w * hist.v[newer, cols] + frac * hist.v[older, cols]
    lead_x[idx], lead_v[idx], lead_a[idx] = external(platoon.t - platoon.tau[idx])

    a_new = np.empty(n)
    a_new[0] = platoon.A[0] * (1.0 - vd[0] / platoon.v_desire[0])
    s = lead_x[1:] - xd[1:]
    s_idx = lead_x[idx] - xd[idx]
    if np.any(s <= 0.0) or s_idx <= 0.0:
        raise CollisionStateError(f"non-positive spacing at t={platoon.t:.2f}s")
    a_new[1:] = _accel_raw(vd[1:], lead_v[1:], s,
                           platoon.A[1:], platoon.b[1:], platoon.B[1:],
                           platoon.tau[1:], platoon.v_desire[1:], platoon.L[1:])
    a_new[idx] = _accel_raw(vd[idx], lead_v[idx], s_idx,
                            platoon.A[idx], platoon.b[idx], platoon.B[idx],
                            platoon.tau[idx], platoon.v_desire[idx], platoon.L[idx])
    a_new = np.clip(a_new, platoon.a_min, platoon.a_max)
    hist.set_accel(a_new)

    x_rate, v_rate = hist.slopes(platoon.tau)
    w_n = 1.0 - frac
    lead_x_rate = np.empty(n)
    lead_v_rate = np.empty(n)
    lead_x_rate[1:] = hist.v[newer, cols] + w_n * hist.a[newer, cols] * dt
    lead_v_rate[1:] = w_n * hist.a[newer, cols] + frac * hist.a[older, cols]
    lead_x_rate[idx] = lead_v[idx]
    lead_v_rate[idx] = lead_a[idx]
    jerk = np.empty(n)
    jerk[0] = platoon.A[0] * (-v_rate[0] / platoon.v_desire[0])
    s2 = lead_x[1:] - xd[1:]
    jerk[1:] = _jerk_raw(vd[1:], lead_v[1:], v_rate[1:], lead_v_rate[1:], s2,
                         lead_x_rate[1:] - x_rate[1:],
                         platoon.A[1:], platoon.b[1:], platoon.B[1:],
                         platoon.tau[1:], platoon.v_desire[1:], platoon.L[1:])
    s2_idx = lead_x[idx] - xd[idx]
    jerk[idx] = _jerk_raw(vd[idx], lead_v[idx], v_rate[idx], lead_v_rate[idx], s2_idx,
                          lead_x_rate[idx] - x_rate[idx],
                          platoon.A[idx], platoon.b[idx], platoon.B[idx],
                          platoon.tau[idx], platoon.v_desire[idx], platoon.L[idx])

    v_new = np.clip(platoon.v + a_new * dt, 0.0, platoon.v_max)
    x_new = platoon.x + v_new * dt
    platoon.x = x_new
    platoon.v = v_new
    platoon.a = a_new
    platoon.jerk = jerk
    platoon.t += dt
    hist.push(x_new, v_new, a_new)


# -- region metrics -----------------------------------------------------------

def _clip_series(t: np.ndarray, x: np.ndarray, region: EdieRegion,
                 mode: str, dt: float) -> tuple[float, float]:
    """(time inside, distance inside) for one trajectory."""
    lo, hi = region.x0, region.x0 + region.length
    ta, tb = region.t0, region.t0 + region.window
    if mode == "step":
        inside = (t >= ta) & (t < tb) & (x >= lo) & (x < hi)
        inside = inside[:-1]
        d = np.where(inside, np.diff(x), 0.0).sum()
        return float(inside.sum() * dt), float(d)

    t1, t2 = t[:-1], t[1:]
    x1, x2 = x[:-1], x[1:]
    tA = np.maximum(t1, ta)
    tB = np.minimum(t2, tb)
    valid = tB > tA
    span = np.where(t2 > t1, t2 - t1, 1.0)
    xa = x1 + (x2 - x1) * (tA - t1) / span
    xb = x1 + (x2 - x1) * (tB - t1) / span
    # positions are non-decreasing, so space-clip on [xa, xb]
    dx_seg = xb - xa
    moving = dx_seg > 1e-15
    entry = np.where(xa >= lo, tA, np.where(moving, tA + (lo - xa) / np.where(moving, dx_seg, 1.0) * (tB - tA), tB))
    exit_ = np.where(xb <= hi, tB, np.where(moving, tA + (hi - xa) / np.where(moving, dx_seg, 1.0) * (tB - tA), tA))
    stationary_inside = (~moving) & (xa >= lo) & (xa <= hi)
    entry = np.where(stationary_inside, tA, entry)
    exit_ = np.where(stationary_inside, tB, exit_)
    dt_in = np.where(valid, np.maximum(exit_ - entry, 0.0), 0.0)
    dx_in = np.where(valid, np.maximum(np.minimum(xb, hi) - np.maximum(xa, lo), 0.0), 0.0)
    dx_in = np.where(dt_in > 0.0, dx_in, 0.0)
    return float(dt_in.sum()), float(dx_in.sum())


def edie_metrics(log, region: EdieRegion, include_av: bool = False,
                 clip: Optional[str] = None) -> MetricsReport:
    """Generalized flow/speed/density over a space-time rectangle.

    Accepts any log exposing ids/series/step (the engine's SimulationLog or
    a CSV-backed view)."""
    mode = clip or (log.scenario.edie_clip if getattr(log, "scenario", None) is not None
                    else "interp")
    per = {}
    total_t = 0.0
    total_d = 0.0
    ids = list(log.ids) + ([AV_ID] if include_av else [])
    for vid in ids:
        t, x, _ = log.series(vid)
        ti, di = _clip_series(t, x, region, mode, log.step)
        if ti > 0.0 or di > 0.0:
            per[vid] = (ti, di)
        total_t += ti
        total_d += di
    return metrics_from_totals(total_t, total_d, region.area, per)


def metrics_from_totals(total_time_s: float, total_distance_m: float, area_m_s: float,
                        per_vehicle: Optional[dict] = None) -> MetricsReport:
    """Edie's definitions from aggregate in-region time and distance."""
    if area_m_s <= 0:
        raise ValueError("area must be positive")
    empty = total_time_s <= 0.0 and total_distance_m <= 0.0
    q = total_distance_m / area_m_s * 3600.0
    k = total_time_s / area_m_s * 1000.0
    v = (total_distance_m / total_time_s * 3.6) if total_time_s > 0 else 0.0
    return MetricsReport(q, v, k, total_distance_m, total_time_s, area_m_s,
                         per_vehicle or {}, empty)


def _crossing_time(t: np.ndarray, x: np.ndarray, section: float) -> Optional[float]:
    idx = np.argmax(x >= section)
    if x[idx] < section:
        return None
    if idx == 0:
        return float(t[0])
    x0, x1 = x[idx - 1], x[idx]
    if x1 <= x0:
        return float(t[idx])
    return float(t[idx - 1] + (section - x0) / (x1 - x0) * (t[idx] - t[idx - 1]))


def ttt_difference(log_with: SimulationLog, log_without: SimulationLog,
                   cross_section: Optional[float] = None,
                   horizon: Optional[float] = None,
                   include_av: bool = True) -> TttResult:
    """Sum over vehicles of (crossing time with LC - crossing time without).

    The cross-section defaults to 200 m downstream of the lane-change start
    point; vehicles that never cross within the horizon are reported and
    excluded from the sum.
    """
    if cross_section is None:
        cross_section = float(log_with.av["x"][int(round(log_with.events["lc_start_s"] / log_with.step))] + 200.0)
    horizon = horizon if horizon is not None else float(log_with.t[-1])
    ids = [vid for vid in log_with.ids if vid in log_without.ids]
    if include_av:
        ids.append(AV_ID)
    per = {}
    excluded = []
    total = 0.0
    for vid in ids:
        ta = _crossing_time(*log_with.series(vid)[:2], cross_section)
        tb = _crossing_time(*log_without.series(vid)[:2], cross_section)
        if ta is None or tb is None or ta > horizon or tb > horizon:
            excluded.append(vid)
            continue
        per[vid] = ta - tb
        total += ta - tb
    return TttResult(total, per, tuple(excluded))


def export_heatmap_data(log: SimulationLog, baseline: Optional[SimulationLog] = None):
    """Per-step per-vehicle (t, x, v) rows; adds the speed difference against
    a second log with matching vehicles when given."""
    rows = []
    for vid in log.ids:
        t, x, v = log.series(vid)
        if baseline is not None and vid in baseline.ids:
            _, _, vb = baseline.series(vid)
            nb = min(len(v), len(vb))
            for k in range(nb):
                rows.append((t[k], vid, x[k], v[k], vb[k], v[k] - vb[k]))
        else:
            for k in range(len(t)):
                rows.append((t[k], vid, x[k], v[k], math.nan, math.nan))
    return rows


def write_heatmap_csv(rows, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "vehicle_id", "x_m", "v_mps", "v_baseline_mps", "dv_mps"])
        for r in rows:
            w.writerow([f"{r[0]:.9g}", r[1]] + [f"{c:.9g}" for c in r[2:]])


def write_log_csv(log: SimulationLog, path) -> None:
    """Per-step per-vehicle rows, the lane changer included."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "vehicle_id", "lane", "x_m", "v_mps", "a_mps2", "headway_s"])
        for i, t in enumerate(log.t):
            w.writerow([f"{t:.9g}", AV_ID, int(log.av["lane"][i]), f"{log.av['x'][i]:.9g}",
                        f"{log.av['vx'][i]:.9g}", f"{log.av['ax'][i]:.9g}", ""])
            for j, vid in enumerate(log.ids):
                hw = log.headway[i, j]
                w.writerow([f"{t:.9g}", vid, 1, f"{log.x[i, j]:.9g}", f"{log.v[i, j]:.9g}",
                            f"{log.a[i, j]:.9g}", f"{hw:.9g}" if math.isfinite(hw) else ""])
