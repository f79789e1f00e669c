"""Longitudinal Control Model (LCM) car-following dynamics.

Follower acceleration responds to its own speed, the leader speed and the
spacing, all sampled one reaction time in the past:

    a_i(t) = A_i * [1 - v_i(t-tau)/v_desire - exp(1 - s(t-tau)/s*(t-tau))]
    s*     = v_i^2/(2 b_i) - v_j^2/(2 B_j) + v_i tau_i + L_j

A vehicle with no leader follows the free-road law A_i*(1 - v/v_desire).
Reaction delays are resolved by linear interpolation in a fixed-step history
ring, so tau does not have to be a multiple of the simulation step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "LcmParams",
    "VehicleState",
    "PlatoonState",
    "CollisionStateError",
    "desired_spacing",
    "lcm_acceleration",
    "lcm_free_acceleration",
    "lcm_jerk",
    "step_platoon",
    "steady_spacing",
    "write_platoon_csv",
]

A_MIN_DEFAULT = -8.0
A_MAX_DEFAULT = 8.0
V_MAX_DEFAULT = 30.0


class CollisionStateError(RuntimeError):
    """Spacing became non-positive; the scenario is physically invalid."""


@dataclass(frozen=True)
class LcmParams:
    """Driver parameters of one LCM-controlled vehicle."""

    max_accel: float = 2.81          # A_i
    own_emergency_decel: float = 6.14    # b_i
    leader_emergency_decel: float = 5.95  # B_j, driver's estimate for the leader
    reaction_time: float = 0.46      # tau_i
    desired_speed: float = 25.0      # v_desire
    leader_length: float = 5.03      # L_j

    def __post_init__(self):
        for name in ("max_accel", "own_emergency_decel", "leader_emergency_decel",
                     "desired_speed", "leader_length"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.reaction_time < 0.0:
            raise ValueError("reaction_time must be non-negative")


@dataclass(frozen=True)
class VehicleState:
    id: str
    x: float       # front-bumper position
    speed: float
    accel: float = 0.0
    lane: int = 0


# -- pure kernels (broadcast over scalars or arrays) -------------------------

def _desired_spacing_raw(v_i, v_j, b_i, B_j, tau_i, L_j):
    return v_i * v_i / (2.0 * b_i) - v_j * v_j / (2.0 * B_j) + v_i * tau_i + L_j


def _accel_scalar(v_i: float, v_j: float, s: float, A_i: float, b_i: float,
                  B_j: float, tau_i: float, v_desire: float, L_j: float) -> float:
    """Plain-float twin of _accel_raw for tight replay loops."""
    s_star = v_i * v_i / (2.0 * b_i) - v_j * v_j / (2.0 * B_j) + v_i * tau_i + L_j
    if s_star > 0.0:
        arg = 1.0 - s / s_star
        pressure = math.exp(arg) if arg < 700.0 else math.inf
    else:
        pressure = 0.0
    return A_i * (1.0 - v_i / v_desire - pressure)


def _pressure(s, s_star):
    """exp(1 - s/s*), with the safety pressure vanishing when the desired
    spacing is non-positive (a much faster leader makes any gap safe; the
    printed exponent would explode there instead)."""
    with np.errstate(over="ignore"):
        term = np.exp(1.0 - s / np.where(s_star > 0.0, s_star, np.inf))
    return np.where(s_star > 0.0, term, 0.0)


def _accel_raw(v_i, v_j, s, A_i, b_i, B_j, tau_i, v_desire, L_j):
    s_star = _desired_spacing_raw(v_i, v_j, b_i, B_j, tau_i, L_j)
    return A_i * (1.0 - v_i / v_desire - _pressure(s, s_star))


def _jerk_raw(v_i, v_j, a_i, a_j, s, s_rate, A_i, b_i, B_j, tau_i, v_desire, L_j):
    # exact time derivative of the acceleration law
    s_star = _desired_spacing_raw(v_i, v_j, b_i, B_j, tau_i, L_j)
    s_star_rate = v_i * a_i / b_i - v_j * a_j / B_j + a_i * tau_i
    expo = _pressure(s, s_star)
    safe_star = np.where(s_star > 0.0, s_star, 1.0)
    grad = np.where(s_star > 0.0,
                    (s_rate * safe_star - s * s_star_rate) / safe_star**2, 0.0)
    return A_i * (-a_i / v_desire + grad * expo)


def desired_spacing(follower: VehicleState, leader: VehicleState, p: LcmParams) -> float:
    """Desired safe spacing s* of the follower, in meters."""
    return float(_desired_spacing_raw(
        follower.speed, leader.speed,
        p.own_emergency_decel, p.leader_emergency_decel, p.reaction_time, p.leader_length))


def lcm_acceleration(
    follower_delayed: VehicleState,
    leader_delayed: VehicleState,
    p: LcmParams,
    a_min: float = A_MIN_DEFAULT,
    a_max: float = A_MAX_DEFAULT,
) -> float:
    """LCM acceleration from states sampled one reaction time in the past."""
    s = leader_delayed.x - follower_delayed.x
    if s <= 0.0:
        raise CollisionStateError(
            f"non-positive spacing {s:.3f} m between {follower_delayed.id} and {leader_delayed.id}")
    a = _accel_raw(follower_delayed.speed, leader_delayed.speed, s,
                   p.max_accel, p.own_emergency_decel, p.leader_emergency_decel,
                   p.reaction_time, p.desired_speed, p.leader_length)
    return float(np.clip(a, a_min, a_max))


def lcm_free_acceleration(follower_delayed: VehicleState, p: LcmParams,
                          a_min: float = A_MIN_DEFAULT, a_max: float = A_MAX_DEFAULT) -> float:
    """Free-road law for a vehicle with no leader."""
    a = p.max_accel * (1.0 - follower_delayed.speed / p.desired_speed)
    return float(np.clip(a, a_min, a_max))


def lcm_jerk(follower: VehicleState, leader: VehicleState, p: LcmParams,
             spacing_rate: Optional[float] = None) -> float:
    """Analytic jerk of the LCM law evaluated on (delayed) states.

    spacing_rate defaults to the speed difference v_leader - v_follower.
    """
    s = leader.x - follower.x
    if s <= 0.0:
        raise CollisionStateError(
            f"non-positive spacing {s:.3f} m between {follower.id} and {leader.id}")
    if spacing_rate is None:
        spacing_rate = leader.speed - follower.speed
    return float(_jerk_raw(follower.speed, leader.speed, follower.accel, leader.accel,
                           s, spacing_rate,
                           p.max_accel, p.own_emergency_decel, p.leader_emergency_decel,
                           p.reaction_time, p.desired_speed, p.leader_length))


def steady_spacing(p: LcmParams, speed: float, accel_tol: float = 0.005) -> float:
    """Spacing at which a follower at `speed` behind an equal-speed leader
    holds |acceleration| <= accel_tol (slightly decelerating side)."""
    arg = max(1.0 - speed / p.desired_speed, 0.0) + accel_tol / p.max_accel
    s_star = _desired_spacing_raw(speed, speed, p.own_emergency_decel,
                                  p.leader_emergency_decel, p.reaction_time, p.leader_length)
    return float(s_star * (1.0 - math.log(arg)))


# -- platoon engine -----------------------------------------------------------

class _History:
    """Fixed-step ring of (x, v, a) snapshots, newest at `head`."""

    def __init__(self, depth: int, n: int, dt: float):
        self.depth = depth
        self.n = n
        self.dt = dt
        self.x = np.zeros((depth, n))
        self.v = np.zeros((depth, n))
        self.a = np.zeros((depth, n))
        self.head = 0

    def seed(self, x0: np.ndarray, v0: np.ndarray, a0: np.ndarray) -> None:
        # constant-speed backward extrapolation: steady motion before t=0
        for i in range(self.depth):
            row = (self.head - i) % self.depth
            self.x[row] = x0 - v0 * (i * self.dt)
            self.v[row] = v0
            self.a[row] = a0

    def push(self, x: np.ndarray, v: np.ndarray, a: np.ndarray) -> None:
        self.head = (self.head + 1) % self.depth
        self.x[self.head] = x
        self.v[self.head] = v
        self.a[self.head] = a

    def set_accel(self, a: np.ndarray) -> None:
        self.a[self.head] = a

    def lookup(self, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Linearly interpolated states tau seconds before the newest snapshot."""
        offset = np.asarray(tau, dtype=float) / self.dt
        i = np.minimum(offset.astype(int), self.depth - 2)
        frac = offset - i
        cols = np.arange(self.n)
        newer = (self.head - i) % self.depth
        older = (self.head - i - 1) % self.depth
        w = 1.0 - frac
        x = w * self.x[newer, cols] + frac * self.x[older, cols]
        v = w * self.v[newer, cols] + frac * self.v[older, cols]
        a = w * self.a[newer, cols] + frac * self.a[older, cols]
        return x, v, a

    def slopes(self, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact step-to-step rates of the delayed interpolants.

        With a fixed delay the interpolation window slides one row per step,
        so the position readout advances by w*v[newer+1] + frac*v[newer]
        (with v[newer+1] = v[newer] + a[newer]*dt exactly) and the speed
        readout by the plainly interpolated acceleration.
        """
        offset = np.asarray(tau, dtype=float) / self.dt
        i = np.minimum(offset.astype(int), self.depth - 2)
        frac = offset - i
        cols = np.arange(self.n)
        newer = (self.head - i) % self.depth
        older = (self.head - i - 1) % self.depth
        w = 1.0 - frac
        x_rate = self.v[newer, cols] + w * self.a[newer, cols] * self.dt
        v_rate = w * self.a[newer, cols] + frac * self.a[older, cols]
        return x_rate, v_rate


class PlatoonState:
    """Single-lane LCM platoon, index 0 leading, with the reaction-delay
    history buffer. Mutated in place by step_platoon."""

    def __init__(self, vehicles: Sequence[VehicleState], params: Sequence[LcmParams],
                 dt: float = 0.1, v_max: float = V_MAX_DEFAULT,
                 a_min: float = A_MIN_DEFAULT, a_max: float = A_MAX_DEFAULT,
                 lane: int = 1, t0: float = 0.0):
        if len(vehicles) != len(params):
            raise ValueError("one LcmParams per vehicle")
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        xs = np.array([veh.x for veh in vehicles], dtype=float)
        if np.any(np.diff(xs) >= 0.0):
            raise ValueError("positions must strictly decrease (leader first)")
        self.dt = dt
        self.t = t0
        self.lane = lane
        self.v_max = v_max
        self.a_min = a_min
        self.a_max = a_max
        self.ids = [veh.id for veh in vehicles]
        self.x = xs
        self.v = np.array([veh.speed for veh in vehicles], dtype=float)
        self.a = np.array([veh.accel for veh in vehicles], dtype=float)
        self.jerk = np.zeros_like(self.x)
        self.params = list(params)
        self._param_arrays()
        depth = int(math.ceil(self.tau.max() / dt)) + 2 if len(vehicles) else 2
        self.history = _History(depth, len(vehicles), dt)
        self.history.seed(self.x, self.v, self.a)

    def _param_arrays(self):
        self.A = np.array([p.max_accel for p in self.params])
        self.b = np.array([p.own_emergency_decel for p in self.params])
        self.B = np.array([p.leader_emergency_decel for p in self.params])
        self.tau = np.array([p.reaction_time for p in self.params])
        self.v_desire = np.array([p.desired_speed for p in self.params])
        self.L = np.array([p.leader_length for p in self.params])

    def __len__(self):
        return len(self.ids)

    @property
    def vehicles(self) -> list[VehicleState]:
        return [VehicleState(self.ids[i], float(self.x[i]), float(self.v[i]),
                             float(self.a[i]), self.lane)
                for i in range(len(self.ids))]

    def headways(self, lead_x: Optional[float] = None) -> np.ndarray:
        """Time headways; the platoon leader uses lead_x when supplied."""
        gaps = np.empty_like(self.x)
        gaps[1:] = self.x[:-1] - self.x[1:]
        gaps[0] = (lead_x - self.x[0]) if lead_x is not None else np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            hw = np.where(self.v > 1e-9, gaps / np.maximum(self.v, 1e-9), np.inf)
        return hw

    def insert_leader(self, vehicle: VehicleState, params: LcmParams,
                      past_state: Callable[[float], tuple[float, float, float]]) -> None:
        """Splice a new vehicle in front of index 0, backfilling its history."""
        n_new = len(self.ids) + 1
        self.ids = [vehicle.id] + self.ids
        self.x = np.concatenate([[vehicle.x], self.x])
        self.v = np.concatenate([[vehicle.speed], self.v])
        self.a = np.concatenate([[vehicle.accel], self.a])
        self.jerk = np.concatenate([[0.0], self.jerk])
        self.params = [params] + self.params
        self._param_arrays()
        old = self.history
        depth = max(old.depth, int(math.ceil(self.tau.max() / self.dt)) + 2)
        hist = _History(depth, n_new, self.dt)
        for i in range(depth):
            t_row = self.t - i * self.dt
            row = (hist.head - i) % depth
            if i < old.depth:
                src = (old.head - i) % old.depth
                hist.x[row, 1:] = old.x[src]
                hist.v[row, 1:] = old.v[src]
                hist.a[row, 1:] = old.a[src]
            else:
                back = old.x[(old.head - (old.depth - 1)) % old.depth]
                vb = old.v[(old.head - (old.depth - 1)) % old.depth]
                hist.x[row, 1:] = back - vb * ((i - old.depth + 1) * self.dt)
                hist.v[row, 1:] = vb
            hist.x[row, 0], hist.v[row, 0], hist.a[row, 0] = past_state(t_row)
        self.history = hist


def step_platoon(
    platoon: PlatoonState,
    external_leader: Optional[Callable[[float], tuple[float, float, float]]] = None,
    dt: Optional[float] = None,
) -> PlatoonState:
    """Advance the platoon one step with semi-implicit Euler (v then x).

    external_leader(t) -> (x, v, a) supplies the vehicle ahead of index 0
    (the lane-changing vehicle while it is in this lane); index 0 drives
    free-road otherwise.
    """
    if dt is not None and abs(dt - platoon.dt) > 1e-12:
        raise ValueError("step size must match the history grid")
    dt = platoon.dt
    n = len(platoon)
    if n == 0:
        platoon.t += dt
        return platoon

    hist = platoon.history
    xd, vd, _ = hist.lookup(platoon.tau)

    # leader states as seen by each follower, sampled at t - tau_i
    lead_x = np.empty(n)
    lead_v = np.empty(n)
    lead_a = np.empty(n)
    if n > 1:
        offset = platoon.tau[1:] / dt
        i = np.minimum(offset.astype(int), hist.depth - 2)
        frac = offset - i
        cols = np.arange(n - 1)
        newer = (hist.head - i) % hist.depth
        older = (hist.head - i - 1) % hist.depth
        w = 1.0 - frac
        lead_x[1:] = w * hist.x[newer, cols] + frac * hist.x[older, cols]
        lead_v[1:] = w * hist.v[newer, cols] + frac * hist.v[older, cols]

    if external_leader is not None:
        lead_x[0], lead_v[0], lead_a[0] = external_leader(platoon.t - platoon.tau[0])

    a_new = np.empty(n)
    jerk = np.empty(n)
    start = 0 if external_leader is not None else 1
    if start == 1:
        a_new[0] = platoon.A[0] * (1.0 - vd[0] / platoon.v_desire[0])
    if n > start:
        sl = slice(start, n)
        s = lead_x[sl] - xd[sl]
        if np.any(s <= 0.0):
            bad = start + int(np.argmax(s <= 0.0))
            raise CollisionStateError(
                f"non-positive spacing at t={platoon.t:.2f}s for vehicle {platoon.ids[bad]}")
        a_new[sl] = _accel_raw(vd[sl], lead_v[sl], s,
                               platoon.A[sl], platoon.b[sl], platoon.B[sl],
                               platoon.tau[sl], platoon.v_desire[sl], platoon.L[sl])
    a_new = np.clip(a_new, platoon.a_min, platoon.a_max)
    hist.set_accel(a_new)

    # analytic jerk at the same delayed instants: interpolated values plus the
    # exact rates of the interpolants, so it matches finite differences of
    # the realized acceleration sequence
    x_rate, v_rate = hist.slopes(platoon.tau)
    lead_x_rate = np.empty(n)
    lead_v_rate = np.empty(n)
    if n > 1:
        w_n = 1.0 - frac
        lead_x_rate[1:] = hist.v[newer, cols] + w_n * hist.a[newer, cols] * dt
        lead_v_rate[1:] = w_n * hist.a[newer, cols] + frac * hist.a[older, cols]
    if external_leader is not None:
        lead_x_rate[0] = lead_v[0]
        lead_v_rate[0] = lead_a[0]
    if n > start:
        sl = slice(start, n)
        s = lead_x[sl] - xd[sl]
        jerk[sl] = _jerk_raw(vd[sl], lead_v[sl], v_rate[sl], lead_v_rate[sl], s,
                             lead_x_rate[sl] - x_rate[sl],
                             platoon.A[sl], platoon.b[sl], platoon.B[sl],
                             platoon.tau[sl], platoon.v_desire[sl], platoon.L[sl])
    if start == 1:
        jerk[0] = platoon.A[0] * (-v_rate[0] / platoon.v_desire[0])

    v_new = np.clip(platoon.v + a_new * dt, 0.0, platoon.v_max)
    x_new = platoon.x + v_new * dt

    platoon.x = x_new
    platoon.v = v_new
    platoon.a = a_new
    platoon.jerk = jerk
    platoon.t += dt
    platoon.history.push(x_new, v_new, a_new)
    return platoon


def write_platoon_csv(path, rows) -> None:
    """rows: iterable of (t, vehicle_id, x, v, a, headway)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "vehicle_id", "x_m", "v_mps", "a_mps2", "headway_s"])
        for r in rows:
            w.writerow([f"{r[0]:.9g}", r[1]] + [f"{v:.9g}" for v in r[2:]])
