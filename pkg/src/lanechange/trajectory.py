"""Quintic-polynomial lane-change trajectory family.

Both coordinates of the maneuver are fifth-order polynomials in time,
fixed by endpoint position/velocity/acceleration. The symmetric family
(equal start/end longitudinal speed, zero endpoint accelerations) is
parameterized by the maneuver duration and the final longitudinal
displacement only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuinticCoeffs",
    "LcBoundaryConditions",
    "TrajectorySample",
    "PlannedTrajectory",
    "shape_function",
    "shape_derivatives",
    "build_symmetric_trajectory",
    "build_general_trajectory",
    "sample_at",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class QuinticCoeffs:
    """Longitudinal (a0..a5) and lateral (b0..b5) polynomial coefficients."""

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        if len(self.a) != 6 or len(self.b) != 6:
            raise ValueError("quintic needs exactly 6 coefficients per axis")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite polynomial coefficient")


@dataclass(frozen=True)
class LcBoundaryConditions:
    """Endpoint data for one lane change: longitudinal speeds/accelerations,
    final displacement, lateral offset and duration."""

    v_start: float
    a_start: float
    v_end: float
    a_end: float
    x_final: float
    lane_width: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.lane_width < 0.0:
            raise ValueError("lane_width must be non-negative")


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    x: float
    y: float
    vx: float
    vy: float
    ax: float
    ay: float
    jx: float
    jy: float
    heading: float


@dataclass(frozen=True)
class PlannedTrajectory:
    """A sampled quintic maneuver. Evaluation stays continuous; the sample
    grid is uniform over [0, duration] at sample_step."""

    coeffs: QuinticCoeffs
    duration: float
    sample_step: float
    samples: tuple[TrajectorySample, ...] = field(repr=False)

    @property
    def v_start(self) -> float:
        return self.samples[0].vx

    @property
    def lateral_offset(self) -> float:
        return self.samples[-1].y

    @property
    def x_final(self) -> float:
        return self.samples[-1].x


def shape_function(t: float, horizon: float) -> float:
    """Normalized transition 6s^5 - 15s^4 + 10s^3 with s = t/horizon.

    Rises monotonically from 0 to 1 with zero first and second derivatives
    at both ends.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if t < 0.0 or t > horizon:
        raise ValueError(f"t={t} outside [0, {horizon}]")
    s = t / horizon
    return ((6.0 * s - 15.0) * s + 10.0) * s**3


def shape_derivatives(t, horizon: float):
    """First three time derivatives of shape_function; accepts arrays."""
    s = np.asarray(t, dtype=float) / horizon
    dz = (30.0 * s**4 - 60.0 * s**3 + 30.0 * s**2) / horizon
    ddz = (120.0 * s**3 - 180.0 * s**2 + 60.0 * s) / horizon**2
    dddz = (360.0 * s**2 - 360.0 * s + 60.0) / horizon**3
    return dz, ddz, dddz


def _shape_coeffs(horizon: float) -> np.ndarray:
    T = horizon
    return np.array([0.0, 0.0, 0.0, 10.0 / T**3, -15.0 / T**4, 6.0 / T**5])


def _polyder_rows(c: np.ndarray) -> np.ndarray:
    """Rows: value/velocity/acceleration/jerk coefficient vectors."""
    k = np.arange(6.0)
    rows = [c]
    d = c
    for _ in range(3):
        d = d[1:] * k[1 : len(d)]
        rows.append(np.concatenate([d, np.zeros(6 - len(d))]))
    return np.vstack(rows)


def _eval_poly(c: np.ndarray, t: np.ndarray) -> np.ndarray:
    # Horner; c in ascending order.
    out = np.zeros_like(t, dtype=float)
    for ck in c[::-1]:
        out = out * t + ck
    return out


def _basis_matrix(T: float) -> np.ndarray:
    """Rows map coefficients to (pos, vel, acc) at t=0 and t=T."""
    k = np.arange(6)
    row_p0 = np.eye(6)[0]
    row_v0 = np.eye(6)[1]
    row_a0 = 2.0 * np.eye(6)[2]
    row_pT = T**k
    row_vT = k * T ** np.maximum(k - 1, 0)
    row_aT = k * (k - 1) * T ** np.maximum(k - 2, 0)
    return np.vstack([row_p0, row_v0, row_a0, row_pT, row_vT, row_aT])


def build_general_trajectory(bc: LcBoundaryConditions) -> QuinticCoeffs:
    """Solve the two 6x6 endpoint systems for the polynomial coefficients."""
    M = _basis_matrix(bc.duration)
    rhs_x = np.array([0.0, bc.v_start, bc.a_start, bc.x_final, bc.v_end, bc.a_end])
    rhs_y = np.array([0.0, 0.0, 0.0, bc.lane_width, 0.0, 0.0])
    try:
        a = np.linalg.solve(M, rhs_x)
        b = np.linalg.solve(M, rhs_y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular boundary system (T={bc.duration})") from exc
    return QuinticCoeffs(tuple(a), tuple(b))


def _sample_grid(coeffs: QuinticCoeffs, duration: float, step: float) -> tuple[TrajectorySample, ...]:
    n = int(round(duration / step))
    t = np.minimum(np.arange(n + 1) * step, duration)
    rows_x = _polyder_rows(np.asarray(coeffs.a))
    rows_y = _polyder_rows(np.asarray(coeffs.b))
    vals = [_eval_poly(r, t) for r in rows_x] + [_eval_poly(r, t) for r in rows_y]
    x, vx, ax, jx, y, vy, ay, jy = vals
    heading = np.arctan2(vy, vx)
    return tuple(
        TrajectorySample(t[i], x[i], y[i], vx[i], vy[i], ax[i], ay[i], jx[i], jy[i], heading[i])
        for i in range(n + 1)
    )


def build_symmetric_trajectory(
    v_start: float,
    duration: float,
    x_final: float,
    lane_width: float,
    sample_step: float = 0.1,
) -> PlannedTrajectory:
    """Equal-endpoint-speed family: x(t) = v*t - [v*T - x_final]*z(t),
    y(t) = lane_width*z(t). Only duration and x_final are free."""
    if v_start <= 0.0 or duration <= 0.0 or x_final <= 0.0:
        raise ValueError("v_start, duration and x_final must be positive")
    z = _shape_coeffs(duration)
    a = z * (x_final - v_start * duration)
    a[1] += v_start
    b = z * lane_width
    coeffs = QuinticCoeffs(tuple(a), tuple(b))
    return PlannedTrajectory(coeffs, duration, sample_step, _sample_grid(coeffs, duration, sample_step))


def from_boundary_conditions(bc: LcBoundaryConditions, sample_step: float = 0.1) -> PlannedTrajectory:
    coeffs = build_general_trajectory(bc)
    return PlannedTrajectory(coeffs, bc.duration, sample_step, _sample_grid(coeffs, bc.duration, sample_step))


def sample_at(traj: PlannedTrajectory, t: float) -> TrajectorySample:
    """Evaluate position through jerk analytically at one instant."""
    if t < 0.0 or t > traj.duration:
        raise ValueError(f"t={t} outside [0, {traj.duration}]")
    tv = np.asarray(t, dtype=float)
    rx = _polyder_rows(np.asarray(traj.coeffs.a))
    ry = _polyder_rows(np.asarray(traj.coeffs.b))
    x, vx, ax, jx = (_eval_poly(r, tv) for r in rx)
    y, vy, ay, jy = (_eval_poly(r, tv) for r in ry)
    return TrajectorySample(
        float(t), float(x), float(y), float(vx), float(vy),
        float(ax), float(ay), float(jx), float(jy), float(np.arctan2(vy, vx)),
    )


def evaluate_arrays(traj: PlannedTrajectory, t: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorized evaluation over arbitrary times inside [0, duration]."""
    t = np.asarray(t, dtype=float)
    if t.size and (t.min() < -1e-12 or t.max() > traj.duration + 1e-12):
        raise ValueError("time grid outside trajectory domain")
    rx = _polyder_rows(np.asarray(traj.coeffs.a))
    ry = _polyder_rows(np.asarray(traj.coeffs.b))
    x, vx, ax, jx = (_eval_poly(r, t) for r in rx)
    y, vy, ay, jy = (_eval_poly(r, t) for r in ry)
    return {
        "t": t, "x": x, "y": y, "vx": vx, "vy": vy,
        "ax": ax, "ay": ay, "jx": jx, "jy": jy,
        "heading": np.arctan2(vy, vx),
    }


def write_trajectory_csv(traj: PlannedTrajectory, path) -> None:
    cols = ["t_s", "x_m", "y_m", "vx_mps", "vy_mps", "ax_mps2", "ay_mps2",
            "jx_mps3", "jy_mps3", "heading_rad"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for s in traj.samples:
            w.writerow([f"{v:.9g}" for v in
                        (s.t, s.x, s.y, s.vx, s.vy, s.ax, s.ay, s.jx, s.jy, s.heading)])
