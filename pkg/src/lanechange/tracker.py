"""Operational layer: kinematic vehicle model, error linearization about the
reference, and receding-horizon tracking of a planned maneuver.

The controller re-linearizes the kinematic model at the current reference
point each step, predicts the error state over the horizon with frozen
matrices, and solves a small strictly convex QP in the input deviations plus
one shared relaxation slack that softens the input and rate bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .trajectory import PlannedTrajectory, evaluate_arrays

__all__ = [
    "KinematicState",
    "ErrorModelMatrices",
    "MpcConfig",
    "ControlInput",
    "ControllerFaultError",
    "kinematic_derivative",
    "linearize",
    "build_prediction",
    "mpc_step",
    "track",
    "reference_from_trajectory",
]


class ControllerFaultError(RuntimeError):
    pass


@dataclass(frozen=True)
class KinematicState:
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class ReferencePoint:
    x: float
    y: float
    heading: float
    v: float
    delta: float


@dataclass(frozen=True)
class ErrorModelMatrices:
    A: np.ndarray
    B: np.ndarray
    T: float
    reference: ReferencePoint


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 6          # N_p
    control_horizon: int = 4  # N_c
    Q: tuple[float, float, float] = (100.0, 100.0, 10.0)
    R: tuple[float, float] = (1.0, 10.0)
    rho: float = 1000.0
    wheelbase: float = 2.8
    v_min: float = 0.0
    v_max: float = 30.0
    delta_max: float = 0.54
    dv_max: float = 0.8        # per-step speed increment bound (a_max * T)
    ddelta_max: float = 0.05   # per-step steer increment bound
    step: float = 0.1

    def __post_init__(self):
        if self.control_horizon > self.horizon or self.control_horizon < 1:
            raise ValueError("need 1 <= control_horizon <= horizon")
        if min(self.Q) < 0 or min(self.R) <= 0 or self.rho <= 0:
            raise ValueError("Q >= 0, R > 0, rho > 0 required")


@dataclass(frozen=True)
class ControlInput:
    v: float
    delta: float
    epsilon: float
    du: tuple[float, ...] = field(default=(), repr=False)
    kkt_residual: float = 0.0


def kinematic_derivative(state: KinematicState, v: float, delta: float,
                         wheelbase: float) -> tuple[float, float, float]:
    """Rear-axle bicycle kinematics (dx, dy, dheading)."""
    if abs(delta) >= math.pi / 2:
        raise ValueError("steer angle must satisfy |delta| < pi/2")
    return (v * math.cos(state.heading),
            v * math.sin(state.heading),
            v * math.tan(delta) / wheelbase)


def linearize(reference: ReferencePoint, T: float, wheelbase: float) -> ErrorModelMatrices:
    """Discrete error model about the reference point."""
    if abs(reference.delta) >= math.pi / 2:
        raise ValueError("reference steer must satisfy |delta| < pi/2")
    sin_p = math.sin(reference.heading)
    cos_p = math.cos(reference.heading)
    A = np.array([
        [1.0, 0.0, -reference.v * sin_p * T],
        [0.0, 1.0, reference.v * cos_p * T],
        [0.0, 0.0, 1.0],
    ])
    B = np.array([
        [cos_p * T, 0.0],
        [sin_p * T, 0.0],
        [math.tan(reference.delta) * T / wheelbase,
         reference.v * T / (wheelbase * math.cos(reference.delta) ** 2)],
    ])
    return ErrorModelMatrices(A, B, T, reference)


def build_prediction(matrices: ErrorModelMatrices, horizon: int,
                     control_horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked maps from the current error state and the input deviations to
    the predicted errors: Y = lam @ err + theta @ dU.

    theta block (i, k) is A^(i-k) B for k <= min(i, Nc); inputs return to the
    reference after the control horizon.
    """
    A, B = matrices.A, matrices.B
    n = A.shape[0]
    m = B.shape[1]
    powers = [np.eye(n)]
    for _ in range(horizon):
        powers.append(powers[-1] @ A)
    lam = np.vstack([powers[i] for i in range(1, horizon + 1)])
    theta = np.zeros((n * horizon, m * control_horizon))
    for i in range(1, horizon + 1):
        for k in range(1, min(i, control_horizon) + 1):
            theta[(i - 1) * n:i * n, (k - 1) * m:k * m] = powers[i - k] @ B
    return lam, theta


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _assemble_qp(err: np.ndarray, cfg: MpcConfig, matrices: ErrorModelMatrices,
                 prev_input: tuple[float, float]):
    """Quadratic program in z = [dU (2*Nc); eps]."""
    nc = cfg.control_horizon
    lam, theta = build_prediction(matrices, cfg.horizon, nc)
    Qbar = np.diag(list(cfg.Q) * cfg.horizon)
    Rbar = np.diag(list(cfg.R) * nc)
    nz = 2 * nc + 1
    H = np.zeros((nz, nz))
    H[:-1, :-1] = 2.0 * (theta.T @ Qbar @ theta + Rbar)
    H[-1, -1] = 2.0 * cfg.rho
    g = np.zeros(nz)
    g[:-1] = 2.0 * theta.T @ Qbar @ (lam @ err)

    ref = matrices.reference
    v_r, d_r = ref.v, ref.delta
    rows = []
    rhs = []

    def add(coefs: dict[int, float], bound: float, soften: bool = True):
        row = np.zeros(nz)
        for idx, c in coefs.items():
            row[idx] = c
        if soften:
            row[-1] = -1.0
        rows.append(row)
        rhs.append(bound)

    for k in range(nc):
        iv, idl = 2 * k, 2 * k + 1
        add({iv: 1.0}, cfg.v_max - v_r)               # v_r + dv <= v_max + eps
        add({iv: -1.0}, v_r - cfg.v_min)
        add({idl: 1.0}, cfg.delta_max - d_r)
        add({idl: -1.0}, cfg.delta_max + d_r)
        if k == 0:
            base_v = prev_input[0] - v_r
            base_d = prev_input[1] - d_r
            add({iv: 1.0}, cfg.dv_max + base_v)       # |u_1 - u_prev| <= dv_max + eps
            add({iv: -1.0}, cfg.dv_max - base_v)
            add({idl: 1.0}, cfg.ddelta_max + base_d)
            add({idl: -1.0}, cfg.ddelta_max - base_d)
        else:
            pv, pd = 2 * (k - 1), 2 * (k - 1) + 1
            add({iv: 1.0, pv: -1.0}, cfg.dv_max)
            add({iv: -1.0, pv: 1.0}, cfg.dv_max)
            add({idl: 1.0, pd: -1.0}, cfg.ddelta_max)
            add({idl: -1.0, pd: 1.0}, cfg.ddelta_max)
    add({nz - 1: -1.0}, 0.0, soften=False)            # eps >= 0
    G = np.vstack(rows)
    h = np.array(rhs)
    return H, g, G, h


def mpc_step(current: KinematicState, reference: ReferencePoint, cfg: MpcConfig,
             prev_input: tuple[float, float]) -> ControlInput:
    """One receding-horizon solve; applies the first input deviation."""
    err = np.array([current.x - reference.x,
                    current.y - reference.y,
                    _wrap_angle(current.heading - reference.heading)])
    matrices = linearize(reference, cfg.step, cfg.wheelbase)
    H, g, G, h = _assemble_qp(err, cfg, matrices, prev_input)
    # feasible start: zero deviations with a slack large enough for every row
    nz = H.shape[0]
    z0 = np.zeros(nz)
    soft = G[:, -1] < 0.0
    need = G[soft, :-1] @ z0[:-1] - h[soft]
    z0[-1] = max(0.0, float(need.max()) if need.size else 0.0) + 1e-9
    try:
        z, mu, _ = qp.solve_qp(H, g, G, h, z0)
    except qp.QpError as exc:
        raise ControllerFaultError(str(exc)) from exc
    res = qp.kkt_residual(H, g, G, h, z, mu)
    v_cmd = float(np.clip(reference.v + z[0], cfg.v_min, cfg.v_max))
    d_cmd = float(np.clip(reference.delta + z[1], -cfg.delta_max, cfg.delta_max))
    return ControlInput(v_cmd, d_cmd, float(max(z[-1], 0.0)), tuple(z[:-1]), res)


def reference_from_trajectory(traj: PlannedTrajectory, t: np.ndarray,
                              wheelbase: float) -> list[ReferencePoint]:
    """Reference points with the steer implied by the path curvature."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, traj.duration)
    f = evaluate_arrays(traj, t)
    speed = np.hypot(f["vx"], f["vy"])
    denom = np.maximum(speed**3, 1e-9)
    kappa = (f["vx"] * f["ay"] - f["vy"] * f["ax"]) / denom
    delta = np.arctan(wheelbase * kappa)
    return [ReferencePoint(f["x"][i], f["y"][i], f["heading"][i], speed[i], delta[i])
            for i in range(len(t))]


def _plant_rk4(state: KinematicState, v: float, delta: float, wheelbase: float,
               dt: float) -> KinematicState:
    def f(s: KinematicState):
        return kinematic_derivative(s, v, delta, wheelbase)

    k1 = f(state)
    s2 = KinematicState(state.x + 0.5 * dt * k1[0], state.y + 0.5 * dt * k1[1],
                        state.heading + 0.5 * dt * k1[2])
    k2 = f(s2)
    s3 = KinematicState(state.x + 0.5 * dt * k2[0], state.y + 0.5 * dt * k2[1],
                        state.heading + 0.5 * dt * k2[2])
    k3 = f(s3)
    s4 = KinematicState(state.x + dt * k3[0], state.y + dt * k3[1],
                        state.heading + dt * k3[2])
    k4 = f(s4)
    return KinematicState(
        state.x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        state.y + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        state.heading + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
    )


@dataclass
class TrackLog:
    t: np.ndarray
    x_ref: np.ndarray
    y_ref: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    v_cmd: np.ndarray
    delta_cmd: np.ndarray
    e_lat: np.ndarray
    e_lon: np.ndarray
    e_v: np.ndarray
    epsilon: np.ndarray
    kkt: np.ndarray = None

    def write_csv(self, path) -> None:
        import csv

        cols = ["t_s", "x_ref", "y_ref", "x", "y", "heading", "v_cmd", "delta_cmd",
                "e_lat_m", "e_lon_m", "e_v_mps", "epsilon"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(len(self.t)):
                w.writerow([f"{c:.9g}" for c in (
                    self.t[i], self.x_ref[i], self.y_ref[i], self.x[i], self.y[i],
                    self.heading[i], self.v_cmd[i], self.delta_cmd[i],
                    self.e_lat[i], self.e_lon[i], self.e_v[i], self.epsilon[i])])


def track(traj: PlannedTrajectory, initial: KinematicState | None = None,
          cfg: MpcConfig | None = None) -> TrackLog:
    """Closed-loop tracking of a planned maneuver on the nonlinear plant."""
    cfg = cfg or MpcConfig()
    dt = cfg.step
    n = int(round(traj.duration / dt))
    if n < 1:
        raise ValueError("trajectory shorter than one control step")
    times = np.arange(n + 1) * dt
    refs = reference_from_trajectory(traj, times, cfg.wheelbase)
    state = initial or KinematicState(refs[0].x, refs[0].y, refs[0].heading)
    prev = (refs[0].v, refs[0].delta)

    out = {k: np.zeros(n + 1) for k in
           ("x_ref", "y_ref", "x", "y", "heading", "v_cmd", "delta_cmd",
            "e_lat", "e_lon", "e_v", "epsilon", "kkt")}
    for i, ref in enumerate(refs):
        cmd = mpc_step(state, ref, cfg, prev)
        out["kkt"][i] = cmd.kkt_residual
        dx, dy = state.x - ref.x, state.y - ref.y
        cos_p, sin_p = math.cos(ref.heading), math.sin(ref.heading)
        out["x_ref"][i] = ref.x
        out["y_ref"][i] = ref.y
        out["x"][i] = state.x
        out["y"][i] = state.y
        out["heading"][i] = state.heading
        out["v_cmd"][i] = cmd.v
        out["delta_cmd"][i] = cmd.delta
        out["e_lon"][i] = cos_p * dx + sin_p * dy
        out["e_lat"][i] = -sin_p * dx + cos_p * dy
        out["e_v"][i] = cmd.v - ref.v
        out["epsilon"][i] = cmd.epsilon
        if i < n:
            state = _plant_rk4(state, cmd.v, cmd.delta, cfg.wheelbase, dt)
        prev = (cmd.v, cmd.delta)
    return TrackLog(times, out["x_ref"], out["y_ref"], out["x"], out["y"],
                    out["heading"], out["v_cmd"], out["delta_cmd"],
                    out["e_lat"], out["e_lon"], out["e_v"], out["epsilon"],
                    out["kkt"])
