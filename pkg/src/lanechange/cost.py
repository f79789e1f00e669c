"""Comfort/efficiency losses of the lane-changing vehicle and the affected
platoon, per-vehicle weighting, and the weighted joint objective.

All component losses are per-step sums over the maneuver window without a
time-step factor, so the simulation step is part of the scenario definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trajectory import PlannedTrajectory

__all__ = [
    "CostWeights",
    "HvWeighting",
    "LossBreakdown",
    "av_comfort_loss",
    "av_efficiency_loss",
    "hv_losses",
    "hv_weights",
    "total_loss",
]

_SIGMA_EPS = 1e-9


@dataclass(frozen=True)
class CostWeights:
    """Objective weights; omega_av trades the lane changer's loss against the
    platoon's, the per-class pairs trade comfort against efficiency."""

    omega_av: float = 0.5
    av_comfort: float = 0.5
    av_efficiency: float = 0.5
    hv_comfort: float = 0.5
    hv_efficiency: float = 0.5
    comfort_normalizer: float = 8.0       # j_max by default
    efficiency_normalizer: float = 25.0   # desired speed by default

    def __post_init__(self):
        if not 0.0 <= self.omega_av <= 1.0:
            raise ValueError("omega_av must lie in [0, 1]")
        for pair in ((self.av_comfort, self.av_efficiency), (self.hv_comfort, self.hv_efficiency)):
            if min(pair) < 0.0 or abs(sum(pair) - 1.0) > 1e-9:
                raise ValueError("per-class comfort/efficiency weights must be >= 0 and sum to 1")
        if self.comfort_normalizer <= 0.0 or self.efficiency_normalizer <= 0.0:
            raise ValueError("normalizers must be positive")

    @property
    def omega_hv(self) -> float:
        return 1.0 - self.omega_av


@dataclass(frozen=True)
class HvWeighting:
    sigma: tuple[float, ...]
    omega: tuple[float, ...]
    degenerate: bool = False  # True when all sigmas vanished and weights fell back to uniform


@dataclass(frozen=True)
class LossBreakdown:
    """Normalized, class-weighted losses. joint_total follows the configured
    omega_av; reported_total is the plain sum of the two class totals (the
    scale on which benchmark figures are quoted)."""

    av_comfort: float
    av_efficiency: float
    av_total: float
    hv_comfort: float
    hv_efficiency: float
    hv_total: float
    joint_total: float
    weights: CostWeights = field(repr=False, default=CostWeights())

    @property
    def reported_total(self) -> float:
        return self.av_total + self.hv_total

    def as_dict(self) -> dict:
        return {
            "av_comfort": self.av_comfort,
            "av_efficiency": self.av_efficiency,
            "av_total": self.av_total,
            "hv_comfort": self.hv_comfort,
            "hv_efficiency": self.hv_efficiency,
            "hv_total": self.hv_total,
            "joint_total": self.joint_total,
            "reported_total": self.reported_total,
            "weights": {
                "omega_av": self.weights.omega_av,
                "omega_hv": self.weights.omega_hv,
                "av_comfort": self.weights.av_comfort,
                "av_efficiency": self.weights.av_efficiency,
                "hv_comfort": self.weights.hv_comfort,
                "hv_efficiency": self.weights.hv_efficiency,
                "comfort_normalizer": self.weights.comfort_normalizer,
                "efficiency_normalizer": self.weights.efficiency_normalizer,
            },
        }


def av_comfort_loss(traj: PlannedTrajectory) -> float:
    """Sum of |longitudinal jerk| plus |lateral jerk| over the sample grid."""
    jx = np.array([s.jx for s in traj.samples])
    jy = np.array([s.jy for s in traj.samples])
    return float(np.abs(jx).sum() + np.abs(jy).sum())


def av_efficiency_loss(traj: PlannedTrajectory, v_desire: float) -> float:
    """Sum of |speed - desired speed| over the sample grid."""
    vx = np.array([s.vx for s in traj.samples])
    vy = np.array([s.vy for s in traj.samples])
    return float(np.abs(np.hypot(vx, vy) - v_desire).sum())


def hv_losses(jerk_series: np.ndarray, speed_series: np.ndarray, v_desire: float
              ) -> tuple[np.ndarray, np.ndarray]:
    """Per-vehicle (comfort, efficiency) sums from (n_steps, n_vehicles)
    jerk and speed series covering the maneuver window."""
    jerk_series = np.atleast_2d(np.asarray(jerk_series, dtype=float))
    speed_series = np.atleast_2d(np.asarray(speed_series, dtype=float))
    comfort = np.abs(jerk_series).sum(axis=0)
    efficiency = np.abs(speed_series - v_desire).sum(axis=0)
    return comfort, efficiency


def hv_weights(initial_gaps, initial_speed_diffs) -> HvWeighting:
    """Per-vehicle weights sigma_i = |dv_i|/sqrt(dx_i), normalized to sum 1.

    When every sigma vanishes (an undisturbed platoon at a common speed) the
    measure degenerates and the weights fall back to uniform.
    """
    gaps = np.asarray(initial_gaps, dtype=float)
    diffs = np.asarray(initial_speed_diffs, dtype=float)
    if gaps.shape != diffs.shape:
        raise ValueError("gaps and speed diffs must align")
    if gaps.size == 0:
        return HvWeighting((), (), False)
    if np.any(gaps <= 0.0):
        raise ValueError("initial gaps must be positive")
    sigma = np.abs(diffs) / np.sqrt(gaps)
    total = sigma.sum()
    if total < _SIGMA_EPS:
        omega = np.full(gaps.size, 1.0 / gaps.size)
        return HvWeighting(tuple(sigma), tuple(omega), True)
    return HvWeighting(tuple(sigma), tuple(sigma / total), False)


def total_loss(
    av_comfort: float,
    av_efficiency: float,
    hv_comfort_per_vehicle,
    hv_efficiency_per_vehicle,
    weights: CostWeights,
    hv_weighting: HvWeighting,
) -> LossBreakdown:
    """Compose the class losses and the weighted joint objective."""
    hc = np.asarray(hv_comfort_per_vehicle, dtype=float)
    he = np.asarray(hv_efficiency_per_vehicle, dtype=float)
    om = np.asarray(hv_weighting.omega, dtype=float)
    if hc.shape != om.shape or he.shape != om.shape:
        raise ValueError("per-vehicle losses must align with the weighting")
    hv_c = float((om * hc).sum()) / weights.comfort_normalizer
    hv_e = float((om * he).sum()) / weights.efficiency_normalizer
    av_c = av_comfort / weights.comfort_normalizer
    av_e = av_efficiency / weights.efficiency_normalizer
    av_total = weights.av_comfort * av_c + weights.av_efficiency * av_e
    hv_total = weights.hv_comfort * hv_c + weights.hv_efficiency * hv_e
    joint = weights.omega_av * av_total + weights.omega_hv * hv_total
    return LossBreakdown(av_c, av_e, av_total, hv_c, hv_e, hv_total, joint, weights)
