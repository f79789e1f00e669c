"""Fit LCM driver parameters to leader-follower trajectory records with a
real-coded genetic algorithm.

The objective replays the recorded leader past an LCM-driven follower and
scores the relative spacing error; the GA uses tournament selection, blend
crossover, per-gene uniform mutation inside the bounds, and single-elite
survival, all reproducible from one seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .carfollow import LcmParams

__all__ = [
    "TrajectoryRecord",
    "CalibrationConfig",
    "CalibrationResult",
    "PARAM_NAMES",
    "PARAM_BOUNDS",
    "simulate_follower",
    "calibration_objective",
    "genetic_calibrate",
    "summarize_results",
]

# gene order and search ranges
PARAM_NAMES = ("desired_speed", "max_accel", "reaction_time", "leader_length",
               "own_emergency_decel", "leader_emergency_decel")
PARAM_BOUNDS = {
    "desired_speed": (5.0, 50.0),
    "max_accel": (2.0, 10.0),
    "reaction_time": (0.1, 10.0),
    "leader_length": (2.0, 10.0),
    "own_emergency_decel": (2.0, 10.0),
    "leader_emergency_decel": (2.0, 10.0),
}

_COLLISION_PENALTY = 1e3


@dataclass(frozen=True)
class TrajectoryRecord:
    """Uniform time series of one leader-follower episode."""

    step: float
    leader_x: np.ndarray
    leader_v: np.ndarray
    follower_x: np.ndarray
    follower_v: np.ndarray
    leader_id: str = "leader"
    follower_id: str = "follower"

    def __post_init__(self):
        n = len(self.leader_x)
        if not (len(self.leader_v) == len(self.follower_x) == len(self.follower_v) == n):
            raise ValueError("series lengths must match")
        if n < 2:
            raise ValueError("record too short")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if np.any(self.spacing <= 0.0):
            raise ValueError("recorded spacing must stay positive")

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.leader_x) - np.asarray(self.follower_x)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.leader_x)) * self.step


@dataclass(frozen=True)
class CalibrationConfig:
    population: int = 200
    generations: int = 200
    crossover_prob: float = 0.95
    mutation_prob: float = 0.05
    tournament_size: int = 3
    blend_alpha: float = 0.5
    elite: int = 1
    seed: int = 0
    objective: str = "relative_spacing_rms"  # or spacing_rmse | speed_rmse
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(PARAM_BOUNDS))

    def __post_init__(self):
        if not (0.0 <= self.crossover_prob <= 1.0 and 0.0 <= self.mutation_prob <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        for name, (lo, hi) in self.bounds.items():
            if lo >= hi:
                raise ValueError(f"empty bound range for {name}")


@dataclass
class CalibrationResult:
    best_params: LcmParams
    objective: float
    history: list[float]           # per-generation best (non-increasing)
    evaluated_genes: int
    record_count: int


def params_from_genes(genes: Sequence[float]) -> LcmParams:
    kw = dict(zip(PARAM_NAMES, (float(g) for g in genes)))
    return LcmParams(**kw)


def simulate_follower(params: LcmParams, record: TrajectoryRecord) -> dict[str, np.ndarray]:
    """Replay the recorded leader with an LCM follower.

    The follower starts from the record's first state; the reaction delay is
    resolved against interpolated history seeded with steady pre-record
    motion. A simulated collision truncates the run and is flagged.
    """
    dt = record.step
    n = len(record.leader_x)
    tau = params.reaction_time
    lead_x = np.asarray(record.leader_x, dtype=float)
    lead_v = np.asarray(record.leader_v, dtype=float)

    def leader_state(t: float) -> tuple[float, float]:
        if t <= 0.0:
            return lead_x[0] + lead_v[0] * t, lead_v[0]
        idx = min(int(t / dt), n - 2)
        w = t / dt - idx
        return ((1 - w) * lead_x[idx] + w * lead_x[idx + 1],
                (1 - w) * lead_v[idx] + w * lead_v[idx + 1])

    x = np.empty(n)
    v = np.empty(n)
    a = np.zeros(n)
    x[0] = float(record.follower_x[0])
    v[0] = float(record.follower_v[0])

    def follower_state(t: float) -> tuple[float, float]:
        if t <= 0.0:
            return x[0] + v[0] * t, v[0]
        idx = min(int(t / dt), n - 2)
        w = t / dt - idx
        return (1 - w) * x[idx] + w * x[idx + 1], (1 - w) * v[idx] + w * v[idx + 1]

    collided = False
    from .carfollow import _accel_scalar

    for i in range(n - 1):
        t = i * dt
        fx, fv = (x[i], v[i]) if tau == 0.0 else _interp_past(x, v, i, tau, dt)
        lx, lv = leader_state(t - tau)
        s = lx - fx
        if s <= 0.0:
            collided = True
            x[i + 1:] = x[i]
            v[i + 1:] = 0.0
            break
        acc = _accel_scalar(fv, lv, s, params.max_accel,
                            params.own_emergency_decel,
                            params.leader_emergency_decel,
                            params.reaction_time, params.desired_speed,
                            params.leader_length)
        acc = min(max(acc, -8.0), 8.0)
        a[i] = acc
        v[i + 1] = max(v[i] + acc * dt, 0.0)
        x[i + 1] = x[i] + v[i + 1] * dt
        if lead_x[i + 1] - x[i + 1] <= 0.0:
            collided = True
            x[i + 1:] = x[i + 1]
            v[i + 1:] = 0.0
            break
    return {"x": x, "v": v, "a": a, "spacing": lead_x - x, "collided": collided}


def _interp_past(x: np.ndarray, v: np.ndarray, i: int, tau: float, dt: float
                 ) -> tuple[float, float]:
    """Follower state tau seconds before step i, extrapolating steadily
    before the record start."""
    t_q = i * dt - tau
    if t_q <= 0.0:
        return x[0] + v[0] * t_q, v[0]
    idx = int(t_q / dt)
    w = t_q / dt - idx
    return (1 - w) * x[idx] + w * x[idx + 1], (1 - w) * v[idx] + w * v[idx + 1]


def calibration_objective(params: LcmParams, record: TrajectoryRecord,
                          kind: str = "relative_spacing_rms") -> float:
    """Non-negative fit error; 0 iff the replay reproduces the record."""
    sim = simulate_follower(params, record)
    obs = record.spacing
    if sim["collided"]:
        return _COLLISION_PENALTY
    if kind == "relative_spacing_rms":
        err = (sim["spacing"] - obs) / obs
    elif kind == "spacing_rmse":
        err = sim["spacing"] - obs
    elif kind == "speed_rmse":
        err = sim["v"] - np.asarray(record.follower_v)
    else:
        raise ValueError(f"unknown objective kind {kind!r}")
    return float(np.sqrt(np.mean(err**2)))


def genetic_calibrate(records: Sequence[TrajectoryRecord],
                      config: Optional[CalibrationConfig] = None,
                      fitness: Optional[Callable[[LcmParams], float]] = None
                      ) -> CalibrationResult:
    """Real-coded GA over the parameter box; deterministic under the seed.

    The default fitness averages the configured objective over the records.
    """
    cfg = config or CalibrationConfig()
    if not records and fitness is None:
        raise ValueError("need at least one record")
    names = list(PARAM_NAMES)
    lo = np.array([cfg.bounds[n][0] for n in names])
    hi = np.array([cfg.bounds[n][1] for n in names])
    rng = np.random.default_rng(cfg.seed)

    def evaluate(genes: np.ndarray) -> float:
        p = params_from_genes(genes)
        if fitness is not None:
            return float(fitness(p))
        return float(np.mean([calibration_objective(p, r, cfg.objective) for r in records]))

    pop = lo + rng.random((cfg.population, len(names))) * (hi - lo)
    fit = np.array([evaluate(g) for g in pop])
    evaluated = cfg.population
    history = [float(fit.min())]

    for _ in range(cfg.generations):
        order = np.argsort(fit, kind="stable")
        elite = pop[order[: cfg.elite]].copy()
        elite_fit = fit[order[: cfg.elite]].copy()

        def pick() -> np.ndarray:
            idx = rng.integers(0, cfg.population, size=cfg.tournament_size)
            return pop[idx[np.argmin(fit[idx])]]

        children = np.empty_like(pop)
        for k in range(0, cfg.population, 2):
            p1, p2 = pick(), pick()
            if rng.random() < cfg.crossover_prob:
                span = np.abs(p1 - p2)
                c_lo = np.minimum(p1, p2) - cfg.blend_alpha * span
                c_hi = np.maximum(p1, p2) + cfg.blend_alpha * span
                children[k] = rng.uniform(c_lo, c_hi)
                children[min(k + 1, cfg.population - 1)] = rng.uniform(c_lo, c_hi)
            else:
                children[k] = p1
                children[min(k + 1, cfg.population - 1)] = p2
        mask = rng.random(children.shape) < cfg.mutation_prob
        children = np.where(mask, lo + rng.random(children.shape) * (hi - lo), children)
        children = np.clip(children, lo, hi)

        children[: cfg.elite] = elite
        child_fit = np.empty(cfg.population)
        child_fit[: cfg.elite] = elite_fit
        for k in range(cfg.elite, cfg.population):
            child_fit[k] = evaluate(children[k])
        evaluated += cfg.population - cfg.elite
        pop, fit = children, child_fit
        # single-elite survival keeps the per-generation best non-increasing
        history.append(float(fit.min()))

    best_idx = int(np.argmin(fit))
    best = params_from_genes(pop[best_idx])
    return CalibrationResult(best, float(fit[best_idx]), history, evaluated, len(records))


def summarize_results(results: Sequence[CalibrationResult]) -> dict:
    """Cross-record parameter distribution (quantiles and mean per gene)."""
    table = {}
    for name in PARAM_NAMES:
        vals = np.array([getattr(r.best_params, name) for r in results])
        table[name] = {
            "q25": float(np.quantile(vals, 0.25)),
            "q50": float(np.quantile(vals, 0.50)),
            "q75": float(np.quantile(vals, 0.75)),
            "mean": float(vals.mean()),
        }
    return {
        "record_count": len(results),
        "parameters": table,
        "objectives": [r.objective for r in results],
    }


def write_calibration_json(results: Sequence[CalibrationResult], path,
                           config: Optional[CalibrationConfig] = None) -> None:
    payload = {
        "summary": summarize_results(results),
        "per_record": [
            {
                "objective": r.objective,
                "params": {n: getattr(r.best_params, n) for n in PARAM_NAMES},
                "generations": len(r.history) - 1,
            }
            for r in results
        ],
    }
    if config is not None:
        payload["config"] = {
            "population": config.population,
            "generations": config.generations,
            "crossover_prob": config.crossover_prob,
            "mutation_prob": config.mutation_prob,
            "seed": config.seed,
            "objective": config.objective,
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
