import math
from dataclasses import replace

import numpy as np
import pytest

from lanechange import planner as pl, simulation as sim
from lanechange.cost import CostWeights
from lanechange.trajectory import build_symmetric_trajectory

RAW_W = CostWeights(omega_av=1.0, comfort_normalizer=1.0, efficiency_normalizer=1.0)
FAST = pl.PlannerConfig(t_step=0.5, xf_step=5.0, refine_maxiter=60)


def small_scenario(**kw):
    base = dict(duration=60.0, lc_start=10.0, hv_count=3, hv_spacing=40.0,
                weights=RAW_W, hv_weight_mode="uniform")
    base.update(kw)
    return sim.Scenario(**base)


@pytest.fixture(scope="module")
def ctx3():
    return sim.build_context(small_scenario())


def test_feasible_on_empty_road():
    sc = small_scenario(hv_count=0)
    ctx = sim.build_context(sc)
    traj = build_symmetric_trajectory(25.0, 5.0, 125.0, 3.5)
    ok, violations = pl.check_feasibility(traj, ctx)
    assert ok and violations == ()


def test_short_duration_violates_lateral_bounds():
    sc = small_scenario(hv_count=0)
    ctx = sim.build_context(sc)
    traj = build_symmetric_trajectory(25.0, 0.8, 20.0, 3.5)
    ok, violations = pl.check_feasibility(traj, ctx)
    assert not ok
    text = " ".join(violations)
    assert "lateral" in text
    # peak |ay| = 10*sqrt(3)/3 * D / T^2
    peak = 10.0 * math.sqrt(3.0) / 3.0 * 3.5 / 0.8**2
    assert peak > 8.0


def test_collision_infeasible_when_crossing_into_leader(ctx3):
    #候selecting a displacement that rams the first follower from ahead
    sc = ctx3.scenario
    cand = pl.evaluate_candidate(5.0, 0.65 * 25.0 * 5.0, ctx3)
    assert not cand.feasible
    assert any("collision" in v or "spacing" in v for v in cand.violations)


def test_candidate_zero_hvs_joint_is_av_total():
    sc = small_scenario(hv_count=0)
    ctx = sim.build_context(sc)
    cand = pl.evaluate_candidate(5.0, 127.0, ctx)
    b = cand.breakdown(RAW_W, ctx)
    assert b.joint_total == pytest.approx(b.av_total, abs=1e-12)
    assert b.hv_total == 0.0


def test_candidate_determinism(ctx3):
    a = pl.evaluate_candidate(4.5, 116.0, ctx3)
    b = pl.evaluate_candidate(4.5, 116.0, ctx3)
    assert a == b


def test_empty_road_optimum_keeps_longitudinal_profile():
    sc = small_scenario(hv_count=0)
    ctx = sim.build_context(sc)
    plan = pl.optimize(sc, RAW_W, FAST, ctx)
    v, T = sc.av_start_speed, plan.best.duration
    assert T == pytest.approx(FAST.t_max, abs=0.51)
    assert plan.best.x_final == pytest.approx(v * T, abs=FAST.xf_step)
    # exhaustive fine-grid oracle around the returned optimum
    joints = []
    for xf in np.arange(v * T - 10.0, v * T + 10.0 + 1e-9, 0.5):
        cand = pl.evaluate_candidate(T, float(xf), ctx, config=FAST)
        if cand.feasible:
            joints.append((cand.breakdown(RAW_W, ctx).joint_total, xf))
    best_xf = min(joints)[1]
    assert abs(best_xf - v * T) <= 0.5 + 1e-9


def test_grid_refinement_dominance(ctx3):
    grid = pl.evaluate_grid(ctx3, FAST)
    plan = pl.optimize(ctx3.scenario, RAW_W, FAST, ctx3, grid)
    feasible = [c.breakdown(RAW_W, ctx3).joint_total for c in grid if c.feasible]
    assert plan.breakdown.joint_total <= min(feasible) + 1e-12


def test_penalty_inertness(ctx3):
    cfg_a = replace(FAST, penalty=1e6)
    cfg_b = replace(FAST, penalty=1e7)
    plan_a = pl.optimize(ctx3.scenario, RAW_W, cfg_a, ctx3)
    plan_b = pl.optimize(ctx3.scenario, RAW_W, cfg_b, ctx3)
    assert plan_a.best.duration == plan_b.best.duration
    assert plan_a.best.x_final == plan_b.best.x_final


def test_returned_plan_passes_finer_feasibility(ctx3):
    plan = pl.optimize(ctx3.scenario, RAW_W, FAST, ctx3)
    ok, violations = pl.check_feasibility(plan.trajectory, ctx3, FAST, refine_factor=10)
    assert ok, violations


def test_tie_breaking_prefers_short_and_centered():
    a = (1.0, 4.0, 2.0)
    b = (1.0, 5.0, 0.0)
    c = (1.0, 4.0, 1.0)
    keys = sorted([a, b, c])
    assert keys[0] == c  # same joint: shorter duration wins, then centered


def test_monotone_tradeoff_at_grid_resolution(ctx3):
    cfg = replace(FAST, refine=False)
    grid = pl.evaluate_grid(ctx3, cfg)
    av_totals = []
    hv_totals = []
    for omega in (0.2, 0.5, 0.8, 1.0):
        w = replace(RAW_W, omega_av=omega)
        plan = pl.optimize(ctx3.scenario, w, cfg, ctx3, grid)
        b = plan.best.breakdown(RAW_W, ctx3)
        av_totals.append(b.av_total)
        hv_totals.append(b.hv_total)
    assert all(a >= b - 1e-12 for a, b in zip(av_totals, av_totals[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(hv_totals, hv_totals[1:]))


def test_no_feasible_plan_error():
    sc = small_scenario(hv_count=0, v_max=5.0, v_min=5.0)
    ctx = sim.build_context(sc)
    with pytest.raises(pl.NoFeasiblePlanError):
        pl.optimize(sc, RAW_W, FAST, ctx)


def test_sweep_single_omega_matches_optimize(ctx3):
    cfg = replace(FAST, refine=False)
    rows = pl.sweep_omega(ctx3.scenario, [1.0], cfg, ctx3)
    plan = pl.optimize(ctx3.scenario, replace(RAW_W, omega_av=1.0), cfg, ctx3)
    assert rows[0]["duration_s"] == plan.best.duration
    assert rows[0]["x_final_m"] == plan.best.x_final
    assert rows[0]["breakdown"].joint_total == pytest.approx(plan.breakdown.joint_total)


def test_sweep_rejects_bad_omega(ctx3):
    with pytest.raises(ValueError):
        pl.sweep_omega(ctx3.scenario, [0.0], FAST, ctx3)


def test_hv_prediction_shape(ctx3):
    plan = pl.optimize(ctx3.scenario, RAW_W, FAST, ctx3)
    pred = plan.hv_prediction
    assert pred["x"].shape[1] == len(ctx3.platoon)
    assert pred["t"][0] == pytest.approx(ctx3.scenario.lc_start)
    assert np.all(np.diff(pred["x"][:, 0]) > 0)
