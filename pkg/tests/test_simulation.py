import math

import numpy as np
import pytest

from lanechange import simulation as sim
from lanechange.cost import CostWeights
from lanechange.trajectory import build_symmetric_trajectory

RAW_W = CostWeights(comfort_normalizer=1.0, efficiency_normalizer=1.0)


def small_scenario(**kw):
    base = dict(duration=40.0, lc_start=10.0, hv_count=3, hv_spacing=40.0,
                weights=RAW_W, hv_weight_mode="uniform")
    base.update(kw)
    return sim.Scenario(**base)


def test_baseline_run_constant_speeds_when_steady():
    sc = small_scenario(hv_spacing="steady")
    log = sim.run_scenario(sc, None)
    drift = np.abs(log.v - log.v[0]).max()
    assert drift < 0.05  # near-steady: the model has no exact equilibrium at the desired speed
    assert np.all(np.diff(log.av["x"]) > 0)


def test_run_determinism():
    sc = small_scenario()
    traj = build_symmetric_trajectory(sc.av_start_speed, 4.0, 101.0, sc.lane_width)
    a = sim.run_scenario(sc, traj)
    b = sim.run_scenario(sc, traj)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(a.av["x"], b.av["x"])


def test_cutin_disturbs_first_follower():
    sc = small_scenario(hv_spacing="steady", duration=60.0)
    traj = build_symmetric_trajectory(25.0, 5.0, 125.0, 3.5)
    log = sim.run_scenario(sc, traj)
    i0 = int(sc.lc_start / sc.step)
    hv1 = log.ids.index("HV1")
    assert log.v[i0:, hv1].min() < 23.0
    hw = log.headway[i0:, hv1]
    assert hw[np.isfinite(hw)].min() < 1.0
    assert log.events["handoff_s"] == pytest.approx(sc.lc_start + 2.5, abs=sc.step)


def test_handoff_mode_lc_start():
    sc = small_scenario(handoff="lc_start")
    traj = build_symmetric_trajectory(25.0, 5.0, 125.0, 3.5)
    log = sim.run_scenario(sc, traj)
    assert log.events["handoff_s"] == pytest.approx(sc.lc_start, abs=1e-9)


def test_av_reverts_to_car_following_after_lc():
    sc = small_scenario(duration=60.0, av_desired_speed=20.0)
    traj = build_symmetric_trajectory(25.0, 5.0, 125.0, 3.5)
    log = sim.run_scenario(sc, traj)
    # after the maneuver the lane changer is a plain LCM vehicle chasing its
    # own desired speed
    assert log.av["vx"][-1] == pytest.approx(20.0, abs=0.3)
    assert log.av["lane"][-1] == 1.0


def test_collision_abort_with_hopeless_gap():
    # slow cut-in right on the follower's bumper: spacing collapses
    sc = small_scenario(initial_gap=0.5, hv_spacing="steady", handoff="lc_start",
                        av_start_speed=10.0, av_desired_speed=10.0, duration=60.0)
    traj = build_symmetric_trajectory(10.0, 8.0, 85.0, 3.5)
    with pytest.raises(sim.CollisionStateError):
        sim.run_scenario(sc, traj)


# -- Edie region metrics ------------------------------------------------------

def test_edie_from_table_totals():
    m = sim.metrics_from_totals(92.70, 1786.56, 3375.0)
    assert m.flow_veh_h == pytest.approx(1905.666, rel=5e-4)
    assert m.speed_km_h == pytest.approx(69.381, rel=5e-4)
    assert m.density_veh_km == pytest.approx(27.467, rel=5e-4)
    m2 = sim.metrics_from_totals(96.30, 1758.72, 3375.0)
    assert m2.flow_veh_h == pytest.approx(1875.963, rel=5e-4)
    assert m2.speed_km_h == pytest.approx(65.746, rel=5e-4)
    assert m2.density_veh_km == pytest.approx(28.533, rel=5e-4)


def test_edie_identity_q_equals_kv():
    rng = np.random.default_rng(1)
    for _ in range(50):
        t = rng.uniform(5, 200)
        d = rng.uniform(100, 4000)
        area = rng.uniform(500, 10000)
        m = sim.metrics_from_totals(t, d, area)
        assert m.flow_veh_h == pytest.approx(m.density_veh_km * m.speed_km_h, rel=1e-9)


def test_edie_single_vehicle_full_crossing():
    sc = small_scenario(hv_count=1, hv_spacing="steady", duration=40.0)
    log = sim.run_scenario(sc, None)
    x0 = float(log.x[0, 0])
    region = sim.EdieRegion(x0 + 10.0, 225.0, 0.0, 40.0)
    m = sim.edie_metrics(log, region)
    assert m.total_time_s == pytest.approx(9.0, abs=0.02)
    assert m.total_distance_m == pytest.approx(225.0, abs=0.2)
    assert m.speed_km_h == pytest.approx(90.0, abs=0.3)


def test_edie_region_additivity():
    sc = small_scenario(duration=60.0)
    traj = build_symmetric_trajectory(25.0, 5.0, 125.0, 3.5)
    log = sim.run_scenario(sc, traj)
    x0 = float(log.x[0, 0]) - 50.0
    whole = sim.EdieRegion(x0, 300.0, 5.0, 30.0)
    first = sim.EdieRegion(x0, 300.0, 5.0, 12.0)
    second = sim.EdieRegion(x0, 300.0, 17.0, 18.0)
    mw = sim.edie_metrics(log, whole)
    m1 = sim.edie_metrics(log, first)
    m2 = sim.edie_metrics(log, second)
    assert m1.total_time_s + m2.total_time_s == pytest.approx(mw.total_time_s, abs=1e-6)
    assert m1.total_distance_m + m2.total_distance_m == pytest.approx(mw.total_distance_m, abs=1e-6)


def test_edie_empty_region():
    sc = small_scenario(duration=20.0)
    log = sim.run_scenario(sc, None)
    m = sim.edie_metrics(log, sim.EdieRegion(-1e7, 10.0, 0.0, 5.0))
    assert m.empty
    assert m.flow_veh_h == 0.0


def test_edie_step_mode_quantizes_time():
    sc = small_scenario(duration=30.0, hv_count=1, hv_spacing="steady")
    log = sim.run_scenario(sc, None)
    x0 = float(log.x[0, 0])
    region = sim.EdieRegion(x0 + 7.3, 100.0, 0.0, 30.0)
    m = sim.edie_metrics(log, region, clip="step")
    assert m.total_time_s == pytest.approx(round(m.total_time_s, 1), abs=1e-9)


# -- total travel time --------------------------------------------------------

def test_ttt_identical_logs_zero():
    sc = small_scenario()
    log = sim.run_scenario(sc, None)
    res = sim.ttt_difference(log, log, cross_section=float(log.x[0, 0]) + 100.0)
    assert res.delta_s == pytest.approx(0.0, abs=1e-12)


def test_ttt_detects_delay():
    sc = small_scenario(duration=120.0, hv_spacing="steady")
    base = sim.run_scenario(sc, None)
    traj = build_symmetric_trajectory(25.0, 5.0, 125.0, 3.5)
    log = sim.run_scenario(sc, traj)
    res = sim.ttt_difference(log, base)
    assert res.delta_s > 0.05
    assert "HV1" in res.per_vehicle


def test_ttt_excludes_never_crossing():
    sc = small_scenario(duration=20.0)
    log = sim.run_scenario(sc, None)
    res = sim.ttt_difference(log, log, cross_section=float(log.x[0, 0]) + 1e6)
    assert set(res.excluded) == set(log.ids) | {"AV"}
    assert res.delta_s == 0.0


# -- heatmap export -----------------------------------------------------------

def test_heatmap_constant_field():
    sc = small_scenario(hv_spacing="steady", duration=20.0)
    log = sim.run_scenario(sc, None)
    rows = sim.export_heatmap_data(log)
    speeds = {r[3] for r in rows}
    assert max(speeds) - min(speeds) < 0.1


def test_heatmap_difference_with_self_is_zero():
    sc = small_scenario(duration=20.0)
    log = sim.run_scenario(sc, None)
    rows = sim.export_heatmap_data(log, log)
    assert all(abs(r[5]) < 1e-12 for r in rows)


def test_log_csv_roundtrip_columns(tmp_path):
    sc = small_scenario(duration=5.0, lc_start=1.0)
    log = sim.run_scenario(sc, None)
    path = tmp_path / "log.csv"
    sim.write_log_csv(log, path)
    header = path.read_text().splitlines()[0]
    assert header == "t_s,vehicle_id,lane,x_m,v_mps,a_mps2,headway_s"
