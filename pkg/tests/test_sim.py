import math

import numpy as np
import pytest

from reachpf import sim
from reachpf.dynamics import Footprint, NoiseBounds, ObstacleState
from reachpf.potential import Gains


def empty_scenario(**over):
    kw = dict(name="empty", robot_start=[0, 0], goal=[10, 0], obstacles=[],
              gains=Gains(1.0, 1.0, 0.5), horizon=10.0, max_speed=1.0, dt=0.1,
              goal_tolerance=0.05)
    kw.update(over)
    return sim.Scenario(**kw)


def one_obstacle(position, heading=0.0, speed=0.0, bounds=NoiseBounds(), footprint=None):
    return sim.ObstacleSpec(ObstacleState(position, heading, speed),
                            bounds, footprint or Footprint())


def test_zero_obstacles_reaches_goal_straight():
    tr = sim.run(empty_scenario(), sim.EXACT_PF)
    assert tr.status == sim.GOAL_REACHED
    assert tr.path_length == pytest.approx(10.0, abs=0.06)
    assert np.allclose(np.array(tr.robot)[:, 1], 0.0)
    assert len(tr) == round(tr.times[-1] / 0.1) + 1


def test_immediate_violation():
    s = empty_scenario(obstacles=[one_obstacle([0.2, 0.0])])
    tr = sim.run(s, sim.EXACT_PF)
    assert tr.status == sim.SAFETY_VIOLATION
    assert len(tr) == 1
    assert tr.commands[0] == (0.0, 0.0)


def test_timeout_and_record_count():
    s = empty_scenario(time_budget=2.0)
    tr = sim.run(s, sim.EXACT_PF)
    assert tr.status == sim.TIMEOUT
    assert len(tr) == 21
    assert tr.times[-1] == pytest.approx(2.0)


def test_holds_position_until_first_report():
    s = empty_scenario(obstacles=[one_obstacle([5.0, 5.0])], info_times=[1.0])
    tr = sim.run(s, sim.EXACT_PF)
    cmds = np.array(tr.commands)
    assert np.all(cmds[:10] == 0.0)
    assert np.any(cmds[10] != 0.0)
    ages = tr.column(0, 2)
    assert np.all(np.isnan(ages[:10])) and ages[10] == 0.0


def test_determinism_byte_identical():
    s = sim.build_ugv_scenario("crossing", 3)
    a = sim.trace_to_csv(sim.run(s, sim.EXACT_PF))
    b = sim.trace_to_csv(sim.run(s, sim.EXACT_PF))
    assert a == b


def test_staleness_commands_ignore_true_motion():
    """With one broadcast the controller sees only stale data; noise draws
    move the obstacles but not the robot."""
    s = sim.build_ugv_scenario("crossing", 0)
    a = sim.run(s, sim.EXACT_PF, seed=1)
    b = sim.run(s, sim.EXACT_PF, seed=2)
    n = min(len(a), len(b))
    assert a.commands[:n] == b.commands[:n]
    assert a.column(0, 0)[5] != b.column(0, 0)[5]


def test_fresh_reports_reset_age():
    s = sim.build_ugv_scenario("crossing", 0)
    s.info_times = [0.0, 1.0, 2.0]
    tr = sim.run(s, sim.EXACT_PF)
    ages = tr.column(0, 2)
    assert ages[20] == 0.0 and ages[40] == 0.0
    assert ages[19] == pytest.approx(0.95)


def test_random_schedule_is_seeded():
    s = empty_scenario(info_random={"start": 0.0, "min_interval": 1.0, "max_interval": 3.0})
    t1 = s.broadcast_times()
    assert t1 == s.broadcast_times()
    assert t1[0] == 0.0
    assert all(1.0 <= b - a <= 3.0 for a, b in zip(t1[1:], t1[2:]))


@pytest.mark.parametrize("family", ["ugv-cross", "ugv-parallel", "headon"])
def test_monitor_tube_distance_lower_bounds_true_distance(family):
    """The true obstacle always lies in its tube, so the tube is never farther."""
    for seed in range(3):
        s = sim.build_family(family, seed)
        tr = sim.run(s, sim.EXACT_PF)
        for i in range(tr.n_obstacles):
            tube, true = tr.column(i, 3), tr.column(i, 4)
            ok = np.array(tr.times) <= s.horizon
            assert np.all(tube[ok] <= true[ok] + 1e-9)


def test_uuv_monitor_and_conservatism():
    s = sim.build_uuv_scenario(1)
    tr = sim.run(s, sim.EXACT_PF)
    assert tr.status == sim.GOAL_REACHED
    for i in range(tr.n_obstacles):
        assert np.all(tr.column(i, 3) <= tr.column(i, 4) + 1e-9)
    tube_min, true_min = sim.overall_minima(tr)
    assert tube_min >= s.gains.delta
    assert true_min >= tube_min


def test_noise_free_tube_shrinks_margin():
    s = sim.build_uuv_scenario(0)
    a = sim.trace_summary(sim.run(s, sim.EXACT_PF))
    b = sim.trace_summary(sim.run(s, sim.NOISE_FREE_PF))
    assert b["min_dist_tube"] < a["min_dist_tube"]


def test_horizon_expiry_is_flagged():
    s = empty_scenario(obstacles=[one_obstacle([50.0, 50.0])], horizon=1.0)
    tr = sim.run(s, sim.EXACT_PF)
    assert tr.status == sim.GOAL_REACHED and tr.horizon_expired


def test_uuv_builder_constants():
    s = sim.build_uuv_scenario(4)
    assert len(s.obstacles) == 8
    lane_a = [o for o in s.obstacles if o.initial.position[1] == 57.5]
    lane_b = [o for o in s.obstacles if o.initial.position[1] == 172.5]
    assert len(lane_a) == len(lane_b) == 4
    assert all(o.initial.heading == 0.0 for o in lane_a)
    assert all(o.initial.heading == math.pi for o in lane_b)
    xs = sorted(o.initial.position[0] for o in lane_a)
    assert np.allclose(np.diff(xs), 450.0)
    o = s.obstacles[0]
    assert o.initial.speed == 5.0
    assert (o.bounds.speed_bound, o.bounds.heading_bound) == (0.05, 0.01)
    assert o.footprint.length == 75.0 and o.footprint.width == 25.0
    assert s.gains == Gains(5.0, 15000.0, 5.0)
    assert s.horizon == 600.0 and s.max_speed == 2.5
    assert s.robot_start.tolist() == [0.0, -500.0]
    assert s.broadcast_times() == [0.0]
    assert s.time_budget == pytest.approx(3 * 780 / 2.5)
    # lanes differ across seeds, same seed reproduces
    assert sim.scenario_to_dict(s) == sim.scenario_to_dict(sim.build_uuv_scenario(4))
    assert sim.scenario_to_dict(s) != sim.scenario_to_dict(sim.build_uuv_scenario(5))


def test_ugv_builder_constants():
    for case in ("crossing", "parallel"):
        s = sim.build_ugv_scenario(case)
        assert s.goal.tolist() == [2.5, 0.0]
        assert s.gains == Gains(5.0, 10.0, 0.51)
        assert s.horizon == 8.0 and s.max_speed == 0.5
        assert all(o.initial.speed == 0.5 for o in s.obstacles)
    headings = [o.initial.heading for o in sim.build_ugv_scenario("crossing").obstacles]
    assert headings[0] == -headings[1]
    headings = [o.initial.heading for o in sim.build_ugv_scenario("parallel").obstacles]
    assert headings[0] == headings[1]
    with pytest.raises(ValueError):
        sim.build_ugv_scenario("diagonal")
    with pytest.raises(ValueError):
        sim.build_family("mars", 0)


def test_escape_on_controller_breach():
    # the controller's own tube already touches the robot; it must back away
    s = empty_scenario(obstacles=[one_obstacle([1.0, -2.0], math.pi / 2, 1.0,
                                               NoiseBounds(0.0, 0.3))],
                       robot_start=[1.2, 0.0], goal=[1.2, 5.0], dt=0.05,
                       gains=Gains(1.0, 0.1, 0.3), time_budget=1.0)
    tr = sim.run(s, sim.EXACT_PF)
    assert tr.controller_breaches > 0


def test_run_argument_checks():
    s = empty_scenario()
    with pytest.raises(ValueError):
        sim.run(s, "teleport")
    with pytest.raises(ValueError):
        sim.run(s, sim.NN)


def test_scenario_validation():
    with pytest.raises(ValueError, match="dt"):
        empty_scenario(dt=0.0)
    with pytest.raises(ValueError, match="info_times"):
        empty_scenario(info_times=[2.0, 1.0])


def test_scenario_file_round_trip(tmp_path):
    for family in ("uuv", "ugv-cross", "headon"):
        s = sim.build_family(family, 2)
        path = tmp_path / f"{family}.json"
        sim.save_scenario(s, path)
        back = sim.load_scenario(path)
        assert sim.scenario_to_dict(back) == sim.scenario_to_dict(s)
        assert sim.trace_to_csv(sim.run(back, sim.EXACT_PF)) == \
            sim.trace_to_csv(sim.run(s, sim.EXACT_PF))
        if family == "uuv":
            break
    (tmp_path / "bad.json").write_text('{"schema": "reachpf-scenario", "version": 7}')
    with pytest.raises(ValueError, match="version"):
        sim.load_scenario(tmp_path / "bad.json")
    (tmp_path / "broken.json").write_text('{"schema": ')
    with pytest.raises(ValueError, match="byte"):
        sim.load_scenario(tmp_path / "broken.json")


def test_trace_csv_round_trip(tmp_path):
    tr = sim.run(sim.build_ugv_scenario("crossing", 0), sim.EXACT_PF)
    path = tmp_path / "t.csv"
    sim.write_trace(tr, path)
    cols = sim.read_trace_csv(path)
    assert cols["time"].tolist() == tr.times
    assert cols["obs1_dist_true"].tolist() == tr.column(1, 4).tolist()
    assert list(cols) == sim.trace_header(2)
    text = path.read_text().replace("robot_x", "robotx", 1)
    path.write_text(text)
    with pytest.raises(ValueError):
        sim.read_trace_csv(path)


def test_min_distance_report():
    tr = sim.run(sim.build_ugv_scenario("crossing", 0), sim.EXACT_PF)
    rep = sim.min_distance_report(tr)
    assert [r["obstacle"] for r in rep] == [0, 1]
    assert rep[1]["min_dist_true"] == tr.column(1, 4).min()
    summary = sim.trace_summary(tr, sim.EXACT_PF)
    assert summary["min_dist_tube"] == min(r["min_dist_tube"] for r in rep)
    with pytest.raises(ValueError):
        sim.min_distance_report(sim.Trace(1))


def test_headon_dynamic_minimum():
    s = sim.build_headon_scenario(0)
    tube = sim.run(s, sim.EXACT_PF)
    point = sim.run(s, sim.POINT_PF)
    assert tube.status == sim.GOAL_REACHED
    assert tube.times[-1] <= s.time_budget
    assert tube.path_length < point.path_length


@pytest.fixture(scope="module")
def ugv_model():
    from reachpf import nn, presets
    ds = nn.generate_training_data(presets.ugv_grid(0.3))
    return nn.fit(ds, nn.TrainConfig(epochs=3, hidden=[8, 8])).mlp


def test_nn_controller_past_horizon_is_out_of_domain(ugv_model):
    s = sim.build_ugv_scenario("parallel", 0)
    tr = sim.run(s, sim.NN, ugv_model)
    assert tr.status == sim.OUT_OF_DOMAIN
    assert tr.times[-1] > s.horizon
    assert "horizon" in tr.message


def test_nn_run_is_deterministic(ugv_model):
    s = sim.build_ugv_scenario("crossing", 1)
    assert sim.trace_to_csv(sim.run(s, sim.NN, ugv_model)) == \
        sim.trace_to_csv(sim.run(s, sim.NN, ugv_model))
