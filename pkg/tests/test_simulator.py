import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btfuzz import library
from btfuzz.behavior import BehaviorTree, leaf, sequence
from btfuzz.errors import ScenarioUnboundVariables
from btfuzz.geometry import box_corners
from btfuzz.lanes import straight_road
from btfuzz.scenario import AgentSpec, EgoSpec, Scenario, bind, sample
from btfuzz.simulator import (A_MAX, A_MIN, Body, EgoParams, WorldState, ego_controller, find_leader,
                              idm_acceleration, run, time_to_collision)

ROAD = straight_road(2, 1000.0, 3.5)


def agent(pid, lane, s, speed, *leaves, **kw):
    tree = BehaviorTree(sequence("r", list(leaves) or [leaf("k", "cruise")]), pid)
    return AgentSpec(pid, lane, s, speed, tree=tree, **kw)


def ego(s=50.0, speed=20.0, lane="L0"):
    return EgoSpec("ego", lane, s, speed, kind="ego")


def col(trace, pid, name):
    idx = ("t", "x", "y", "heading", "speed", "accel", "lane", "s", "d").index(name)
    return np.array([r[idx] for r in trace.rows[pid]])


def world(bodies_specs, t=0.0, lane_map=ROAD):
    bodies = {}
    for spec in bodies_specs:
        b = Body(spec, lane_map)
        b.refresh(lane_map)
        if spec.id == "ego":
            b.set_speed = spec.speed
        bodies[spec.id] = b
    return WorldState(t, bodies, lane_map, {})


# --------------------------------------------------------------------------
# loop basics

def test_empty_scene():
    tr = run(Scenario(ROAD, [], None, 0.1, 5.0))
    assert tr.events == [] and math.isinf(tr.min_dist)
    assert len(tr) == 51 and tr.termination == "horizon"


def test_free_ego_runs_to_the_horizon():
    tr = run(Scenario(ROAD, [], ego(), 0.1, 5.0))
    assert len(tr) == 51
    assert np.allclose(col(tr, "ego", "speed"), 20.0)
    assert tr.events == []


def test_cut_in_with_hard_braking_hits_the_ego():
    cut = agent("a", "L1", 58.0, 20.0,
                leaf("c", "changelane", direction="right", offset=3.5, duration=2.0, end_speed=8.0),
                leaf("k", "cruise"))
    tr = run(Scenario(ROAD, [cut], ego(), 0.1, 20.0))
    hits = tr.events_of("collision")
    assert tr.termination == "collision"
    assert len(hits) == 1 and set(hits[0]["participants"]) == {"ego", "a"}
    assert len(tr) < 201 and tr.times[-1] == pytest.approx(hits[0]["t"])
    assert tr.min_dist == 0.0


def test_collisions_can_be_run_through():
    fast = agent("b", "L0", 10.0, 30.0)
    tr = run(Scenario(ROAD, [fast], ego(), 0.1, 8.0), stop_on_collision=False)
    assert tr.termination == "horizon" and len(tr) == 81
    assert len(tr.events_of("collision")) > 1


def test_runs_are_deterministic():
    scen = bind(sample(library.construction_cut_in(), [0.1, 0.4, 0.2, 0.3]))
    a, b = run(scen), run(scen)
    assert a.rows == b.rows and a.events == b.events and a.events_json() == b.events_json()


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": 0.25}, {"horizon": 0.0}, {"horizon": 301.0}])
def test_run_rejects_bad_steps(kw):
    with pytest.raises(ValueError):
        run(Scenario(ROAD, [], None), **kw)


def test_run_rejects_unbound_scenarios():
    with pytest.raises(ScenarioUnboundVariables):
        run(library.construction_cut_in())


def test_csv_export():
    tr = run(Scenario(ROAD, [], ego(), 0.1, 1.0))
    lines = tr.to_csv("ego").splitlines()
    assert lines[0] == "t,x,y,heading,speed,accel,lane"
    assert len(lines) == 12
    assert lines[1].split(",")[0] == "0.0" and lines[1].endswith(",L0")


# --------------------------------------------------------------------------
# ego controller

def test_idm_reference_value():
    assert idm_acceleration(20.0, 25.0, 200.0, 0.0, EgoParams()) == pytest.approx(1.1296, abs=1e-12)
    assert idm_acceleration(20.0, 25.0, None, 0.0, EgoParams()) == pytest.approx(2.0 * (1 - 0.8 ** 4))


def test_free_lane_accelerates_toward_set_speed():
    w = world([EgoSpec("ego", "L0", 50.0, 20.0, kind="ego", set_speed=25.0)])
    w.bodies["ego"].set_speed = 25.0
    cmd = ego_controller(w)
    assert cmd.accel == pytest.approx(1.1808, abs=1e-12)  # 2 (1 - 0.8^4)
    assert cmd.d == 0.0


def test_emergency_brake_below_ttc_threshold():
    w = world([ego(50.0, 20.0), AgentSpec("a", "L0", 60.0, 10.0)])
    gap, v_lead, lead = find_leader(w)
    assert lead == "a" and gap == pytest.approx(10.0 - 4.6)
    assert time_to_collision(gap, 20.0, v_lead) < 1.2
    assert ego_controller(w).accel == -8.0


def test_leader_in_the_other_lane_is_ignored():
    w = world([ego(), AgentSpec("a", "L1", 60.0, 0.0)])
    assert find_leader(w) is None


def test_obstacle_in_lane_is_a_standing_leader():
    lane_map = straight_road(2, 1000.0, 3.5, obstacles={"box": [(100, -1), (105, -1), (105, 1), (100, 1)]})
    w = world([ego()], lane_map=lane_map)
    assert find_leader(w) == (pytest.approx(100.0 - 50.0 - 2.3), 0.0, "box")


def test_time_to_collision():
    assert time_to_collision(10.0, 20.0, 15.0) == 2.0
    assert math.isinf(time_to_collision(10.0, 15.0, 20.0))
    assert time_to_collision(-1.0, 20.0, 10.0) == 0.0


def test_ego_stops_behind_a_standing_car():
    tr = run(Scenario(ROAD, [AgentSpec("a", "L0", 200.0, 0.0)], ego(), 0.1, 40.0))
    assert tr.events_of("collision") == []
    assert col(tr, "ego", "speed")[-1] < 0.05
    assert 0.0 < tr.min_dist < 5.0


# --------------------------------------------------------------------------
# dynamics limits

@settings(max_examples=30, deadline=None)
@given(u=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_speed_and_acceleration_limits(u):
    tr = run(bind(sample(library.construction_cut_in(), u)))
    for pid in tr.participants:
        assert np.all(col(tr, pid, "speed") >= 0.0)
        a = col(tr, pid, "accel")
        assert np.all(a >= A_MIN - 1e-9) and np.all(a <= A_MAX + 1e-9)


def test_impossible_plan_is_clamped():
    # 10 m/s more within one second needs more than the acceleration limit
    tr = run(Scenario(ROAD, [agent("a", "L0", 50.0, 10.0, leaf("c", "cruise", speed=20.0, duration=1.0))],
                      None, 0.1, 2.0))
    assert col(tr, "a", "accel").max() == pytest.approx(A_MAX)
    assert col(tr, "a", "speed")[10] < 20.0


def test_lane_change_moves_the_lane_id_by_one():
    tr = run(Scenario(ROAD, [agent("a", "L0", 50.0, 20.0, leaf(
        "c", "changelane", direction="left", offset=3.5, duration=3.0, end_speed=20.0))], None, 0.1, 4.0))
    lanes = [r[6] for r in tr.rows["a"]]
    assert lanes[0] == "L0" and lanes[-1] == "L1"
    assert sorted(set(lanes)) == ["L0", "L1"]


# --------------------------------------------------------------------------
# monitors

def test_driving_on_the_lane_line_for_the_whole_run():
    tr = run(Scenario(ROAD, [agent("a", "L0", 50.0, 20.0, d=1.75)], None, 0.1, 6.0))
    (ev,) = tr.events_of("line_pressure")
    assert ev["participants"] == ["a"]
    assert (ev["start"], ev["end"]) == pytest.approx((0.0, 6.0))
    assert ev["duration"] == pytest.approx(6.0)


def test_one_second_of_hard_braking_is_one_episode():
    end = [0.0, 16.0, -4.0, 0.0, 0.0, 0.0]
    a = agent("a", "L0", 50.0, 20.0, leaf("f", "follow_log", duration=1.0, end=end), accel=-4.0)
    tr = run(Scenario(ROAD, [a], None, 0.1, 1.0))
    (ev,) = tr.events_of("harsh")
    assert ev["duration"] == pytest.approx(1.0)
    assert ev["peak_accel"] == pytest.approx(4.0)


def test_short_harsh_spike_is_not_an_episode():
    end = [0.0, 18.8, 0.0, 0.0, 0.0, 0.0]
    a = agent("a", "L0", 50.0, 20.0, leaf("f", "follow_log", duration=0.3, end=end))
    tr = run(Scenario(ROAD, [a], None, 0.1, 2.0))
    assert max(abs(col(tr, "a", "accel"))) > 3.5
    assert tr.events_of("harsh") == []


def test_off_road_is_reported_once():
    tr = run(Scenario(ROAD, [agent("a", "L0", 50.0, 20.0, d=-3.0)], None, 0.1, 2.0))
    (ev,) = tr.events_of("off_road")
    assert ev == {"type": "off_road", "participants": ["a"], "start": 0.0}


def _boundary(poly, per_edge=60):
    pts = []
    for i in range(4):
        a, b = np.array(poly[i]), np.array(poly[(i + 1) % 4])
        pts.append(a + np.linspace(0, 1, per_edge)[:, None] * (b - a))
    return np.vstack(pts)


def test_min_distance_matches_brute_force():
    overtaker = agent("a", "L1", 20.0, 26.0)
    tr = run(Scenario(ROAD, [overtaker], ego(), 0.1, 8.0))
    best = math.inf
    (le, we), (la, wa) = tr.sizes["ego"], tr.sizes["a"]
    for re, ra in zip(tr.rows["ego"], tr.rows["a"]):
        pe = _boundary(box_corners(re[1], re[2], re[3], le, we))
        pa = _boundary(box_corners(ra[1], ra[2], ra[3], la, wa))
        best = min(best, np.sqrt(((pe[:, None] - pa[None]) ** 2).sum(-1)).min())
    assert tr.min_dist <= best + 1e-9
    assert tr.min_dist == pytest.approx(best, abs=0.03)
    assert tr.min_dist == pytest.approx(3.5 - 1.9, abs=1e-6)  # side by side in adjacent lanes


def test_summary_and_event_json():
    tr = run(Scenario(ROAD, [agent("a", "L0", 50.0, 20.0, d=1.75)], None, 0.1, 1.0))
    s = tr.summary()
    assert s["min_dist"] is None and s["steps"] == 11 and s["termination"] == "horizon"
    assert '"line_pressure"' in tr.events_json()
