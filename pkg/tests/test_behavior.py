import math

import numpy as np
import pytest

from btfuzz import library
from btfuzz.behavior import (AreaCondition, BehaviorNode, BehaviorTree, CombinedCondition, DistanceCondition,
                             EndsByBehaviorCondition, RelativePositionCondition, TimeCondition, TreeRunner,
                             evaluate_condition, leaf, parallel, sequence, tick, validate)
from btfuzz.errors import DanglingReference, ScenarioFormatError
from btfuzz.geometry import point_polygon_distance
from btfuzz.lanes import straight_road
from btfuzz.scenario import AgentSpec, Scenario, bind, concrete
from btfuzz.simulator import Body, WorldState, run


def make_world(t=0.0, positions=None, obstacles=None, runners=None):
    """Two-lane road with agents at (lane, s, d)."""
    lane_map = straight_road(2, 500.0, 3.5, obstacles=obstacles)
    positions = positions or {"a": ("L0", 50.0, 0.0), "b": ("L1", 80.0, 0.0)}
    bodies = {}
    for pid, (lane, s, d) in positions.items():
        b = Body(AgentSpec(pid, lane, s, 10.0, d=d), lane_map)
        b.refresh(lane_map)
        bodies[pid] = b
    return WorldState(t, bodies, lane_map, runners or {})


def one_agent(tree_root, speed=20.0, horizon=10.0, s=50.0, lane="L0", lanes=2, obstacles=None):
    lane_map = straight_road(lanes, 1000.0, 3.5, obstacles=obstacles)
    spec = AgentSpec("a", lane, s, speed, tree=BehaviorTree(tree_root, "a"))
    return run(Scenario(lane_map, [spec], None, 0.1, horizon), stop_on_collision=False)


def column(trace, pid, name):
    idx = ("t", "x", "y", "heading", "speed", "accel", "lane", "s", "d").index(name)
    return np.array([r[idx] for r in trace.rows[pid]]) if name != "lane" else [r[idx] for r in trace.rows[pid]]


# --------------------------------------------------------------------------
# conditions

def test_time_condition_fires_at_its_time():
    c = TimeCondition(3.4)
    assert not c.evaluate(make_world(3.3), "a")
    assert c.evaluate(make_world(3.4), "a")
    assert c.evaluate(make_world(0.1 * 34), "a")  # 3.4000000000000004 from accumulated steps


def test_distance_condition_is_inclusive():
    w = make_world(positions={"a": ("L0", 50.0, 0.0), "b": ("L0", 60.0, 0.0)})
    assert DistanceCondition("b", 10.0).evaluate(w, "a")
    assert not DistanceCondition("b", 9.99).evaluate(w, "a")
    assert not DistanceCondition("b", 10.0, "<").evaluate(w, "a")
    assert DistanceCondition((50.0, 3.0), 3.0).evaluate(w, "a")


def test_distance_to_obstacle_uses_the_polygon():
    zone = [(100.0, 3.0), (130.0, 3.0), (130.0, 5.0), (100.0, 5.0)]
    w = make_world(positions={"a": ("L0", 80.0, 0.0)}, obstacles={"zone": zone})
    # nearest polygon point is the corner (100, 3)
    assert DistanceCondition("zone", math.hypot(20.0, 3.0) + 1e-9).evaluate(w, "a")
    assert not DistanceCondition("zone", 20.0).evaluate(w, "a")


def test_area_condition():
    w = make_world()
    assert AreaCondition([(40, -2), (60, -2), (60, 2), (40, 2)]).evaluate(w, "a")
    assert not AreaCondition([(40, 2), (60, 2), (60, 6), (40, 6)]).evaluate(w, "a")


def test_relative_position_condition():
    w = make_world()  # a at s=50 in L0, b at s=80 in L1
    assert RelativePositionCondition("b", -30.0, comparator="<=").evaluate(w, "a")
    assert not RelativePositionCondition("b", -30.0, comparator="<").evaluate(w, "a")
    assert not RelativePositionCondition("b", 30.0).evaluate(w, "a")
    assert RelativePositionCondition("a", 30.0, 3.5, ">=").evaluate(w, "b")


def test_combined_condition():
    w = make_world(2.0)
    yes, no = TimeCondition(1.0), TimeCondition(5.0)
    assert CombinedCondition("all", [yes, yes]).evaluate(w, "a")
    assert not CombinedCondition("all", [yes, no]).evaluate(w, "a")
    assert CombinedCondition("any", [no, yes]).evaluate(w, "a")
    assert not CombinedCondition("any", [no, no]).evaluate(w, "a")


def test_ends_by_behavior_reads_completed_nodes():
    tree = BehaviorTree(sequence("root", [leaf("go", "cruise", speed=10.0, duration=0.2)]), "a")
    runner = TreeRunner(tree)
    w = make_world(runners={"a": runner})
    cond = EndsByBehaviorCondition("go")
    assert not cond.evaluate(w, "a")
    runner.completed.add("go")
    assert cond.evaluate(w, "a")
    assert EndsByBehaviorCondition("go", agent="a").evaluate(w, "b")


def test_missing_entities_raise_dangling_reference():
    w = make_world()
    for c in (DistanceCondition("ghost", 5.0), RelativePositionCondition("ghost", 0.0),
              EndsByBehaviorCondition("n", agent="ghost")):
        with pytest.raises(DanglingReference):
            evaluate_condition(c, w, "a")


def test_no_condition_means_immediately():
    assert evaluate_condition(None, make_world(), "a")


# --------------------------------------------------------------------------
# leaves through the simulator

def test_open_ended_cruise_holds_speed():
    tr = one_agent(sequence("r", [leaf("c", "cruise")]), speed=17.0)
    v = column(tr, "a", "speed")
    assert np.allclose(v, 17.0, atol=1e-9)
    assert np.allclose(column(tr, "a", "d"), 0.0)


def test_cruise_reaches_target_speed_in_its_duration():
    tr = one_agent(sequence("r", [leaf("c", "cruise", speed=25.0, duration=3.0)]), speed=20.0, horizon=5.0)
    v = column(tr, "a", "speed")
    assert v[30] == pytest.approx(25.0, abs=1e-6)
    assert np.allclose(v[30:], 25.0, atol=1e-6)
    assert np.all(np.diff(v[:31]) >= -1e-9)


def test_change_lane_moves_one_lane_in_time():
    tr = one_agent(sequence("r", [leaf("c", "changelane", direction="left", offset=3.5,
                                       duration=4.0, end_speed=22.0)]), speed=20.0, horizon=6.0)
    d, v, lanes = column(tr, "a", "d"), column(tr, "a", "speed"), column(tr, "a", "lane")
    assert d[40] == pytest.approx(3.5, abs=0.05)
    assert v[40] == pytest.approx(22.0, abs=0.1)
    assert lanes[0] == "L0" and lanes[-1] == "L1"
    assert d[-1] == pytest.approx(3.5, abs=0.05)


def test_right_lane_change_moves_toward_negative_offsets():
    tr = one_agent(sequence("r", [leaf("c", "changelane", direction="right", offset=3.5, duration=4.0,
                                       end_speed=20.0)]), lane="L1", horizon=5.0)
    assert column(tr, "a", "d")[-1] == pytest.approx(-3.5, abs=0.05)
    assert column(tr, "a", "lane")[-1] == "L0"


def test_follow_log_hits_its_end_state():
    end = [0.0, 14.0, 0.0, 1.0, 0.0, 0.0]
    tr = one_agent(sequence("r", [leaf("f", "follow_log", duration=2.0, end=end)]), speed=12.0, horizon=3.0)
    assert column(tr, "a", "speed")[20] == pytest.approx(14.0, abs=1e-6)
    assert column(tr, "a", "d")[20] == pytest.approx(1.0, abs=1e-6)


def test_merge_in_targets_the_lane_center():
    tr = one_agent(sequence("r", [leaf("m", "merge_in", lane="L1", duration=3.0)]), horizon=4.0)
    assert column(tr, "a", "d")[30] == pytest.approx(3.5, abs=1e-6)


def test_track_keeps_the_requested_gap():
    lane_map = straight_road(2, 2000.0, 3.5)
    lead = AgentSpec("lead", "L0", 100.0, 15.0, tree=BehaviorTree(sequence("r", [leaf("c", "cruise")]), "lead"))
    follower = AgentSpec("f", "L1", 60.0, 15.0,
                         tree=BehaviorTree(sequence("r", [leaf("t", "track", target="lead", gap=10.0)]), "f"))
    tr = run(Scenario(lane_map, [lead, follower], None, 0.1, 60.0))
    s_lead, s_f = column(tr, "lead", "s")[-1], column(tr, "f", "s")[-1]
    assert s_f - s_lead - 4.6 == pytest.approx(10.0, abs=0.2)  # 4.6 m: one car length


# --------------------------------------------------------------------------
# composites

def test_sequence_waits_for_the_next_trigger():
    root = sequence("r", [leaf("c0", "cruise", TimeCondition(0.0), speed=20.0, duration=1.0),
                          leaf("c1", "changelane", TimeCondition(3.0), direction="left", offset=3.5,
                               duration=2.0, end_speed=20.0)])
    d = column(one_agent(root, horizon=6.0), "a", "d")
    assert np.all(d[:31] == 0.0)
    assert d[31] > 0.0
    assert d[50] == pytest.approx(3.5, abs=1e-6)


def test_open_ended_leaf_is_preempted():
    root = sequence("r", [leaf("c0", "cruise"),
                          leaf("c1", "changelane", TimeCondition(2.0), direction="left", offset=3.5,
                               duration=2.0, end_speed=20.0)])
    d = column(one_agent(root, horizon=5.0), "a", "d")
    assert d[20] == 0.0 and d[21] > 0.0


def test_parallel_runs_children_together():
    root = parallel("p", [leaf("v", "cruise", speed=25.0, duration=2.0),
                          leaf("m", "merge_in", lane="L1", duration=2.0)])
    tr = one_agent(root, horizon=3.0)
    assert column(tr, "a", "speed")[20] == pytest.approx(25.0, abs=1e-6)
    assert column(tr, "a", "d")[20] == pytest.approx(3.5, abs=1e-6)


def test_parallel_completes_when_all_children_do():
    tree = BehaviorTree(parallel("p", [leaf("x", "cruise", speed=20.0, duration=0.5),
                                       leaf("y", "cruise", speed=20.0, duration=1.0)]), "a")
    runner = TreeRunner(tree)
    w = make_world(runners={"a": runner})
    done_at = None
    for k in range(30):
        w.time = 0.1 * k
        tick(runner, w, 0.1)
        if runner.finished and done_at is None:
            done_at = k
    assert "x" in runner.completed and "y" in runner.completed
    assert done_at == 10


def test_selection_picks_the_first_true_child():
    root = BehaviorNode("s", "selection", None, [
        leaf("left", "merge_in", TimeCondition(100.0), lane="L1", duration=2.0),
        leaf("faster", "cruise", TimeCondition(0.0), speed=25.0, duration=2.0),
    ])
    tr = one_agent(root, horizon=3.0)
    assert column(tr, "a", "speed")[20] == pytest.approx(25.0, abs=1e-6)
    assert np.allclose(column(tr, "a", "d"), 0.0)


def test_cyclic_restarts_its_children():
    root = BehaviorNode("c", "cyclic", None, [
        leaf("up", "cruise", speed=21.0, duration=1.0),
        leaf("down", "cruise", speed=19.0, duration=1.0),
    ])
    v = column(one_agent(root, horizon=6.0), "a", "speed")
    assert [round(v[k], 6) for k in (10, 20, 30, 40, 50)] == [21.0, 19.0, 21.0, 19.0, 21.0]


def test_runs_are_deterministic():
    ls = library.construction_cut_in()
    a = run(bind(concrete(ls, [8.0, 40.0, 24.0, 3.0])))
    b = run(bind(concrete(ls, [8.0, 40.0, 24.0, 3.0])))
    assert a.rows == b.rows and a.events == b.events


def test_tick_needs_positive_step():
    runner = TreeRunner(BehaviorTree(sequence("r", [leaf("c", "cruise")]), "a"))
    with pytest.raises(ValueError):
        tick(runner, make_world(), 0.0)


# --------------------------------------------------------------------------
# construction-zone cut-in timing

@pytest.mark.parametrize("values", [(10.0, 30.0, 22.0, 4.0), (5.0, 55.0, 20.0, 2.5), (18.0, 12.0, 28.0, 5.5)])
def test_cut_in_starts_right_after_the_zone_comes_within_s2(values):
    s1, s2, _, _ = values
    tr = run(bind(concrete(library.construction_cut_in(), list(values))), stop_on_collision=False)
    zone = library.construction_zone()
    xs, ys, d = column(tr, "agent", "x"), column(tr, "agent", "y"), column(tr, "agent", "d")
    near = [point_polygon_distance(x, y, zone) <= s2 for x, y in zip(xs, ys)]
    k = near.index(True)
    assert np.all(d[: k + 1] == d[0])
    assert d[k + 1] < d[0]


# --------------------------------------------------------------------------
# validation and serialization

def _ids(diags):
    return sorted(d.code for d in diags)


def test_well_formed_tree_has_no_diagnostics():
    tree = BehaviorTree.from_dict(library.construction_cut_in().template["agents"][0]["tree"], "agent")
    assert validate(tree, {"agents": ["ego"], "obstacles": ["construction"]}) == []


def test_validation_codes():
    root = sequence("r", [
        leaf("x", "cruise", speed=-1.0, duration=0.0),
        leaf("x", "changelane", direction="up", offset=3.5, duration=2.0, end_speed=20.0),
        BehaviorNode("empty", "parallel"),
        leaf("t", "track", target="ghost"),
        leaf("m", "merge_in", DistanceCondition("nowhere", 3.0), lane="L9", duration=2.0),
        leaf("e", "cruise", EndsByBehaviorCondition("missing")),
    ])
    diags = validate(BehaviorTree(root, "a"), {"lanes": ["L0", "L1"]})
    assert _ids(diags) == sorted(["NegativeSpeed", "NonpositiveDuration", "DuplicateId", "InvalidDirection",
                                  "EmptyComposite", "DanglingReference", "DanglingReference",
                                  "DanglingReference", "InvalidLane"])


def test_deeply_nested_conditions_are_flagged():
    c = TimeCondition(0.0)
    for _ in range(9):
        c = CombinedCondition("all", [c])
    assert _ids(validate(BehaviorTree(sequence("r", [leaf("c", "cruise", c)]), "a"))) == ["DeepCondition"]


def test_other_agents_nodes_are_resolved_from_context():
    root = sequence("r", [leaf("c", "cruise", EndsByBehaviorCondition("go", agent="b"))])
    tree = BehaviorTree(root, "a")
    assert _ids(validate(tree, {"agents": ["b"], "nodes": {"b": ["go"]}})) == []
    assert _ids(validate(tree, {"agents": ["b"], "nodes": {"b": []}})) == ["DanglingReference"]


def test_dict_round_trip():
    d = library.cut_in().template["agents"][0]["tree"]
    tree = BehaviorTree.from_dict(d, "agent")
    assert tree.to_dict() == d
    cond = CombinedCondition("any", [AreaCondition([(0, 0), (1, 0), (1, 1)]),
                                     RelativePositionCondition("b", 5.0, None, "<"),
                                     DistanceCondition((3.0, 4.0), 2.0)])
    node = leaf("n", "cruise", cond, speed=3.0)
    assert BehaviorNode.from_dict(node.to_dict()) == node


@pytest.mark.parametrize("bad", [{"type": "cruise"}, {"id": "x", "type": "fly"},
                                 {"id": "x", "type": "cruise", "condition": {"type": "psychic"}},
                                 {"id": "x", "type": "cruise", "condition": {"type": "time"}}])
def test_malformed_nodes(bad):
    with pytest.raises(ScenarioFormatError):
        BehaviorNode.from_dict(bad)
