"""Ready-made logical scenarios used by the demos and tests."""
from __future__ import annotations

from .behavior import BehaviorTree, DistanceCondition, EndsByBehaviorCondition, TimeCondition, leaf, sequence
from .lanes import straight_road
from .scenario import LogicalScenario, RelativeVariable, UniformRange, Variable

LANE_WIDTH = 3.5
CAR_LENGTH = 4.6
CAR_WIDTH = 1.9

# (name, lo, hi) in declaration order
CONSTRUCTION_CUT_IN_RANGES = (("s1", 3.0, 20.0), ("s2", 10.0, 60.0), ("v", 18.0, 30.0), ("t", 2.0, 6.0))
CUT_IN_RANGES = (("v1", 16.0, 28.0), ("lat", 1.0, 6.0), ("v2", 20.0, 30.0), ("t", 4.0, 10.0))


def construction_zone(x0=200.0, x1=230.0, y0=3.0, y1=5.0):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def construction_cut_in(ego_speed=22.0, ego_s=20.0, horizon=20.0, dt=0.1, road_length=600.0):
    """Agent ahead in the left lane meets a work zone and cuts in front of the ego.

    The agent keeps a bumper gap ``s1`` ahead of the ego, starts a right lane
    change of ``t`` seconds once it is within ``s2`` of the work zone, ends it
    at speed ``v`` and then cruises.
    """
    lane_map = straight_road(2, road_length, LANE_WIDTH,
                             obstacles={"construction": construction_zone()})
    tree = sequence("root", [
        leaf("track", "track", target="ego", gap=10.0),
        leaf("cut_in", "changelane", DistanceCondition("construction", 30.0),
             direction="right", duration=4.0, offset=LANE_WIDTH, end_speed=22.0),
        leaf("cruise", "cruise"),
    ])
    template = {
        "map": lane_map.to_dict(),
        "ego": {"init": {"lane": "L0", "s": ego_s, "speed": ego_speed}, "set_speed": ego_speed},
        "agents": [{
            "id": "agent", "kind": "vehicle",
            "init": {"lane": "L1", "s": ego_s + CAR_LENGTH + 10.0, "speed": ego_speed},
            "size": [CAR_LENGTH, CAR_WIDTH],
            "tree": BehaviorTree(tree, "agent").to_dict(),
        }],
        "simulation": {"dt": dt, "horizon": horizon},
    }
    targets = {"s1": "agent.track.gap", "s2": "agent.cut_in.condition.threshold",
               "v": "agent.cut_in.end_speed", "t": "agent.cut_in.duration"}
    variables = [Variable(n, targets[n], UniformRange(lo, hi)) for n, lo, hi in CONSTRUCTION_CUT_IN_RANGES]
    rel = [RelativeVariable("agent_s0", "s1", {"kind": "affine", "scale": 1.0, "offset": ego_s + CAR_LENGTH},
                            target="agent.init.s")]
    return LogicalScenario(template, variables, rel, name="construction_cut_in")


def cut_in(ego_speed=17.0, ego_s=20.0, gap=15.0, trigger=3.4, horizon=20.0, dt=0.1, road_length=600.0):
    """Agent cruises at ``v1`` in the left lane, then cuts in over ``t`` seconds.

    The lateral displacement ``lat`` and the end speed ``v2`` are variables too,
    so large offsets push the agent past the ego lane.
    """
    lane_map = straight_road(2, road_length, LANE_WIDTH)
    tree = sequence("root", [
        leaf("cruise_0", "cruise", TimeCondition(0.0), speed=20.0, duration=trigger),
        leaf("changelane_1", "changelane", EndsByBehaviorCondition("cruise_0"),
             direction="right", duration=6.0, offset=LANE_WIDTH, end_speed=22.0),
        leaf("cruise_2", "cruise"),
    ])
    template = {
        "map": lane_map.to_dict(),
        "ego": {"init": {"lane": "L0", "s": ego_s, "speed": ego_speed}, "set_speed": ego_speed},
        "agents": [{
            "id": "agent", "kind": "vehicle",
            "init": {"lane": "L1", "s": ego_s + CAR_LENGTH + gap, "speed": ego_speed},
            "size": [CAR_LENGTH, CAR_WIDTH],
            "tree": BehaviorTree(tree, "agent").to_dict(),
        }],
        "simulation": {"dt": dt, "horizon": horizon},
    }
    targets = {"v1": "agent.cruise_0.speed", "lat": "agent.changelane_1.offset",
               "v2": "agent.changelane_1.end_speed", "t": "agent.changelane_1.duration"}
    variables = [Variable(n, targets[n], UniformRange(lo, hi)) for n, lo, hi in CUT_IN_RANGES]
    return LogicalScenario(template, variables, name="cut_in")
