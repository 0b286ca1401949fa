"""Random synthetic traces with known ground truth, and a straight-line scorer.

The scorer never looks at the events: it reads the ground-truth facts the
generator used to build them (who crashed into whom and why, interval
lengths, episode counts) and applies the scoring rules directly.
"""
import math
from types import SimpleNamespace

POINTS = {"success": 0, "warning": 2, "fail": 5}

LINE_DURATIONS = (0.5, 2.99, 3.0, 4.0, 5.99, 6.0, 9.0)
PEAKS = (0.0, 2.0, 5.9, 6.0, 6.01, 7.5)
MIN_DISTS = (0.0, 0.4, 2.5, 11.0, 24.99, 25.0, 40.0, math.inf)
# (kind, ego responsible?) for collisions involving the ego
EGO_CRASHES = (
    ("obstacle", True),
    ("ego_changing_lane", True),
    ("rear_ended", False),
    ("cut_in_pet_0.3", False),
    ("cut_in_pet_0.49", False),
    ("cut_in_pet_0.5", True),
    ("cut_in_pet_1.5", True),
    ("ego_hits_leader", True),
)


def random_case(rng):
    """Ground truth for one scenario: participants, violations and collisions."""
    agents = [f"a{i}" for i in range(rng.integers(1, 4))]
    people = ["ego"] + agents
    truth = {"agents": agents, "min_dist": MIN_DISTS[rng.integers(len(MIN_DISTS))], "p": {}}
    for p in people:
        truth["p"][p] = {
            "lines": [LINE_DURATIONS[rng.integers(len(LINE_DURATIONS))] for _ in range(rng.integers(0, 3))],
            "harsh": int(rng.integers(0, 5)),
            "peak": PEAKS[rng.integers(len(PEAKS))] * (1 if rng.random() < 0.5 else -1),
            "off_road": bool(rng.random() < 0.12),
        }
    crashes = []
    for _ in range(rng.choice([0, 0, 1, 1, 2])):
        r = rng.random()
        if r < 0.6:
            kind, ok = EGO_CRASHES[rng.integers(len(EGO_CRASHES))]
            other = "works" if kind == "obstacle" else agents[rng.integers(len(agents))]
            crashes.append({"ego": True, "kind": kind, "other": other, "responsible": ok})
        elif r < 0.8:
            a = agents[rng.integers(len(agents))]
            crashes.append({"ego": False, "kind": "agent_obstacle", "parties": [a, "works"]})
        elif len(agents) >= 2:
            i, j = rng.choice(len(agents), 2, replace=False)
            crashes.append({"ego": False, "kind": "agent_agent", "parties": [agents[i], agents[j]]})
    truth["crashes"] = crashes
    return truth


def _ctx(changing=False, lon=None, since=None):
    c = {"speed": 10.0, "accel": 0.0, "lane": "L0", "frame_lane": "L0", "d_dot": 0.0,
         "changing_lane": changing, "encroach_since": since}
    if lon is not None:
        c["lon_to_ego"] = lon
        c["lat_to_ego"] = 0.0
    return c


def build_trace(truth):
    """SimulationTrace-shaped object realising the ground truth."""
    rows, events = {}, []
    for p, f in truth["p"].items():
        rows[p] = [(0.1 * k, 0.0, 0.0, 0.0, 10.0, f["peak"] if k == 3 else 0.0, "L0", 0.0, 0.0)
                   for k in range(6)]
        for dur in f["lines"]:
            events.append({"type": "line_pressure", "participants": [p], "start": 1.0,
                           "end": 1.0 + dur, "duration": dur})
        for _ in range(f["harsh"]):
            events.append({"type": "harsh", "participants": [p], "start": 2.0, "end": 2.6,
                           "duration": 0.6, "peak_accel": 4.0})
        if f["off_road"]:
            events.append({"type": "off_road", "participants": [p], "start": 3.0})
    t = 4.0
    for c in truth["crashes"]:
        if not c["ego"]:
            a, b = c["parties"]
            if c["kind"] == "agent_obstacle":
                events.append({"type": "collision", "t": t, "participants": [a, b], "obstacle": b,
                               "context": {a: _ctx()}})
            else:
                events.append({"type": "collision", "t": t, "participants": [a, b],
                               "context": {a: _ctx(lon=3.0), b: _ctx(lon=9.0)}})
            continue
        o, kind = c["other"], c["kind"]
        if kind == "obstacle":
            events.append({"type": "collision", "t": t, "participants": ["ego", o], "obstacle": o,
                           "context": {"ego": _ctx()}})
            continue
        ego, oth = _ctx(), _ctx(lon=5.0)
        if kind == "ego_changing_lane":
            ego = _ctx(changing=True)
            oth = _ctx(lon=-2.0)  # even with the agent behind, the maneuvering ego is at fault
        elif kind == "rear_ended":
            oth = _ctx(lon=-4.0)
        elif kind.startswith("cut_in_pet_"):
            pet = float(kind.rsplit("_", 1)[1])
            oth = _ctx(changing=True, lon=4.0, since=t - pet)
        order = ["ego", o] if len(events) % 2 == 0 else [o, "ego"]
        events.append({"type": "collision", "t": t, "participants": order,
                       "context": {"ego": ego, o: oth}})
    return SimpleNamespace(rows=rows, events=events, min_dist=truth["min_dist"])


def _states(p, truth):
    f = truth["p"][p]
    crashed = any((c["ego"] and p in ("ego", c["other"])) or (not c["ego"] and p in c["parties"])
                  for c in truth["crashes"])
    longest = max(f["lines"], default=0.0)
    line = "fail" if longest >= 6.0 else "warning" if longest >= 3.0 else "success"
    if f["harsh"] >= 3 or abs(f["peak"]) > 6.0:
        aggressive = "fail"
    elif f["harsh"] >= 1:
        aggressive = "warning"
    else:
        aggressive = "success"
    return {"collision": "fail" if crashed else "success", "line_pressure": line,
            "aggressive": aggressive, "off_road": "fail" if f["off_road"] else "success"}


def expected(truth, critical=5.0):
    """(score, verdict) by the scoring rules, from ground truth only."""
    score = {p: sum(POINTS[s] for s in _states(p, truth).values()) for p in truth["p"]}
    s_ego = score["ego"]
    s_agent = sum(score[a] for a in truth["agents"])
    ego_crashes = [c for c in truth["crashes"] if c["ego"]]
    unreasonable = (
        any(truth["p"][a]["off_road"] for a in truth["agents"])
        or any(not c["ego"] for c in truth["crashes"])
        or any(not c["responsible"] for c in ego_crashes)
    )
    if unreasonable:
        return -s_agent, "Invalid"
    if ego_crashes:
        return s_ego, "ValidCritical"
    m = truth["min_dist"]
    s_dist = 0.0 if math.isinf(m) else max(0.0, -0.2 * m + 5.0)
    total = 1.0 * s_ego + -1.0 * s_agent + 0.2 * s_dist
    return total, "ValidCritical" if total >= critical else "ValidNonCritical"
