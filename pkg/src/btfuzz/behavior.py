"""Behavior-tree scenario DSL: trigger conditions, leaf behaviors, composites and their runtime.

A tree is plain data (``BehaviorNode`` objects serializable to JSON dicts).
Execution state lives in a separate ``TreeRunner`` so the same tree can be
run by several simulations.

Execution rules, per composite:

* ``sequence``: children run in order.  A child waits for its own trigger
  condition before starting.  An open-ended leaf (``track``, or ``cruise``
  without a duration) is preempted as soon as the next sibling's condition
  fires.
* ``parallel``: every child starts once its condition holds; the node
  completes when all children completed.
* ``cyclic``: runs its children like a sequence and restarts them on
  completion.  Never completes.
* ``selection``: starts the first child whose condition currently holds and
  completes with it.  While nothing holds the agent keeps lane and speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import DanglingReference, ScenarioFormatError
from .frenet import FrenetState, PlannedSegment, plan_segment
from .geometry import point_in_polygon, point_polygon_distance

COMPOSITES = ("sequence", "parallel", "cyclic", "selection")
LEAVES = ("track", "changelane", "cruise", "follow_log", "merge_in", "merge_out")
MAX_CONDITION_DEPTH = 8

_COMPARATORS = {
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


# --------------------------------------------------------------------------
# trigger conditions

@dataclass
class TimeCondition:
    at: float

    def evaluate(self, world, self_id) -> bool:
        return world.time >= self.at - 1e-9

    def to_dict(self):
        return {"type": "time", "at": self.at}


@dataclass
class DistanceCondition:
    """Distance from the agent's center to an agent center, obstacle polygon or point."""

    to: object  # agent id, obstacle id, or (x, y)
    threshold: float
    comparator: str = "<="

    def evaluate(self, world, self_id) -> bool:
        me = world.agent(self_id)
        if isinstance(self.to, (list, tuple)):
            dist = math.hypot(me.x - self.to[0], me.y - self.to[1])
        elif self.to in world.obstacles:
            dist = point_polygon_distance(me.x, me.y, world.obstacles[self.to])
        else:
            other = world.agent(self.to)
            dist = math.hypot(me.x - other.x, me.y - other.y)
        return _COMPARATORS[self.comparator](dist, self.threshold)

    def to_dict(self):
        to = list(self.to) if isinstance(self.to, (list, tuple)) else self.to
        return {"type": "distance", "to": to, "threshold": self.threshold,
                "comparator": self.comparator}


@dataclass
class AreaCondition:
    polygon: list

    def evaluate(self, world, self_id) -> bool:
        me = world.agent(self_id)
        return point_in_polygon(me.x, me.y, self.polygon)

    def to_dict(self):
        return {"type": "area", "polygon": [list(p) for p in self.polygon]}


@dataclass
class RelativePositionCondition:
    """Signed gaps of the agent relative to ``target`` in the target's lane frame.

    Both gaps (lateral only when given) must satisfy the comparator.
    """

    target: str
    longitudinal: float
    lateral: Optional[float] = None
    comparator: str = ">="

    def evaluate(self, world, self_id) -> bool:
        lon, lat = world.relative_gaps(self_id, self.target)
        cmp = _COMPARATORS[self.comparator]
        ok = cmp(lon, self.longitudinal)
        if self.lateral is not None:
            ok = ok and cmp(lat, self.lateral)
        return ok

    def to_dict(self):
        return {"type": "relative_position", "target": self.target,
                "longitudinal": self.longitudinal, "lateral": self.lateral,
                "comparator": self.comparator}


@dataclass
class EndsByBehaviorCondition:
    node: str
    agent: Optional[str] = None  # None: same tree

    def evaluate(self, world, self_id) -> bool:
        owner = self.agent or self_id
        done = world.completed_nodes(owner)
        return self.node in done

    def to_dict(self):
        d = {"type": "ends_by_behavior", "node": self.node}
        if self.agent is not None:
            d["agent"] = self.agent
        return d


@dataclass
class CombinedCondition:
    mode: str  # "all" | "any"
    conditions: list = field(default_factory=list)

    def evaluate(self, world, self_id) -> bool:
        results = (c.evaluate(world, self_id) for c in self.conditions)
        return all(results) if self.mode == "all" else any(results)

    def to_dict(self):
        return {"type": "combined", "mode": self.mode,
                "conditions": [c.to_dict() for c in self.conditions]}


def condition_from_dict(d):
    if d is None:
        return None
    kind = d.get("type")
    try:
        if kind == "time":
            return TimeCondition(float(d["at"]))
        if kind == "distance":
            to = d["to"]
            to = tuple(to) if isinstance(to, list) else to
            return DistanceCondition(to, float(d["threshold"]), d.get("comparator", "<="))
        if kind == "area":
            return AreaCondition([tuple(p) for p in d["polygon"]])
        if kind == "relative_position":
            lat = d.get("lateral")
            return RelativePositionCondition(d["target"], float(d["longitudinal"]),
                                             None if lat is None else float(lat),
                                             d.get("comparator", ">="))
        if kind == "ends_by_behavior":
            return EndsByBehaviorCondition(d["node"], d.get("agent"))
        if kind == "combined":
            return CombinedCondition(d.get("mode", "all"),
                                     [condition_from_dict(c) for c in d["conditions"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad condition {d!r}: {exc}") from exc
    raise ScenarioFormatError(f"unknown condition type {kind!r}")


def evaluate_condition(c, world, self_id) -> bool:
    """Evaluate a trigger condition; ``None`` means "immediately"."""
    if c is None:
        return True
    try:
        return c.evaluate(world, self_id)
    except KeyError as exc:
        raise DanglingReference(f"condition references unknown entity {exc}") from exc


# --------------------------------------------------------------------------
# nodes

@dataclass
class BehaviorNode:
    id: str
    type: str
    condition: object = None
    children: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return self.type in LEAVES

    @property
    def open_ended(self) -> bool:
        if self.type == "track":
            return True
        return self.type == "cruise" and self.params.get("duration") is None

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_dict(self):
        d = {"id": self.id, "type": self.type}
        if self.condition is not None:
            d["condition"] = self.condition.to_dict()
        d.update(self.params)
        if not self.is_leaf:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "type" not in d or "id" not in d:
            raise ScenarioFormatError(f"node needs 'id' and 'type': {d!r}")
        kind = d["type"]
        if kind not in COMPOSITES and kind not in LEAVES:
            raise ScenarioFormatError(f"unknown node type {kind!r}")
        params = {k: v for k, v in d.items() if k not in ("id", "type", "condition", "children")}
        children = [cls.from_dict(c) for c in d.get("children", [])] if kind in COMPOSITES else []
        return cls(id=str(d["id"]), type=kind, condition=condition_from_dict(d.get("condition")),
                   children=children, params=params)


@dataclass
class BehaviorTree:
    root: BehaviorNode
    agent: str

    def nodes(self):
        return list(self.root.walk())

    def find(self, node_id) -> BehaviorNode:
        for n in self.root.walk():
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def leaves(self):
        return [n for n in self.root.walk() if n.is_leaf]

    def to_dict(self):
        return self.root.to_dict()

    @classmethod
    def from_dict(cls, d, agent):
        return cls(BehaviorNode.from_dict(d), agent)


# convenience constructors used by log2bt and the scenario library
def sequence(node_id, children, condition=None):
    return BehaviorNode(node_id, "sequence", condition, list(children))


def parallel(node_id, children, condition=None):
    return BehaviorNode(node_id, "parallel", condition, list(children))


def leaf(node_id, kind, condition=None, **params):
    return BehaviorNode(node_id, kind, condition, [], params)


# --------------------------------------------------------------------------
# runtime

@dataclass
class AgentCommand:
    """What an agent should do over the next step.

    Longitudinal: either a planned end-of-step state (``s``, ``speed``,
    ``s_ddot``) or only ``accel``.  Lateral: a planned (``d``, ``d_dot``,
    ``d_ddot``) or ``None`` to keep the current offset.
    """

    accel: Optional[float] = None
    s: Optional[float] = None
    speed: Optional[float] = None
    s_ddot: Optional[float] = None
    d: Optional[float] = None
    d_dot: float = 0.0
    d_ddot: float = 0.0
    # False when the leaf only holds that channel (cruise keeps its offset,
    # a merge keeps its speed); a parallel sibling that drives it wins
    lon_primary: bool = True
    lat_primary: bool = True

    @property
    def has_lon(self):
        return self.accel is not None or self.s is not None

    @property
    def has_lat(self):
        return self.d is not None


HOLD = AgentCommand()


def merge_commands(cmds) -> AgentCommand:
    lon = next((c for c in cmds if c.has_lon and c.lon_primary), None) or next((c for c in cmds if c.has_lon), None)
    lat = next((c for c in cmds if c.has_lat and c.lat_primary), None) or next((c for c in cmds if c.has_lat), None)
    out = AgentCommand()
    if lon is not None:
        out.accel, out.s, out.speed, out.s_ddot = lon.accel, lon.s, lon.speed, lon.s_ddot
    if lat is not None:
        out.d, out.d_dot, out.d_ddot = lat.d, lat.d_dot, lat.d_ddot
    return out


TRACK_MIN_GAP = 2.0
TRACK_TIME_GAP = 1.2
TRACK_KP = 0.4
TRACK_KV = 0.8
CRUISE_ACCEL = 1.5  # transition rate for open-ended cruise, m/s^2


class _PlanExecution:
    """Follows a planned segment; after it ends, keeps the end speed and offset."""

    def __init__(self, plan: PlannedSegment, completes: bool, lon_primary=True, lat_primary=True):
        self.plan = plan
        self.completes = completes
        self.primary = {"lon_primary": lon_primary, "lat_primary": lat_primary}

    def finished(self, t):
        return self.completes and t - self.plan.t0 >= self.plan.duration - 1e-9

    def command(self, world, me, t, dt):
        tau = t + dt - self.plan.t0
        if tau <= self.plan.duration + 1e-12:
            s, v, a, d, dd, ddd = self.plan.scalar_at(tau)
            return AgentCommand(accel=a, s=s, speed=v, s_ddot=a, d=d, d_dot=dd, d_ddot=ddd, **self.primary)
        _, v_end, _, d_end, _, _ = self.plan.scalar_at(self.plan.duration)
        return AgentCommand(accel=0.0, s=me.s + v_end * dt, speed=v_end, s_ddot=0.0, d=d_end, **self.primary)


class _TrackExecution:
    def __init__(self, target, gap):
        self.target = target
        self.gap = gap

    def finished(self, t):
        return False

    def command(self, world, me, t, dt):
        other = world.agent(self.target)
        lon, _ = world.relative_gaps(me.id, self.target)
        half = (me.length + other.length) / 2.0
        bumper = lon - half if lon >= 0 else lon + half
        desired = self.gap
        if desired is None:
            desired = -max(TRACK_MIN_GAP, TRACK_TIME_GAP * me.speed)
        err = bumper - desired
        accel = -TRACK_KP * err + TRACK_KV * (other.speed - me.speed)
        return AgentCommand(accel=accel)


def _start_state(me, t) -> FrenetState:
    return FrenetState(me.s, me.s_dot, me.s_ddot, me.d, me.d_dot, me.d_ddot, t)


def activate_leaf(node: BehaviorNode, world, me, t):
    """Plan the leaf from the agent's current state."""
    p = node.params
    start = _start_state(me, t)
    kind = node.type
    if kind == "track":
        gap = p.get("gap")
        return _TrackExecution(p["target"], None if gap is None else float(gap))
    if kind == "changelane":
        sign = 1.0 if p.get("direction", "left") == "left" else -1.0
        T = float(p["duration"])
        end = FrenetState(0.0, float(p["end_speed"]), 0.0, me.d + sign * float(p["offset"]), 0.0, 0.0, t + T)
        return _PlanExecution(plan_segment(start, end), True)
    if kind == "cruise":
        v = p.get("speed")
        v = me.s_dot if v is None else float(v)
        T = p.get("duration")
        completes = T is not None
        if T is None:
            T = max(1.0, abs(v - me.s_dot) / CRUISE_ACCEL)
        end = FrenetState(0.0, v, 0.0, me.d, 0.0, 0.0, t + float(T))
        return _PlanExecution(plan_segment(start, end), completes, lat_primary=False)
    if kind == "follow_log":
        T = float(p["duration"])
        e = p["end"]
        end = FrenetState(0.0, e[1], e[2], e[3], e[4], e[5], t + T)
        return _PlanExecution(plan_segment(start, end), True)
    if kind in ("merge_in", "merge_out"):
        T = float(p["duration"])
        shift = world.lateral_shift_to_lane(me.id, p["lane"])
        end = FrenetState(0.0, me.s_dot, 0.0, me.d + shift, 0.0, 0.0, t + T)
        return _PlanExecution(plan_segment(start, end), True, lon_primary=False)
    raise ScenarioFormatError(f"not a leaf: {kind}")


IDLE, RUNNING, DONE = 0, 1, 2


class TreeRunner:
    """Mutable execution state of one agent's tree."""

    def __init__(self, tree: BehaviorTree):
        self.tree = tree
        self.agent = tree.agent
        self.status = {}
        self.index = {}
        self.exec = {}
        self.completed = set()
        self.active_leaves = []

    @property
    def finished(self) -> bool:
        return self.status.get(self.tree.root.id) == DONE

    def active_kinds(self):
        return [self.tree.find(i).type for i in self.active_leaves]

    def _reset(self, node):
        for n in node.walk():
            self.status.pop(n.id, None)
            self.index.pop(n.id, None)
            self.exec.pop(n.id, None)
            self.completed.discard(n.id)

    def _start(self, node):
        self.status[node.id] = RUNNING

    def _finish(self, node):
        self.status[node.id] = DONE
        self.exec.pop(node.id, None)
        self.completed.add(node.id)

    def tick(self, world, dt) -> AgentCommand:
        me = world.agent(self.agent)
        self.active_leaves = []
        root = self.tree.root
        st = self.status.get(root.id, IDLE)
        if st == IDLE:
            if not evaluate_condition(root.condition, world, self.agent):
                return HOLD
            self._start(root)
        if self.status[root.id] == DONE:
            return HOLD
        cmds = self._step(root, world, me, dt)
        return merge_commands(cmds) if cmds else HOLD

    def _step(self, node, world, me, dt):
        """Advance a started node; returns the list of leaf commands for this step."""
        t = world.time
        if node.is_leaf:
            ex = self.exec.get(node.id)
            if ex is None:
                ex = activate_leaf(node, world, me, t)
                self.exec[node.id] = ex
            if ex.finished(t):
                self._finish(node)
                return []
            self.active_leaves.append(node.id)
            return [ex.command(world, me, t, dt)]
        if node.type in ("sequence", "cyclic"):
            return self._step_sequence(node, world, me, dt)
        if node.type == "parallel":
            cmds = []
            all_done = True
            for child in node.children:
                cst = self.status.get(child.id, IDLE)
                if cst == IDLE and evaluate_condition(child.condition, world, self.agent):
                    self._start(child)
                    cst = RUNNING
                if cst == RUNNING:
                    cmds.extend(self._step(child, world, me, dt))
                if self.status.get(child.id, IDLE) != DONE:
                    all_done = False
            if all_done:
                self._finish(node)
            return cmds
        if node.type == "selection":
            chosen = self.index.get(node.id)
            if chosen is None:
                for i, child in enumerate(node.children):
                    if evaluate_condition(child.condition, world, self.agent):
                        chosen = i
                        self.index[node.id] = i
                        self._start(child)
                        break
                else:
                    return []
            child = node.children[chosen]
            cmds = self._step(child, world, me, dt)
            if self.status.get(child.id) == DONE:
                self._finish(node)
            return cmds
        raise ScenarioFormatError(f"unknown composite {node.type}")

    def _step_sequence(self, node, world, me, dt):
        kids = node.children
        idx = self.index.get(node.id, 0)
        restarted = False
        while True:
            if idx >= len(kids):
                if node.type == "cyclic" and kids and not restarted:
                    for c in kids:
                        self._reset(c)
                    idx = 0
                    restarted = True
                    continue
                self.index[node.id] = idx
                if node.type != "cyclic" or not kids:
                    self._finish(node)
                return []
            child = kids[idx]
            cst = self.status.get(child.id, IDLE)
            if cst == IDLE:
                if not evaluate_condition(child.condition, world, self.agent):
                    self.index[node.id] = idx
                    return []
                self._start(child)
            elif cst == RUNNING and child.is_leaf and child.open_ended and idx + 1 < len(kids):
                nxt = kids[idx + 1]
                if nxt.condition is not None and evaluate_condition(nxt.condition, world, self.agent):
                    self._finish(child)
                    idx += 1
                    continue
            cmds = self._step(child, world, me, dt)
            if self.status.get(child.id) == DONE:
                idx += 1
                continue
            self.index[node.id] = idx
            return cmds


def tick(runner: TreeRunner, world, dt) -> AgentCommand:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return runner.tick(world, dt)


# --------------------------------------------------------------------------
# static validation

@dataclass(frozen=True)
class Diagnostic:
    code: str
    node: str
    message: str


def _condition_refs(c, depth=1):
    """Yield (kind, ref, depth) for everything a condition points at."""
    if c is None:
        return
    if isinstance(c, CombinedCondition):
        yield ("depth", None, depth)
        for sub in c.conditions:
            yield from _condition_refs(sub, depth + 1)
    elif isinstance(c, DistanceCondition) and not isinstance(c.to, (list, tuple)):
        yield ("entity", c.to, depth)
    elif isinstance(c, RelativePositionCondition):
        yield ("agent", c.target, depth)
    elif isinstance(c, EndsByBehaviorCondition):
        yield ("node", (c.agent, c.node), depth)


def validate(tree: BehaviorTree, context=None) -> list:
    """Static checks; returns a list of ``Diagnostic`` (empty when well formed).

    ``context`` may carry ``agents`` (ids), ``obstacles`` (ids), ``lanes``
    (ids) and ``nodes`` (agent id -> node ids) of the enclosing scenario.
    """
    context = context or {}
    agents = set(context.get("agents", ())) | {tree.agent}
    obstacles = set(context.get("obstacles", ()))
    lanes = context.get("lanes")
    other_nodes = context.get("nodes", {})
    diags = []
    seen = set()
    own_ids = {n.id for n in tree.root.walk()}
    for n in tree.root.walk():
        if n.id in seen:
            diags.append(Diagnostic("DuplicateId", n.id, f"node id {n.id!r} used more than once"))
        seen.add(n.id)
        if not n.is_leaf and not n.children:
            diags.append(Diagnostic("EmptyComposite", n.id, f"{n.type} node has no children"))
        p = n.params
        for key in ("duration",):
            v = p.get(key)
            if v is not None and not float(v) > 0:
                diags.append(Diagnostic("NonpositiveDuration", n.id, f"{key}={v}"))
        for key in ("speed", "end_speed"):
            v = p.get(key)
            if v is not None and float(v) < 0:
                diags.append(Diagnostic("NegativeSpeed", n.id, f"{key}={v}"))
        if n.type == "track" and p.get("target") not in agents:
            diags.append(Diagnostic("DanglingReference", n.id, f"track target {p.get('target')!r}"))
        if n.type in ("merge_in", "merge_out") and lanes is not None and p.get("lane") not in lanes:
            diags.append(Diagnostic("InvalidLane", n.id, f"lane {p.get('lane')!r}"))
        if n.type == "changelane" and p.get("direction", "left") not in ("left", "right"):
            diags.append(Diagnostic("InvalidDirection", n.id, f"direction {p.get('direction')!r}"))
        for kind, ref, depth in _condition_refs(n.condition):
            if kind == "depth" and depth > MAX_CONDITION_DEPTH:
                diags.append(Diagnostic("DeepCondition", n.id, f"combined nesting depth {depth}"))
            elif kind == "entity" and ref not in agents and ref not in obstacles:
                diags.append(Diagnostic("DanglingReference", n.id, f"distance target {ref!r}"))
            elif kind == "agent" and ref not in agents:
                diags.append(Diagnostic("DanglingReference", n.id, f"relative-position target {ref!r}"))
            elif kind == "node":
                owner, node_id = ref
                pool = own_ids if owner in (None, tree.agent) else set(other_nodes.get(owner, ()))
                if node_id not in pool:
                    diags.append(Diagnostic("DanglingReference", n.id, f"ends-by-behavior node {node_id!r}"))
    return diags
