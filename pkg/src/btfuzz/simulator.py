"""Deterministic 2D lane-frame traffic simulator with a baseline ego controller.

Every participant moves as a point mass in the Frenet frame of the lane it
was spawned on (its *frame lane*).  Agents follow the commands of their
behavior trees: a planned end-of-step state is tracked exactly whenever the
implied acceleration is within ``[A_MIN, A_MAX]``, otherwise the clamped
acceleration is integrated.  The ego is driven by ``ego_controller``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .behavior import AgentCommand, TreeRunner
from .errors import ScenarioUnboundVariables
from .geometry import box_corners, polygon_distance, polygons_overlap
from .scenario import LogicalScenario, Scenario

log = logging.getLogger(__name__)

A_MIN = -8.0
A_MAX = 4.0
MAX_DT = 0.2
MAX_HORIZON = 300.0
HARSH_ACCEL = 3.5
HARSH_MIN_DURATION = 0.5
LANE_CHANGE_LATERAL_SPEED = 0.2


@dataclass
class EgoParams:
    """Baseline ego: IDM car following in its lane, no evasive lane changes."""

    set_speed: Optional[float] = None  # None: initial speed
    max_accel: float = 2.0
    comfort_decel: float = 3.0
    time_headway: float = 1.5
    min_gap: float = 2.0
    delta: float = 4.0
    emergency_brake: float = -8.0
    ttc_emergency: float = 1.2


class Body:
    """Mutable kinematic state of one participant."""

    __slots__ = ("id", "kind", "lane_frame", "path", "s", "s_dot", "s_ddot", "d", "d_dot",
                 "d_ddot", "accel", "length", "width", "x", "y", "heading", "lane", "d_lane",
                 "lane_width", "tx", "ty", "set_speed")

    def __init__(self, spec, lane_map):
        self.id = spec.id
        self.kind = spec.kind
        self.lane_frame = spec.lane
        self.path = lane_map.lane(spec.lane).path
        self.s, self.s_dot, self.s_ddot = spec.s, spec.speed, spec.accel
        self.d, self.d_dot, self.d_ddot = spec.d, spec.d_dot, spec.d_ddot
        self.accel = spec.accel
        self.length, self.width = spec.length, spec.width
        self.set_speed = getattr(spec, "set_speed", None)

    @property
    def speed(self):
        return self.s_dot

    def refresh(self, lane_map):
        cx, cy, tx, ty, nx, ny = self.path.frame_at(min(max(self.s, 0.0), self.path.length))
        over = self.s - min(max(self.s, 0.0), self.path.length)
        self.x = cx + over * tx + self.d * nx
        self.y = cy + over * ty + self.d * ny
        self.tx, self.ty = tx, ty
        self.heading = math.atan2(ty, tx) + math.atan2(self.d_dot, max(self.s_dot, 0.1))
        self.lane, _, self.d_lane = lane_map.locate(self.x, self.y)
        self.lane_width = lane_map.lane(self.lane).width

    def footprint(self):
        return box_corners(self.x, self.y, self.heading, self.length, self.width)

    def lateral_half_extent(self):
        rel = math.atan2(self.d_dot, max(self.s_dot, 0.1))
        return self.width / 2.0 * abs(math.cos(rel)) + self.length / 2.0 * abs(math.sin(rel))


class WorldState:
    """Read-only view handed to conditions, leaves and the ego controller."""

    def __init__(self, time, bodies, lane_map, runners):
        self.time = time
        self.bodies = bodies
        self.map = lane_map
        self.obstacles = lane_map.obstacles
        self._runners = runners

    def agent(self, agent_id) -> Body:
        return self.bodies[agent_id]

    def completed_nodes(self, agent_id):
        if agent_id not in self.bodies:
            raise KeyError(agent_id)
        runner = self._runners.get(agent_id)
        return runner.completed if runner is not None else set()

    def in_frame(self, body_id, frame_path):
        b = self.bodies[body_id]
        s, d, *_ = frame_path.locate(b.x, b.y)
        if frame_path is b.path:
            return b.s, b.d
        return s, d

    def relative_gaps(self, self_id, target_id):
        """Signed (longitudinal, lateral) position of ``self_id`` in ``target_id``'s lane frame."""
        target = self.bodies[target_id]
        s, d = self.in_frame(self_id, target.path)
        return s - target.s, d - target.d

    def lateral_shift_to_lane(self, agent_id, lane_id):
        b = self.bodies[agent_id]
        _, d, *_ = self.map.lane(lane_id).path.locate(b.x, b.y)
        return -d


# --------------------------------------------------------------------------
# ego

def idm_acceleration(v, v0, gap, dv, p: EgoParams):
    """Intelligent Driver Model; ``dv`` is own speed minus leader speed."""
    free = 1.0 - (v / v0) ** p.delta if v0 > 0 else -1.0
    if gap is None:
        return p.max_accel * free
    s_star = p.min_gap + max(0.0, v * p.time_headway + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfort_decel)))
    return p.max_accel * (free - (s_star / max(gap, 0.1)) ** 2)


def find_leader(world: WorldState, ego_id="ego"):
    """Nearest participant or obstacle ahead whose footprint overlaps the ego lane.

    Returns (gap, leader speed, leader id) or None.
    """
    ego = world.bodies[ego_id]
    lane = world.map.lane(ego.lane)
    half_lane = lane.width / 2.0
    best = None
    for bid, b in world.bodies.items():
        if bid == ego_id:
            continue
        s, d, *_ = lane.path.locate(b.x, b.y)
        s_e, _, *_ = lane.path.locate(ego.x, ego.y)
        if abs(d) >= half_lane + b.lateral_half_extent():
            continue
        gap = s - s_e - (ego.length + b.length) / 2.0
        if s - s_e <= 0:
            continue
        if best is None or gap < best[0]:
            best = (gap, b.s_dot, bid)
    for oid, poly in world.obstacles.items():
        proj = [lane.path.locate(px, py) for px, py in poly]
        ds = [p[1] for p in proj]
        if max(ds) <= -half_lane or min(ds) >= half_lane:
            continue
        s_e, *_ = lane.path.locate(ego.x, ego.y)
        s_min = min(p[0] for p in proj)
        if max(p[0] for p in proj) <= s_e:
            continue
        gap = s_min - s_e - ego.length / 2.0
        if best is None or gap < best[0]:
            best = (gap, 0.0, oid)
    return best


def time_to_collision(gap, v, v_lead):
    closing = v - v_lead
    if closing <= 0:
        return math.inf
    return float(max(gap, 0.0) / closing)


def ego_controller(world: WorldState, params: EgoParams = None, ego_id="ego") -> AgentCommand:
    params = params or EgoParams()
    ego = world.bodies[ego_id]
    v0 = params.set_speed if params.set_speed is not None else ego.set_speed
    leader = find_leader(world, ego_id)
    if leader is None:
        accel = idm_acceleration(ego.s_dot, v0, None, 0.0, params)
    else:
        gap, v_lead, _ = leader
        if time_to_collision(gap, ego.s_dot, v_lead) < params.ttc_emergency:
            return AgentCommand(accel=params.emergency_brake, d=ego.d)
        accel = idm_acceleration(ego.s_dot, v0, gap, ego.s_dot - v_lead, params)
    # b enters the desired gap; the IDM output itself may exceed it when the gap collapses
    accel = min(max(accel, params.emergency_brake), params.max_accel)
    return AgentCommand(accel=accel, d=ego.d)


# --------------------------------------------------------------------------
# trace

TRACE_COLUMNS = ("t", "x", "y", "heading", "speed", "accel", "lane", "s", "d")


@dataclass
class SimulationTrace:
    dt: float
    times: list
    rows: dict  # participant id -> list of tuples (TRACE_COLUMNS)
    kinds: dict
    sizes: dict
    events: list = field(default_factory=list)
    min_dist: float = math.inf
    min_ttc: float = math.inf
    termination: str = "horizon"
    obstacles: dict = field(default_factory=dict)

    @property
    def participants(self):
        return list(self.rows)

    def __len__(self):
        return len(self.times)

    def world_at(self, k):
        return {pid: dict(zip(TRACE_COLUMNS, r[k])) for pid, r in self.rows.items() if k < len(r)}

    def events_of(self, kind, participant=None):
        out = [e for e in self.events if e["type"] == kind]
        if participant is not None:
            out = [e for e in out if participant in e["participants"]]
        return out

    def to_csv(self, pid) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "x", "y", "heading", "speed", "accel", "lane"))
        for r in self.rows[pid]:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r[:7]])
        return buf.getvalue()

    def summary(self):
        return {
            "min_dist": None if math.isinf(self.min_dist) else self.min_dist,
            "min_ttc": None if math.isinf(self.min_ttc) else self.min_ttc,
            "termination": self.termination,
            "steps": len(self.times),
            "end_time": self.times[-1] if self.times else 0.0,
        }

    def events_json(self) -> str:
        return json.dumps({"summary": self.summary(), "events": self.events}, sort_keys=True, indent=1)


# --------------------------------------------------------------------------
# main loop

def _advance(b: Body, cmd: AgentCommand, dt):
    v0 = b.s_dot
    if cmd.s is not None:
        a = (cmd.speed - v0) / dt
        clamped = min(max(a, A_MIN), A_MAX)
        v1 = max(v0 + clamped * dt, 0.0)
        s1 = b.s + (v0 + v1) / 2.0 * dt
        if clamped == a and cmd.speed >= 0 and abs(s1 - cmd.s) < 1e-2:
            b.s, b.s_dot, b.s_ddot = cmd.s, cmd.speed, cmd.s_ddot
        else:
            b.s, b.s_dot, b.s_ddot = s1, v1, (v1 - v0) / dt
    else:
        a = 0.0 if cmd.accel is None else min(max(cmd.accel, A_MIN), A_MAX)
        v1 = v0 + a * dt
        if v1 < 0.0:
            # stops within the step
            t_stop = v0 / -a if a < 0 else 0.0
            b.s += v0 * t_stop / 2.0
            v1 = 0.0
        else:
            b.s += (v0 + v1) / 2.0 * dt
        b.s_dot = v1
        b.s_ddot = (v1 - v0) / dt
    b.accel = (b.s_dot - v0) / dt
    if cmd.d is not None:
        b.d, b.d_dot, b.d_ddot = cmd.d, cmd.d_dot, cmd.d_ddot
    else:
        b.d_dot, b.d_ddot = 0.0, 0.0


class _Monitor:
    """Per-step event detection."""

    def __init__(self, bodies, lane_map, dt, runners):
        self.dt = dt
        self.map = lane_map
        self.runners = runners
        self.events = []
        self.line = {}
        self.harsh = {}
        self.offroad = {}
        self.encroach = {}
        self.min_dist = math.inf
        self.min_ttc = math.inf
        self.ids = list(bodies)

    def _interval(self, store, key, active, t, kind, pid, min_duration=0.0, extra=None):
        """Open/close a running interval; closed intervals become events."""
        cur = store.get(key)
        if active:
            if cur is None:
                store[key] = {"start": t, "peak": 0.0}
                cur = store[key]
            if extra is not None:
                cur["peak"] = max(cur["peak"], extra)
            return
        if cur is not None:
            self._close(store, key, t, kind, pid, min_duration)

    def _close(self, store, key, t, kind, pid, min_duration):
        cur = store.pop(key)
        duration = t - cur["start"]
        if duration >= min_duration - 1e-9:
            ev = {"type": kind, "participants": [pid], "start": cur["start"], "end": t,
                  "duration": duration}
            if kind == "harsh":
                ev["peak_accel"] = cur["peak"]
            self.events.append(ev)

    def changing_lane(self, b):
        r = self.runners.get(b.id)
        kinds = r.active_kinds() if r is not None else []
        return any(k in ("changelane", "merge_in", "merge_out") for k in kinds) or \
            abs(b.d_dot) > LANE_CHANGE_LATERAL_SPEED

    def step(self, t, bodies):
        ego = bodies.get("ego")
        for pid, b in bodies.items():
            half = b.lateral_half_extent()
            hw = b.lane_width / 2.0
            straddle = abs(b.d_lane) + half > hw and abs(b.d_lane) - half < hw
            self._interval(self.line, pid, straddle, t, "line_pressure", pid)
            off = abs(b.d_lane) > hw + 1e-9
            if off and pid not in self.offroad:
                self.events.append({"type": "off_road", "participants": [pid], "start": t})
            if off:
                self.offroad[pid] = True
            else:
                self.offroad.pop(pid, None)
            harsh = abs(b.accel) > HARSH_ACCEL
            # the step [t - dt, t] carries this acceleration
            self._interval(self.harsh, pid, harsh, max(t - self.dt, 0.0), "harsh", pid,
                           HARSH_MIN_DURATION, abs(b.accel))
            if ego is not None and pid != "ego":
                lane = self.map.lane(ego.lane)
                _, d, *_ = lane.path.locate(b.x, b.y)
                inside = abs(d) < lane.width / 2.0 + half
                if inside:
                    if b.lane_frame != ego.lane_frame or pid in self.encroach:
                        self.encroach.setdefault(pid, t)
                else:
                    self.encroach.pop(pid, None)
        if ego is not None:
            ep = ego.footprint()
            for pid, b in bodies.items():
                if pid == "ego":
                    continue
                center = math.hypot(b.x - ego.x, b.y - ego.y)
                bound = center - (math.hypot(b.length, b.width) + math.hypot(ego.length, ego.width)) / 2.0
                if bound < self.min_dist:
                    self.min_dist = min(self.min_dist, polygon_distance(ep, b.footprint()))
            lead = find_leader(_World(t, bodies, self.map), "ego")
            if lead is not None and lead[2] in bodies:
                ttc = time_to_collision(lead[0], ego.s_dot, lead[1])
                self.min_ttc = min(self.min_ttc, ttc)
        return self._collisions(t, bodies)

    def _collisions(self, t, bodies):
        found = []
        ids = list(bodies)
        prints = {pid: bodies[pid].footprint() for pid in ids}
        for i, a in enumerate(ids):
            ba = bodies[a]
            for b in ids[i + 1:]:
                bb = bodies[b]
                if math.hypot(ba.x - bb.x, ba.y - bb.y) > (math.hypot(ba.length, ba.width) + math.hypot(bb.length, bb.width)) / 2.0:
                    continue
                if polygons_overlap(prints[a], prints[b]):
                    found.append(self._collision_event(t, bodies, a, b))
            for oid, poly in self.map.obstacles.items():
                if polygons_overlap(prints[a], poly):
                    ev = {"type": "collision", "t": t, "participants": [a, oid],
                          "obstacle": oid, "context": {a: self._context(t, bodies, a, None)}}
                    found.append(ev)
        self.events.extend(found)
        return found

    def _context(self, t, bodies, pid, other):
        b = bodies[pid]
        ctx = {"speed": b.s_dot, "accel": b.accel, "lane": b.lane, "frame_lane": b.lane_frame,
               "d_dot": b.d_dot, "changing_lane": self.changing_lane(b),
               "encroach_since": self.encroach.get(pid)}
        if "ego" in bodies and pid != "ego":
            ego = bodies["ego"]
            lane = self.map.lane(ego.lane)
            s, d, *_ = lane.path.locate(b.x, b.y)
            s_e, d_e, *_ = lane.path.locate(ego.x, ego.y)
            ctx["lon_to_ego"] = s - s_e
            ctx["lat_to_ego"] = d - d_e
        return ctx

    def _collision_event(self, t, bodies, a, b):
        return {"type": "collision", "t": t, "participants": [a, b],
                "context": {a: self._context(t, bodies, a, b), b: self._context(t, bodies, b, a)}}

    def finish(self, t):
        for store, kind, min_d in ((self.line, "line_pressure", 0.0), (self.harsh, "harsh", HARSH_MIN_DURATION)):
            for pid in list(store):
                self._close(store, pid, t, kind, pid, min_d)
        self.events.sort(key=lambda e: (e.get("t", e.get("start", 0.0)), e["type"], e["participants"]))


class _World(WorldState):
    def __init__(self, t, bodies, lane_map):
        super().__init__(t, bodies, lane_map, {})


def run(world0: Scenario, dt: float = None, horizon: float = None, ego_params: EgoParams = None,
        stop_on_collision: bool = True) -> SimulationTrace:
    """Simulate a bound scenario at a fixed step and return the full trace."""
    if isinstance(world0, LogicalScenario):
        raise ScenarioUnboundVariables("bind the logical scenario before running it")
    dt = world0.dt if dt is None else dt
    horizon = world0.horizon if horizon is None else horizon
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}]")
    if not 0 < horizon <= MAX_HORIZON:
        raise ValueError(f"horizon must be in (0, {MAX_HORIZON}]")
    lane_map = world0.map
    bodies = {}
    if world0.ego is not None:
        ego = Body(world0.ego, lane_map)
        if ego.set_speed is None:
            ego.set_speed = world0.ego.speed
        bodies["ego"] = ego
    runners = {}
    for spec in world0.agents:
        bodies[spec.id] = Body(spec, lane_map)
        if spec.tree is not None:
            runners[spec.id] = TreeRunner(spec.tree)
    for b in bodies.values():
        b.refresh(lane_map)
    monitor = _Monitor(bodies, lane_map, dt, runners)
    rows = {pid: [] for pid in bodies}
    times = []
    n_steps = int(round(horizon / dt))

    def record(t):
        times.append(t)
        for pid, b in bodies.items():
            rows[pid].append((t, b.x, b.y, b.heading, b.s_dot, b.accel, b.lane, b.s, b.d))

    termination = "horizon"
    t = 0.0
    record(t)
    if monitor.step(t, bodies) and stop_on_collision:
        termination = "collision"
        n_steps = 0
    for k in range(n_steps):
        t = k * dt
        world = WorldState(t, bodies, lane_map, runners)
        cmds = {}
        for pid, runner in runners.items():
            cmds[pid] = runner.tick(world, dt)
        if "ego" in bodies:
            cmds["ego"] = ego_controller(world, ego_params)
        for pid, b in bodies.items():
            _advance(b, cmds.get(pid, AgentCommand()), dt)
        t = (k + 1) * dt
        for b in bodies.values():
            b.refresh(lane_map)
        record(t)
        collisions = monitor.step(t, bodies)
        if collisions and stop_on_collision:
            termination = "collision"
            break
        if runners and all(r.finished for r in runners.values()) and world0.end_s is not None \
                and "ego" in bodies and bodies["ego"].s >= world0.end_s:
            termination = "completed"
            break
    monitor.finish(t)
    return SimulationTrace(dt, times, rows, {pid: b.kind for pid, b in bodies.items()},
                           {pid: (b.length, b.width) for pid, b in bodies.items()},
                           monitor.events, monitor.min_dist, monitor.min_ttc, termination,
                           dict(lane_map.obstacles))


def detect_events(trace: SimulationTrace, kind=None):
    """Events recorded during a run, optionally filtered by type."""
    return list(trace.events) if kind is None else trace.events_of(kind)
