"""Scoring a finished simulation: metric verdicts, participant scores and scenario fitness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

from .errors import NotEgoCollision, UnknownParticipant

SUCCESS, WARNING, FAIL = "success", "warning", "fail"
STATE_POINTS = {SUCCESS: 0.0, WARNING: 2.0, FAIL: 5.0}
METRICS = ("collision", "line_pressure", "aggressive", "off_road")

VALID_CRITICAL = "ValidCritical"
VALID_NONCRITICAL = "ValidNonCritical"
INVALID = "Invalid"


@dataclass(frozen=True)
class ScoreWeights:
    a: float = -0.2
    b: float = 5.0
    alpha1: float = 1.0
    alpha2: float = -1.0
    alpha3: float = 0.2

    def __post_init__(self):
        if not (self.a < 0 and self.alpha1 > 0 and self.alpha2 < 0 and self.alpha3 > 0):
            raise ValueError("weights need a < 0, alpha1 > 0, alpha2 < 0, alpha3 > 0")

    @classmethod
    def unchecked(cls, **kw):
        """Weights without the sign checks, e.g. to switch terms off for comparisons."""
        w = object.__new__(cls)
        for k, f in cls.__dataclass_fields__.items():
            object.__setattr__(w, k, kw.get(k, f.default))
        return w


@dataclass(frozen=True)
class Thresholds:
    line_warning: float = 3.0  # s of continuous straddling
    line_fail: float = 6.0
    harsh_warning: int = 1  # episodes
    harsh_fail: int = 3
    accel_fail: float = 6.0  # any |a| above this fails, m/s^2
    pet: float = 0.5  # s; a cut-in closer than this leaves the ego no response
    critical: float = 5.0


@dataclass
class MetricVerdict:
    metric: str
    state: str
    evidence: list = field(default_factory=list)


@dataclass
class FitnessResult:
    score: float
    verdict: str
    scores: dict
    responsible: bool = None
    branch: str = "weighted_sum"
    terms: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def evaluate_metrics(trace, participant, metrics=METRICS, thresholds: Thresholds = None):
    th = thresholds or Thresholds()
    if participant not in trace.rows:
        raise UnknownParticipant(participant)
    out = []
    for m in metrics:
        evidence = []
        state = SUCCESS
        if m == "collision":
            evidence = [i for i, e in enumerate(trace.events)
                        if e["type"] == "collision" and participant in e["participants"]]
            state = FAIL if evidence else SUCCESS
        elif m == "line_pressure":
            for i, e in enumerate(trace.events):
                if e["type"] == "line_pressure" and participant in e["participants"]:
                    if e["duration"] >= th.line_fail - 1e-9:
                        state = FAIL
                        evidence.append(i)
                    elif e["duration"] >= th.line_warning - 1e-9:
                        state = state if state == FAIL else WARNING
                        evidence.append(i)
        elif m == "aggressive":
            evidence = [i for i, e in enumerate(trace.events)
                        if e["type"] == "harsh" and participant in e["participants"]]
            peak = max((abs(r[5]) for r in trace.rows[participant]), default=0.0)
            if len(evidence) >= th.harsh_fail or peak > th.accel_fail:
                state = FAIL
            elif len(evidence) >= th.harsh_warning:
                state = WARNING
        elif m == "off_road":
            evidence = [i for i, e in enumerate(trace.events)
                        if e["type"] == "off_road" and participant in e["participants"]]
            state = FAIL if evidence else SUCCESS
        else:
            raise ValueError(f"unknown metric {m!r}")
        out.append(MetricVerdict(m, state, evidence))
    return out


def participant_score(verdicts) -> float:
    return sum(STATE_POINTS[v.state] for v in verdicts)


def distance_score(min_dist, w: ScoreWeights = None) -> float:
    w = w or ScoreWeights()
    if min_dist is None or math.isinf(min_dist):
        return 0.0
    return max(0.0, w.a * min_dist + w.b)


def is_responsibility(event, trace=None, thresholds: Thresholds = None) -> bool:
    """Whether the ego caused a collision it is part of."""
    th = thresholds or Thresholds()
    parts = event["participants"]
    if event["type"] != "collision" or "ego" not in parts:
        raise NotEgoCollision(f"event {parts} does not involve the ego")
    other = parts[1] if parts[0] == "ego" else parts[0]
    if event.get("obstacle") is not None:
        return True
    ctx = event["context"]
    ego_ctx, oth = ctx["ego"], ctx[other]
    if ego_ctx["changing_lane"]:
        return True
    if oth.get("lon_to_ego", 0.0) < 0.0:
        return False  # struck from behind
    since = oth.get("encroach_since")
    if since is not None and event["t"] - since < th.pet:
        return False
    return True


def combine_scores(unreasonable, ego_collision, responsible, score_ego, score_agent, min_dist,
                   w: ScoreWeights = None, critical=5.0):
    """Branching of the scenario score; returns (score, verdict, branch, dist score)."""
    w = w or ScoreWeights()
    s_dist = distance_score(min_dist, w)
    if unreasonable:
        return -score_agent, INVALID, "unreasonable_agent", s_dist
    if ego_collision and responsible:
        return score_ego, VALID_CRITICAL, "ego_responsible", s_dist
    score = w.alpha1 * score_ego + w.alpha2 * score_agent + w.alpha3 * s_dist
    return score, (VALID_CRITICAL if score >= critical else VALID_NONCRITICAL), "weighted_sum", s_dist


def fitness(trace, w: ScoreWeights = None, thresholds: Thresholds = None, metrics=METRICS) -> FitnessResult:
    w = w or ScoreWeights()
    th = thresholds or Thresholds()
    verdicts = {pid: evaluate_metrics(trace, pid, metrics, th) for pid in trace.rows}
    scores = {pid: participant_score(v) for pid, v in verdicts.items()}
    score_ego = scores.get("ego", 0.0)
    agents = [p for p in trace.rows if p != "ego"]
    score_agent = sum(scores[p] for p in agents)

    unreasonable = False
    ego_collision = False
    responsible = None
    for pid in agents:
        if any(v.metric == "off_road" and v.state == FAIL for v in verdicts[pid]):
            unreasonable = True
    for e in trace.events:
        if e["type"] != "collision":
            continue
        parts = e["participants"]
        if "ego" in parts:
            ego_collision = True
            r = is_responsibility(e, trace, th)
            responsible = r if responsible is None else (responsible and r)
            if not r:
                unreasonable = True
        elif any(p in agents for p in parts):
            unreasonable = True

    score, verdict, branch, s_dist = combine_scores(unreasonable, ego_collision, bool(responsible),
                                                    score_ego, score_agent, trace.min_dist, w, th.critical)
    terms = {"score_ego": score_ego, "score_agent": score_agent, "score_dist": s_dist,
             "min_dist": None if math.isinf(trace.min_dist) else trace.min_dist,
             "verdicts": {pid: {v.metric: v.state for v in vs} for pid, vs in verdicts.items()}}
    return FitnessResult(float(score), verdict, scores, responsible, branch, terms)
