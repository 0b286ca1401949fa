"""Logical scenarios (behavior trees + variables) and their concrete instances.

Search works in the unit hypercube; this module maps a point ``u`` to
variable values, derives relative variables and writes the values into a
copy of the scenario document (``bind``).

Variable targets are dotted paths rooted at a participant id:

* ``<agent>.init.<field>`` - initial state field (``ego.init.speed``)
* ``<agent>.<node>.<field>`` - leaf/composite parameter of a tree node
* ``<agent>.<node>.condition.<field>[.<i>...]`` - trigger condition parameter
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .behavior import BehaviorTree, Diagnostic, validate as validate_tree
from .errors import DomainError, ScenarioFormatError, UnresolvedTarget
from .lanes import LaneMap

DEFAULT_LENGTH = 4.6
DEFAULT_WIDTH = 1.9
AGENT_KINDS = ("vehicle", "bicycle", "human")


# --------------------------------------------------------------------------
# bound (executable) scenario

@dataclass
class AgentSpec:
    id: str
    lane: str
    s: float
    speed: float
    kind: str = "vehicle"
    d: float = 0.0
    accel: float = 0.0
    d_dot: float = 0.0
    d_ddot: float = 0.0
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH
    tree: Optional[BehaviorTree] = None

    @classmethod
    def from_dict(cls, d, is_ego=False):
        init = d.get("init", {})
        aid = "ego" if is_ego else str(d["id"])
        tree = None
        if not is_ego and d.get("tree") is not None:
            tree = BehaviorTree.from_dict(d["tree"], aid)
        size = d.get("size", [DEFAULT_LENGTH, DEFAULT_WIDTH])
        return cls(
            id=aid, lane=str(init["lane"]), s=float(init["s"]), speed=float(init["speed"]),
            kind="ego" if is_ego else d.get("kind", "vehicle"), d=float(init.get("d", 0.0)),
            accel=float(init.get("accel", 0.0)), d_dot=float(init.get("d_dot", 0.0)),
            d_ddot=float(init.get("d_ddot", 0.0)), length=float(size[0]), width=float(size[1]),
            tree=tree,
        )


@dataclass
class EgoSpec(AgentSpec):
    set_speed: Optional[float] = None


@dataclass
class Scenario:
    """A fully concrete world description, ready for ``simulator.run``."""

    map: LaneMap
    agents: list
    ego: Optional[EgoSpec] = None
    dt: float = 0.1
    horizon: float = 20.0
    end_s: Optional[float] = None

    @classmethod
    def from_dict(cls, doc):
        try:
            lane_map = LaneMap.from_dict(doc["map"])
            agents = [AgentSpec.from_dict(a) for a in doc.get("agents", [])]
            ego = None
            if doc.get("ego") is not None:
                e = doc["ego"]
                base = AgentSpec.from_dict(e, is_ego=True)
                ego = EgoSpec(**{k: getattr(base, k) for k in base.__dataclass_fields__},
                              set_speed=e.get("set_speed"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioFormatError):
                raise
            raise ScenarioFormatError(f"bad scenario document: {exc!r}") from exc
        ids = [a.id for a in agents]
        if len(set(ids)) != len(ids) or "ego" in ids:
            raise ScenarioFormatError("agent ids must be unique and may not be 'ego'")
        for a in agents + ([ego] if ego else []):
            if a.lane not in lane_map.lanes:
                raise ScenarioFormatError(f"{a.id}: unknown lane {a.lane!r}")
        sim = doc.get("simulation", {})
        return cls(lane_map, agents, ego, float(sim.get("dt", 0.1)),
                   float(sim.get("horizon", 20.0)), sim.get("end_s"))


# --------------------------------------------------------------------------
# variables

@dataclass(frozen=True)
class UniformRange:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"uniform range needs lo < hi, got [{self.lo}, {self.hi}]")

    def from_unit(self, u):
        return self.lo + u * (self.hi - self.lo)

    def to_unit(self, x):
        return (x - self.lo) / (self.hi - self.lo)

    def contains(self, x):
        return self.lo - 1e-9 <= x <= self.hi + 1e-9

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Normal:
    """Normal distribution truncated to [lo, hi]."""

    mean: float
    std: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.std > 0:
            raise DomainError("normal std must be positive")
        if not self.lo < self.hi:
            raise DomainError("normal truncation needs lo < hi")

    def from_unit(self, u):
        a = norm.cdf((self.lo - self.mean) / self.std)
        b = norm.cdf((self.hi - self.mean) / self.std)
        x = self.mean + self.std * float(norm.ppf(a + u * (b - a)))
        return min(max(x, self.lo), self.hi)

    def to_unit(self, x):
        a = norm.cdf((self.lo - self.mean) / self.std)
        b = norm.cdf((self.hi - self.mean) / self.std)
        return float((norm.cdf((x - self.mean) / self.std) - a) / (b - a))

    def contains(self, x):
        return self.lo - 1e-9 <= x <= self.hi + 1e-9

    def to_dict(self):
        return {"kind": "normal", "mean": self.mean, "std": self.std, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Discrete:
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise DomainError("discrete domain needs at least one value")

    def from_unit(self, u):
        m = len(self.values)
        # bucket boundaries belong to the lower bucket
        idx = min(max(math.ceil(u * m) - 1, 0), m - 1)
        return self.values[idx]

    def to_unit(self, x):
        idx = self.values.index(x)
        return (idx + 0.5) / len(self.values)

    def contains(self, x):
        return x in self.values

    def to_dict(self):
        return {"kind": "discrete", "values": list(self.values)}


def domain_from_dict(d):
    kind = d.get("kind")
    if kind == "uniform":
        return UniformRange(float(d["lo"]), float(d["hi"]))
    if kind == "normal":
        return Normal(float(d["mean"]), float(d["std"]), float(d["lo"]), float(d["hi"]))
    if kind == "discrete":
        return Discrete(tuple(d["values"]))
    raise ScenarioFormatError(f"unknown domain kind {kind!r}")


def _targets(t):
    return [t] if isinstance(t, str) else list(t)


@dataclass
class Variable:
    name: str
    target: object  # path or list of paths
    domain: object

    def to_dict(self):
        return {"name": self.name, "target": self.target, "domain": self.domain.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["target"], domain_from_dict(d["domain"]))


_FUNCTIONS: dict = {}


def register_function(name: str, fn: Callable[[float], float]):
    """Make ``fn`` available to relative variables as ``{"kind": "function", "name": name}``."""
    _FUNCTIONS[name] = fn


register_function("identity", lambda x: x)
register_function("negate", lambda x: -x)


@dataclass
class RelativeVariable:
    """``value = f(base)`` with f affine, a clamp, or a registered named function."""

    name: str
    base: str
    transform: dict
    target: object = None
    bounds: Optional[tuple] = None  # values outside raise DomainError

    def apply(self, x):
        tf = self.transform
        kind = tf.get("kind", "affine")
        if kind == "affine":
            y = float(tf.get("scale", 1.0)) * x + float(tf.get("offset", 0.0))
        elif kind == "clamp":
            y = min(max(x, float(tf["lo"])), float(tf["hi"]))
        elif kind == "function":
            if tf["name"] not in _FUNCTIONS:
                raise DomainError(f"unregistered function {tf['name']!r}")
            y = _FUNCTIONS[tf["name"]](x)
        else:
            raise ScenarioFormatError(f"unknown transform kind {kind!r}")
        if "min" in tf:
            y = max(y, float(tf["min"]))
        if "max" in tf:
            y = min(y, float(tf["max"]))
        if self.bounds is not None and not (self.bounds[0] - 1e-9 <= y <= self.bounds[1] + 1e-9):
            raise DomainError(f"{self.name}={y} violates bounds {self.bounds}")
        return y

    def to_dict(self):
        d = {"name": self.name, "base": self.base, "transform": dict(self.transform)}
        if self.target is not None:
            d["target"] = self.target
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        return d

    @classmethod
    def from_dict(cls, d):
        b = d.get("bounds")
        return cls(d["name"], d["base"], dict(d["transform"]), d.get("target"),
                   None if b is None else (float(b[0]), float(b[1])))


# --------------------------------------------------------------------------
# target paths

def _find_participant(doc, pid):
    if pid == "ego":
        if doc.get("ego") is None:
            raise UnresolvedTarget("scenario has no ego")
        return doc["ego"]
    for a in doc.get("agents", []):
        if str(a.get("id")) == pid:
            return a
    raise UnresolvedTarget(f"no participant {pid!r}")


def _find_node(node, node_id):
    if node.get("id") == node_id:
        return node
    for c in node.get("children", []):
        hit = _find_node(c, node_id)
        if hit is not None:
            return hit
    return None


def resolve_target(doc, path):
    """Return (container, key) addressed by ``path`` inside a scenario document."""
    parts = path.split(".")
    if len(parts) < 3:
        raise UnresolvedTarget(f"target {path!r} needs at least <participant>.<node|init>.<field>")
    owner = _find_participant(doc, parts[0])
    if parts[1] == "init":
        container = owner.setdefault("init", {})
    else:
        tree = owner.get("tree")
        container = _find_node(tree, parts[1]) if tree else None
        if container is None:
            raise UnresolvedTarget(f"{path!r}: no node {parts[1]!r}")
    rest = parts[2:]
    for key in rest[:-1]:
        try:
            container = container[int(key)] if isinstance(container, list) else container[key]
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise UnresolvedTarget(f"{path!r}: cannot descend into {key!r}") from exc
        if container is None:
            raise UnresolvedTarget(f"{path!r}: {key!r} is empty")
    last = rest[-1]
    if isinstance(container, list):
        last = int(last)
        if last >= len(container):
            raise UnresolvedTarget(path)
    elif not isinstance(container, dict):
        raise UnresolvedTarget(path)
    return container, last


def get_target(doc, path):
    container, key = resolve_target(doc, path)
    try:
        return container[key]
    except KeyError as exc:
        raise UnresolvedTarget(path) from exc


def set_target(doc, path, value, create=False):
    container, key = resolve_target(doc, path)
    if isinstance(container, dict) and key not in container and not create:
        raise UnresolvedTarget(f"{path!r}: field {key!r} does not exist")
    container[key] = value


# --------------------------------------------------------------------------
# logical / concrete scenarios

@dataclass
class LogicalScenario:
    """A scenario document plus variable declarations.

    ``template`` is the JSON-like scenario document (map, ego, agents,
    simulation settings) without the variable sections.
    """

    template: dict
    variables: list = field(default_factory=list)
    relative_variables: list = field(default_factory=list)
    distributions: dict = field(default_factory=dict)
    name: str = "scenario"

    def __post_init__(self):
        names = [v.name for v in self.variables] + [r.name for r in self.relative_variables]
        if len(set(names)) != len(names):
            raise ScenarioFormatError("variable names must be unique")
        self._order = self._relative_order()

    @property
    def variable_names(self):
        return [v.name for v in self.variables]

    def _relative_order(self):
        free = {v.name for v in self.variables}
        pending = {r.name: r for r in self.relative_variables}
        known = set(free)
        order = []
        while pending:
            ready = sorted(n for n, r in pending.items() if r.base in known)
            if not ready:
                missing = {r.base for r in pending.values()} - known - set(pending)
                if missing:
                    raise ScenarioFormatError(f"relative variables reference unknown bases {sorted(missing)}")
                raise ScenarioFormatError("cyclic dependency among relative variables")
            for n in ready:
                order.append(pending.pop(n))
                known.add(n)
        return order

    def resolve(self, values) -> dict:
        """All variable assignments (free + relative) for free ``values`` in declaration order."""
        assign = {v.name: val for v, val in zip(self.variables, values)}
        for r in self._order:
            assign[r.name] = r.apply(assign[r.base])
        return assign

    def to_dict(self):
        doc = copy.deepcopy(self.template)
        doc["name"] = self.name
        doc["variables"] = [v.to_dict() for v in self.variables]
        doc["relative_variables"] = [r.to_dict() for r in self.relative_variables]
        if self.distributions:
            doc["distributions"] = copy.deepcopy(self.distributions)
        return doc

    @classmethod
    def from_dict(cls, doc):
        doc = copy.deepcopy(doc)
        try:
            variables = [Variable.from_dict(v) for v in doc.pop("variables", [])]
            rels = [RelativeVariable.from_dict(r) for r in doc.pop("relative_variables", [])]
        except (KeyError, TypeError) as exc:
            raise ScenarioFormatError(f"bad variable declaration: {exc!r}") from exc
        dists = doc.pop("distributions", {})
        name = doc.pop("name", "scenario")
        ls = cls(doc, variables, rels, dists, name)
        Scenario.from_dict(doc)  # structural check of the template
        return ls


@dataclass
class ConcreteTestScenario:
    ls: LogicalScenario
    values: tuple
    u: Optional[tuple] = None

    @property
    def assignments(self) -> dict:
        return self.ls.resolve(self.values)

    def as_dict(self):
        return dict(zip(self.ls.variable_names, self.values))


def effective_dimension(ls: LogicalScenario) -> int:
    return len(ls.variables)


def sample(ls: LogicalScenario, u) -> ConcreteTestScenario:
    """Map a unit-hypercube point to a concrete test scenario."""
    u = tuple(float(x) for x in np.asarray(u, float).reshape(-1))
    n = effective_dimension(ls)
    if len(u) != n:
        raise DomainError(f"expected a point of dimension {n}, got {len(u)}")
    if any(not (0.0 <= x <= 1.0) for x in u):
        raise DomainError(f"unit point outside [0,1]^n: {u}")
    values = tuple(v.domain.from_unit(x) for v, x in zip(ls.variables, u))
    ls.resolve(values)  # raises DomainError on bound violations
    return ConcreteTestScenario(ls, values, u)


def concrete(ls: LogicalScenario, values) -> ConcreteTestScenario:
    """Concrete scenario from explicit variable values (declaration order)."""
    values = tuple(values)
    if len(values) != effective_dimension(ls):
        raise DomainError(f"expected {effective_dimension(ls)} values, got {len(values)}")
    for v, x in zip(ls.variables, values):
        if not v.domain.contains(x):
            raise DomainError(f"{v.name}={x} outside its domain")
    u = tuple(float(v.domain.to_unit(x)) for v, x in zip(ls.variables, values))
    ls.resolve(values)
    return ConcreteTestScenario(ls, values, u)


def bind_document(cts: ConcreteTestScenario) -> dict:
    doc = copy.deepcopy(cts.ls.template)
    assign = cts.assignments
    for v in cts.ls.variables:
        for path in _targets(v.target):
            set_target(doc, path, _plain(assign[v.name]))
    for r in cts.ls.relative_variables:
        if r.target is None:
            continue
        for path in _targets(r.target):
            set_target(doc, path, _plain(assign[r.name]))
    return doc


def _plain(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def bind(cts: ConcreteTestScenario) -> Scenario:
    """Substitute all variable values and build the executable scenario."""
    return Scenario.from_dict(bind_document(cts))


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def validate_scenario(ls_or_doc) -> list:
    """Diagnostics for every tree in the scenario plus unresolvable variable targets."""
    ls = ls_or_doc if isinstance(ls_or_doc, LogicalScenario) else LogicalScenario.from_dict(ls_or_doc)
    scen = Scenario.from_dict(ls.template)
    context = {
        "agents": [a.id for a in scen.agents] + (["ego"] if scen.ego else []),
        "obstacles": list(scen.map.obstacles),
        "lanes": list(scen.map.lanes),
        "nodes": {a.id: [n.id for n in a.tree.nodes()] for a in scen.agents if a.tree},
    }
    diags = []
    for a in scen.agents:
        if a.tree is not None:
            diags.extend(validate_tree(a.tree, context))
        if a.kind not in AGENT_KINDS:
            diags.append(Diagnostic("UnknownKind", a.id, f"agent kind {a.kind!r}"))
    for v in list(ls.variables) + [r for r in ls.relative_variables if r.target is not None]:
        for path in _targets(v.target):
            try:
                get_target(ls.template, path)
            except UnresolvedTarget as exc:
                diags.append(Diagnostic("UnresolvedTarget", v.name, str(exc)))
    return diags
