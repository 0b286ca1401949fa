"""Search over logical-scenario variables for critical, valid concrete scenarios.

Points live in the unit hypercube.  A campaign seeds with a dispersed
(max-min distance) sample, then either runs Bayesian optimisation with an
expected-improvement acquisition (few variables) or a genetic algorithm
(many variables).  Every simulation is appended to a ledger.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateSurrogate, EmptyPopulation
from .evaluation import INVALID, VALID_CRITICAL, ScoreWeights, Thresholds, fitness
from .gp import GaussianProcess, maximize_ei
from .scenario import LogicalScenario, bind, canonical_json, effective_dimension, sample

log = logging.getLogger(__name__)

BO, GA, GRID, RANDOM = "bo", "ga", "grid", "random"
CANDIDATE_POOL = 256
EI_STARTS = 64
FAILED_SCORE = -50.0  # fitness recorded when a simulation raises


@dataclass
class CampaignConfig:
    budget: int = 400
    eps_n: int = 10
    xi: float = 5.0
    mutation_rate: float = 0.5
    crossover_rate: float = 0.5
    patience: int = 50
    seed: int = 0
    workers: int = 1
    algorithm: Optional[str] = None  # None: chosen from the dimension
    seed_factor_bo: int = 20
    population_factor_ga: int = 10
    refit_every: int = 10
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        w = d.pop("weights", None)
        th = d.pop("thresholds", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown campaign settings {sorted(unknown)}")
        cfg = cls(**d)
        if w is not None:
            cfg.weights = ScoreWeights(**w)
        if th is not None:
            cfg.thresholds = Thresholds(**th)
        return cfg


def choose_algorithm(n: int, eps_n: int = 10) -> str:
    if n < 1:
        raise ValueError("need at least one variable")
    return BO if n < eps_n else GA


def bo_seed_count(n: int, factor: int = 20) -> int:
    return n * factor


def ga_population_size(n: int, factor: int = 10) -> int:
    return n * factor


# --------------------------------------------------------------------------
# adaptive random search

def adaptive_random_search(n, count, rng, existing=None, pool=CANDIDATE_POOL):
    """Greedy max-min dispersion: each point is the pool candidate farthest from all chosen ones."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    chosen = [] if existing is None else [np.asarray(p, float) for p in np.atleast_2d(existing) if len(p)]
    out = []
    for _ in range(count):
        if not chosen:
            p = rng.random(n)
        else:
            cand = rng.random((pool, n))
            S = np.array(chosen)
            d2 = ((cand[:, None, :] - S[None, :, :]) ** 2).sum(-1).min(1)
            p = cand[int(np.argmax(d2))]
        chosen.append(p)
        out.append(p)
    return np.array(out).reshape(count, n)


# --------------------------------------------------------------------------
# Bayesian optimisation

class BOState:
    """Surrogate reused across iterations; hyperparameters refit periodically."""

    def __init__(self, refit_every=10):
        self.gp = None
        self.refit_every = refit_every
        self.fits = 0


def bo_suggest(X, y, n, xi, rng, state: BOState = None):
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(y) == 0 or np.ptp(y) == 0.0:
        raise DegenerateSurrogate("all observed fitness values are identical")
    state = state or BOState()
    optimize = state.gp is None or state.fits % state.refit_every == 0
    if state.gp is None:
        state.gp = GaussianProcess()
    state.gp.fit(X, y, optimize=optimize)
    state.fits += 1
    starts = rng.random((EI_STARTS, n))
    x, _ = maximize_ei(state.gp, float(y.max()), xi, starts)
    return x


# --------------------------------------------------------------------------
# genetic algorithm

def roulette_probabilities(f):
    """Selection probabilities proportional to fitness, shifted when not all positive."""
    f = np.asarray(f, float)
    if len(f) == 0:
        raise EmptyPopulation("empty population")
    w = f - f.min() + 1e-9 if f.min() <= 0 else f.copy()
    total = w.sum()
    if not total > 0:
        return np.full(len(f), 1.0 / len(f))
    return w / total


def _breed(p1, p2, rng, crossover_rate, mutation_rate):
    """Uniform crossover then per-coordinate uniform redraw; returns (child, mutation mask)."""
    swap = rng.random(len(p1)) < crossover_rate
    child = np.where(swap, p2, p1)
    mask = rng.random(len(p1)) < mutation_rate
    child = np.where(mask, rng.random(len(p1)), child)
    return child, mask


def ga_step(population, fit, rng, mutation_rate=0.5, crossover_rate=0.5, elitism=1):
    pop = np.asarray(population, float)
    if len(pop) == 0:
        raise EmptyPopulation("empty population")
    f = np.asarray(fit, float)
    probs = roulette_probabilities(f)
    order = np.argsort(-f, kind="stable")
    nxt = [pop[i].copy() for i in order[:elitism]]
    while len(nxt) < len(pop):
        i, j = rng.choice(len(pop), size=2, p=probs)
        child, _ = _breed(pop[i], pop[j], rng, crossover_rate, mutation_rate)
        nxt.append(child)
    return np.array(nxt)


# --------------------------------------------------------------------------
# scenario evaluation (also used by worker processes)

_WORKER = {}


def _worker_init(ls_doc, weights, thresholds):
    _WORKER["ls"] = LogicalScenario.from_dict(ls_doc)
    _WORKER["weights"] = ScoreWeights(**weights)
    _WORKER["thresholds"] = Thresholds(**thresholds)


def evaluate_scenario(ls: LogicalScenario, u, weights: ScoreWeights = None, thresholds: Thresholds = None):
    """Sample, bind, simulate and score one point; never raises."""
    from .simulator import run
    rec = {"u": [float(x) for x in u]}
    try:
        cts = sample(ls, u)
        rec["values"] = [float(v) for v in cts.values]
        trace = run(bind(cts))
        res = fitness(trace, weights, thresholds)
        rec.update(fitness=res.score, verdict=res.verdict, branch=res.branch,
                   summary=trace.summary(),
                   terms={k: res.terms[k] for k in ("score_ego", "score_agent", "score_dist")})
    except Exception as exc:  # a broken point must not end the campaign
        rec.update(fitness=FAILED_SCORE, verdict=INVALID, branch="error", error=f"{type(exc).__name__}: {exc}")
        rec.setdefault("values", None)
    return rec


def _eval_in_worker(u):
    return evaluate_scenario(_WORKER["ls"], u, _WORKER["weights"], _WORKER["thresholds"])


class ScenarioObjective:
    """Evaluates batches of unit points, optionally in worker processes (results in input order)."""

    def __init__(self, ls: LogicalScenario, cfg: CampaignConfig):
        self.ls = ls
        self.cfg = cfg
        self.n = effective_dimension(ls)
        self._pool = None

    def __call__(self, U):
        U = [np.asarray(u, float) for u in U]
        if self.cfg.workers <= 1 or len(U) <= 1:
            return [evaluate_scenario(self.ls, u, self.cfg.weights, self.cfg.thresholds) for u in U]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                self.cfg.workers, initializer=_worker_init,
                initargs=(self.ls.to_dict(), asdict(self.cfg.weights), asdict(self.cfg.thresholds)))
        return list(self._pool.map(_eval_in_worker, U))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


class FunctionObjective:
    """Wraps ``g(u) -> float`` as an objective (no verdicts beyond non-critical)."""

    def __init__(self, g: Callable, n: int, critical: float = math.inf):
        self.g = g
        self.n = n
        self.critical = critical

    def __call__(self, U):
        out = []
        for u in U:
            val = float(self.g(np.asarray(u, float)))
            out.append({"u": [float(x) for x in u], "fitness": val,
                        "verdict": VALID_CRITICAL if val >= self.critical else "ValidNonCritical"})
        return out

    def close(self):
        pass


# --------------------------------------------------------------------------
# ledger

@dataclass
class CampaignLedger:
    header: dict
    records: list = field(default_factory=list)
    stop_reason: Optional[str] = None

    def __len__(self):
        return len(self.records)

    @property
    def fitness(self):
        return np.array([r["fitness"] for r in self.records], float)

    @property
    def U(self):
        return np.array([r["u"] for r in self.records], float).reshape(len(self.records), -1)

    def verdicts(self):
        return [r["verdict"] for r in self.records]

    def best(self):
        return max(self.records, key=lambda r: r["fitness"]) if self.records else None

    def to_ndjson(self) -> str:
        lines = [canonical_json({"type": "header", **self.header})]
        lines += [canonical_json({"type": "eval", **r}) for r in self.records]
        lines.append(canonical_json({"type": "stop", "reason": self.stop_reason, "evaluations": len(self.records)}))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ndjson())

    @classmethod
    def from_ndjson(cls, text):
        header, records, stop = None, [], None
        for k, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type", None)
            if kind == "header":
                header = obj
            elif kind == "eval":
                records.append(obj)
            elif kind == "stop":
                stop = obj.get("reason")
            else:
                raise ValueError(f"line {k + 1}: unknown record type {kind!r}")
        if header is None:
            raise ValueError("ledger has no header line")
        return cls(header, records, stop)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_ndjson(fh.read())


# --------------------------------------------------------------------------
# campaign loop

BUDGET_EXHAUSTED = "BudgetExhausted"
PATIENCE_EXHAUSTED = "NoNewCritical"
SEARCH_COMPLETE = "SearchSpaceExhausted"


class _Run:
    def __init__(self, objective, cfg, ledger):
        self.objective = objective
        self.cfg = cfg
        self.ledger = ledger
        self.since_critical = 0
        self.stop = None

    @property
    def remaining(self):
        return self.cfg.budget - len(self.ledger.records)

    def evaluate(self, U, phase, count_patience=True):
        U = list(U)[: max(self.remaining, 0)]
        if not U:
            self.stop = self.stop or BUDGET_EXHAUSTED
            return []
        recs = self.objective(U)
        for r in recs:
            r["index"] = len(self.ledger.records)
            r["phase"] = phase
            self.ledger.records.append(r)
            if r["verdict"] == VALID_CRITICAL:
                self.since_critical = 0
            elif count_patience:
                self.since_critical += 1
                if self.since_critical >= self.cfg.patience and self.stop is None:
                    self.stop = PATIENCE_EXHAUSTED
        if self.remaining <= 0 and self.stop is None:
            self.stop = BUDGET_EXHAUSTED
        return recs


def _header(name, names, n, algorithm, cfg):
    config = json.loads(json.dumps(cfg.to_dict()))
    config.pop("workers")  # parallelism never changes results, so it is not recorded
    return {"scenario": name, "variables": names, "dimension": n, "algorithm": algorithm, "config": config}


def run_search(objective, n, cfg: CampaignConfig, name="objective", names=None, progress=None) -> CampaignLedger:
    """Campaign loop over any batch objective returning ledger records."""
    algorithm = cfg.algorithm or choose_algorithm(n, cfg.eps_n)
    ledger = CampaignLedger(_header(name, names or [f"x{i}" for i in range(n)], n, algorithm, cfg))
    rng = np.random.default_rng(cfg.seed)
    run = _Run(objective, cfg, ledger)
    try:
        if algorithm == BO:
            _bo_loop(run, n, rng, progress)
        elif algorithm == GA:
            _ga_loop(run, n, rng, progress)
        elif algorithm == RANDOM:
            while run.stop is None:
                run.evaluate([rng.random(n)], RANDOM)
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    finally:
        objective.close()
    ledger.stop_reason = run.stop or BUDGET_EXHAUSTED
    return ledger


def _bo_loop(run, n, rng, progress):
    cfg = run.cfg
    seeds = adaptive_random_search(n, min(bo_seed_count(n, cfg.seed_factor_bo), cfg.budget), rng)
    run.evaluate(seeds, "seed", count_patience=False)
    state = BOState(cfg.refit_every)
    while run.stop is None:
        X = run.ledger.U
        y = run.ledger.fitness
        try:
            u = bo_suggest(X, y, n, cfg.xi, rng, state)
            phase = BO
        except DegenerateSurrogate:
            u = adaptive_random_search(n, 1, rng, X)[0]
            phase = "fallback"
        run.evaluate([u], phase)
        if progress:
            progress(run.ledger)


def _ga_loop(run, n, rng, progress):
    cfg = run.cfg
    size = ga_population_size(n, cfg.population_factor_ga)
    pop = adaptive_random_search(n, min(size, cfg.budget), rng)
    recs = run.evaluate(pop, "seed", count_patience=False)
    fit = [r["fitness"] for r in recs]
    pop = pop[: len(fit)]
    generation = 0
    while run.stop is None and len(pop):
        generation += 1
        nxt = ga_step(pop, fit, rng, cfg.mutation_rate, cfg.crossover_rate)
        elite_fit = float(np.max(fit))
        recs = run.evaluate(nxt[1:], f"ga{generation}")
        pop = nxt[: 1 + len(recs)]
        fit = [elite_fit] + [r["fitness"] for r in recs]
        if progress:
            progress(run.ledger)


def run_campaign(ls: LogicalScenario, cfg: CampaignConfig = None, progress=None) -> CampaignLedger:
    cfg = cfg or CampaignConfig()
    n = effective_dimension(ls)
    if n < 1:
        raise ValueError("the logical scenario has no free variables")
    return run_search(ScenarioObjective(ls, cfg), n, cfg, ls.name, ls.variable_names, progress)


def grid_points(n, steps):
    axes = [np.linspace(0.0, 1.0, steps)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def grid_campaign(ls: LogicalScenario, steps=5, cfg: CampaignConfig = None) -> CampaignLedger:
    """Exhaustive evaluation of an evenly spaced grid (baseline)."""
    cfg = cfg or CampaignConfig()
    n = effective_dimension(ls)
    U = grid_points(n, steps)
    cfg = CampaignConfig(**{**cfg.__dict__, "budget": len(U), "algorithm": GRID})
    objective = ScenarioObjective(ls, cfg)
    ledger = CampaignLedger(_header(ls.name, ls.variable_names, n, GRID, cfg))
    run = _Run(objective, cfg, ledger)
    try:
        run.evaluate(U, GRID, count_patience=False)
    finally:
        objective.close()
    ledger.stop_reason = SEARCH_COMPLETE
    return ledger
