"""Turn a logged trajectory into a behavior tree.

Pipeline: estimate Frenet states from positions, greedily partition them
into characteristic states (``partition``), optionally sharpen the
breakpoints with polynomial fits (``refine``; in semantic mode also
``segment_by_models``), label each piece and emit a sequence tree
(``build_bt``).  ``reconstruct`` replays the tree open loop so
the result can be compared with the log (``reconstruction_error``).
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import null_space
from scipy.signal import savgol_filter

from .behavior import (BehaviorTree, EndsByBehaviorCondition, TimeCondition, leaf, sequence)
from .errors import EmptyDistribution, EmptyOverlap, TooFewStates, UnknownProperty
from .frenet import (FrenetState, ReferencePath, TrajectoryPoint, partition_cost, plan_segment,
                     project, unproject)
from .lanes import Lane, LaneMap
from .scenario import (AgentSpec, LogicalScenario, Scenario, UniformRange, Variable,
                       canonical_json, get_target)

CHANGE_LANE, CRUISE, FOLLOW_LOG = "ChangeLane", "Cruise", "FollowLog"
_LEAF_TYPE = {CHANGE_LANE: "changelane", CRUISE: "cruise", FOLLOW_LOG: "follow_log"}


@dataclass(frozen=True)
class PartitionConfig:
    eps_part: float = 1.0
    eps_lat: float = 2.0
    eps_vel: float = 1.0
    window: int = 7  # derivative filter length (samples, odd)
    polyorder: int = 5
    weights: tuple = None  # per-component weights of the partition cost

    def __post_init__(self):
        if not (self.eps_part > 0 and self.eps_lat > 0 and self.eps_vel > 0):
            raise ValueError("partition thresholds must be positive")


@dataclass(frozen=True)
class CharacteristicState:
    state: FrenetState
    index: int
    forced_follow: bool = False  # emitted by the no-progress rule


@dataclass(frozen=True)
class SegmentLabel:
    kind: str
    start: CharacteristicState
    end: CharacteristicState


# --------------------------------------------------------------------------
# state estimation

def _uniform(t):
    dt = np.diff(t)
    return len(dt) > 0 and np.allclose(dt, dt[0], rtol=1e-6, atol=1e-9)


def cartesian_derivatives(traj, window=7, polyorder=5):
    """Velocity and acceleration arrays (N, 2) estimated from positions."""
    t = np.array([p.t for p in traj], float)
    xy = np.array([[p.x, p.y] for p in traj], float)
    n = len(t)
    if n < 2:
        raise TooFewStates("need at least two samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if _uniform(t) and n >= 3:
        w = min(window, n if n % 2 else n - 1)
        order = min(polyorder, w - 1)
        dt = t[1] - t[0]
        if order >= 2:
            vel = savgol_filter(xy, w, order, deriv=1, delta=dt, axis=0, mode="interp")
            acc = savgol_filter(xy, w, order, deriv=2, delta=dt, axis=0, mode="interp")
            return vel, acc
    vel = np.gradient(xy, t, axis=0)
    acc = np.gradient(vel, t, axis=0) if n >= 2 else np.zeros_like(vel)
    return vel, acc


def estimate_states(traj, path: ReferencePath, cfg: PartitionConfig = None, max_lateral=50.0):
    cfg = cfg or PartitionConfig()
    vel, acc = cartesian_derivatives(traj, cfg.window, cfg.polyorder)
    return [project(p, v, a, path, max_lateral) for p, v, a in zip(traj, vel, acc)]


# --------------------------------------------------------------------------
# greedy partition

def _states_array(states):
    return np.array([[s.s, s.s_dot, s.s_ddot, s.d, s.d_dot, s.d_ddot, s.t] for s in states])


def partition_states(states, cfg: PartitionConfig = None, trace=None):
    """Greedy segmentation over already estimated states.

    ``trace`` (a list) receives ``(start, curr, cost)`` for every evaluated
    window when given.
    """
    cfg = cfg or PartitionConfig()
    n = len(states)
    if n < 2:
        raise TooFewStates("need at least two states")
    arr = _states_array(states)
    css = [CharacteristicState(states[0], 0)]
    start, curr = 0, 1
    while curr < n:
        plan = plan_segment(states[start], states[curr])
        cost = partition_cost(arr[start:curr + 1], plan, cfg.weights)
        if trace is not None:
            trace.append((start, curr, cost))
        if cost > cfg.eps_part:
            if curr - 1 > start:
                css.append(CharacteristicState(states[curr - 1], curr - 1))
                start = curr - 1
            else:
                # the very first extension already fails: take it as is
                css.append(CharacteristicState(states[curr], curr, forced_follow=True))
                start = curr
                curr += 1
            continue
        curr += 1
    if css[-1].index != n - 1:
        css.append(CharacteristicState(states[-1], n - 1))
    return css


def partition(traj, path: ReferencePath, cfg: PartitionConfig = None):
    cfg = cfg or PartitionConfig()
    return partition_states(estimate_states(traj, path, cfg), cfg)


# --------------------------------------------------------------------------
# breakpoint refinement by polynomial fits of the positions

MIN_SEGMENT = 6  # samples between breakpoints; more than a quintic can interpolate
SIGMA_FLOOR = 1e-7  # m; noise assumed for clean logs
BREAK_PARAMS = 11  # coefficients added by one more quartic/quintic piece


class _Fitter:
    """Least-squares quartic s(t) / quintic d(t) fits over index ranges."""

    def __init__(self, t, s, d):
        self.t, self.s, self.d = t, s, d
        self._cache = {}

    def fit(self, i, j):
        key = (i, j)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        t0, T = self.t[i], self.t[j] - self.t[i]
        u = (self.t[i:j + 1] - t0) / T
        m = j - i + 1
        cs = P.polyfit(u, self.s[i:j + 1], min(4, m - 1))
        cd = P.polyfit(u, self.d[i:j + 1], min(5, m - 1))
        res = np.concatenate([P.polyval(u, cs) - self.s[i:j + 1], P.polyval(u, cd) - self.d[i:j + 1]])
        sse = float(res @ res)
        out = (cs, cd, T, sse)
        self._cache[key] = out
        return out

    def sse(self, i, j):
        return self.fit(i, j)[3]

    def rms(self, i, j):
        return math.sqrt(self.sse(i, j) / (2 * (j - i + 1)))

    def state(self, i, j, at_end):
        cs, cd, T, _ = self.fit(i, j)
        u = 1.0 if at_end else 0.0
        vals = []
        for c in (cs, cd):
            vals.append(float(P.polyval(u, c)))
            vals.append(float(P.polyval(u, P.polyder(c))) / T)
            vals.append(float(P.polyval(u, P.polyder(c, 2))) / T ** 2)
        return FrenetState(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5],
                           float(self.t[j] if at_end else self.t[i]))


def noise_level(values) -> float:
    """Robust white-noise std estimate from sixth differences (zero on quintics)."""
    v = np.asarray(values, float)
    if len(v) < 8:
        return 0.0
    d6 = np.diff(v, 6)
    mad = np.median(np.abs(d6 - np.median(d6)))
    return float(1.4826 * mad / math.sqrt(924.0))


def refine(traj, path: ReferencePath, css, sigma=None, window=8, min_segment=MIN_SEGMENT):
    """Sharpen breakpoints so each piece is one quartic/quintic in (s, d).

    Interior breakpoints are moved locally to minimise the fit residual of
    the two adjacent pieces.  A breakpoint is added (or kept) only when the
    residual it removes, in units of the noise variance, pays for the extra
    coefficients times ln N.  The returned states come from one joint C2
    fit, so they are exact on noise-free piecewise-polynomial logs.
    ``sigma`` is the positional noise std, estimated from the log when None.
    """
    t = np.array([p.t for p in traj], float)
    sd = np.array([path.locate(p.x, p.y)[:2] for p in traj], float)
    fitter = _Fitter(t, sd[:, 0], sd[:, 1])
    n = len(t)
    if sigma is None:
        sigma = max(noise_level(sd[:, 0]), noise_level(sd[:, 1]))
    var = max(sigma, SIGMA_FLOOR) ** 2
    penalty = BREAK_PARAMS * math.log(max(2 * n, 3))
    idx = sorted({c.index for c in css} | {0, n - 1})
    forced = {c.index for c in css if c.forced_follow}

    def gain(a, c, b):
        return (fitter.sse(a, b) - fitter.sse(a, c) - fitter.sse(c, b)) / var

    def misfit(a, b):
        return fitter.sse(a, b) / var > 2 * (b - a + 1) + penalty

    def shift(idx):
        moved = True
        rounds = 0
        while moved and rounds < 5:
            moved = False
            rounds += 1
            for k in range(1, len(idx) - 1):
                lo = max(idx[k - 1] + min_segment, idx[k] - window)
                hi = min(idx[k + 1] - min_segment, idx[k] + window)
                if lo > hi:
                    continue
                best = min(range(lo, hi + 1),
                           key=lambda c: (fitter.sse(idx[k - 1], c) + fitter.sse(c, idx[k + 1]), abs(c - idx[k])))
                if best != idx[k]:
                    idx[k] = best
                    moved = True
        return idx

    def split(idx):
        out = [idx[0]]
        for a, b in zip(idx[:-1], idx[1:]):
            out.extend(_split_range(a, b))
        return out

    def _split_range(a, b):
        if b - a < 2 * min_segment:
            return [b]
        c = min(range(a + min_segment, b - min_segment + 1),
                key=lambda c: fitter.sse(a, c) + fitter.sse(c, b))
        if gain(a, c, b) <= penalty:
            return [b]
        return _split_range(a, c) + _split_range(c, b)

    def merge(idx):
        while len(idx) > 2:
            g, k = min((gain(idx[k - 1], idx[k], idx[k + 1]), k) for k in range(1, len(idx) - 1))
            if g > penalty:
                break
            del idx[k]
        return idx

    def drop_short(idx):
        """Remove one end of a misfitting piece that is too short to split."""
        for k in range(len(idx) - 1):
            a, b = idx[k], idx[k + 1]
            if b - a >= 2 * min_segment or not misfit(a, b):
                continue
            inner = [j for j in (k, k + 1) if 0 < j < len(idx) - 1]
            if not inner:
                continue
            j = min(inner, key=lambda j: fitter.sse(idx[j - 1], idx[j + 1]))
            del idx[j]
            return True
        return False

    if n >= 2 * min_segment + 1:
        for _ in range(20):
            idx = shift(idx)
            idx = split(idx)
            idx = merge(idx)
            idx = shift(idx)
            if not drop_short(idx):
                break
    states = joint_fit(t, sd[:, 0], sd[:, 1], idx)
    return [CharacteristicState(st, i, forced_follow=i in forced) for st, i in zip(states, idx)]


# --------------------------------------------------------------------------
# semantic segmentation: optimal partition under per-piece behaviour models

def _local_bases(u):
    """Basis matrices on u in [0,1] for each longitudinal / lateral piece model."""
    one = np.ones_like(u)
    step = 10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5  # rest-to-rest lateral move
    return {
        "s_free": np.stack([one, u, u ** 2, u ** 3, u ** 4], 1),
        "s_settle": np.stack([one, u, u ** 3 - 3 * u ** 2, u ** 4 - 6 * u ** 2], 1),  # zero end accel
        "d_free": np.stack([one, u, u ** 2, u ** 3, u ** 4, u ** 5], 1),
        "d_hold": one[:, None],
        "d_step": np.stack([one, step], 1),
    }


# piece model -> (longitudinal basis, lateral basis)
_PIECE_MODELS = {
    "follow": ("s_free", "d_free"),
    "hold": ("s_free", "d_hold"),
    "cruise": ("s_settle", "d_hold"),
    "change": ("s_settle", "d_step"),
}
_BASIS_SIZE = {k: B.shape[1] for k, B in _local_bases(np.zeros(1)).items()}
MAX_DP_SAMPLES = 1500


def _window_sse(y, m, Q):
    """Residual sum of squares of projecting every length-m window of y onto span(Q)."""
    W = np.lib.stride_tricks.sliding_window_view(y, m)
    R = W - (W @ Q) @ Q.T
    return np.einsum("ij,ij->i", R, R)


def segment_by_models(t, s, d, var, min_segment=MIN_SEGMENT):
    """Breakpoints (and per-piece model names) minimising sum(SSE/var) + params*ln(2N).

    Each piece is scored with its best-fitting behaviour model (free motion,
    lane hold, cruise, rest-to-rest lane change).  Pieces are fitted
    independently, which makes the optimum exact by dynamic programming.
    Requires uniform sampling.
    """
    n = len(t)
    penalty = math.log(max(2 * n, 3))
    big = np.inf
    cost = np.full((n, n), big)  # cost[a, b] for piece a..b inclusive
    model = np.zeros((n, n), np.int8)
    for m in range(min_segment + 1, n + 1):
        u = np.linspace(0.0, 1.0, m)
        sse = {}
        for name, B in _local_bases(u).items():
            Q, _ = np.linalg.qr(B)
            sse[name] = _window_sse(s if name.startswith("s") else d, m, Q)
        best = np.full(n - m + 1, big)
        which = np.zeros(n - m + 1, int)
        for k_model, (sb, db) in enumerate(_PIECE_MODELS.values()):
            c = (sse[sb] + sse[db]) / var + (_BASIS_SIZE[sb] + _BASIS_SIZE[db]) * penalty
            better = c < best
            best[better], which[better] = c[better], k_model
        a = np.arange(n - m + 1)
        cost[a, a + m - 1] = best
        model[a, a + m - 1] = which
    F = np.full(n, big)
    prev = np.zeros(n, int)
    F[0] = 0.0
    for b in range(min_segment, n):
        cand = F[: b - min_segment + 1] + cost[: b - min_segment + 1, b]
        a = int(np.argmin(cand))
        F[b], prev[b] = cand[a], a
    idx = [n - 1]
    while idx[-1] != 0:
        idx.append(int(prev[idx[-1]]))
    idx.reverse()
    names = list(_PIECE_MODELS)
    return idx, [names[model[a, b]] for a, b in zip(idx[:-1], idx[1:])]


def _model_breaks(t, sd, var, min_segment=MIN_SEGMENT):
    """Breakpoints from ``segment_by_models`` plus provisional labels, or None if not applicable."""
    n = len(t)
    if n > MAX_DP_SAMPLES or n < 2 * min_segment + 1 or not _uniform(t):
        return None
    idx, models = segment_by_models(t, sd[:, 0], sd[:, 1], var, min_segment)
    return idx, [{"cruise": CRUISE, "change": CHANGE_LANE}.get(m, FOLLOW_LOG) for m in models]


def _label_and_fit(t, sd, idx, forced, cfg, var, provisional=None):
    """Classify pieces, refit under the label constraints and score the result.

    Returns (characteristic states, kinds, information criterion).
    """
    s, d = sd[:, 0], sd[:, 1]
    states = joint_fit(t, s, d, idx, provisional)
    css = [CharacteristicState(st, i, i in forced) for st, i in zip(states, idx)]
    kinds = [classify_segment(a, b, cfg).kind for a, b in zip(css[:-1], css[1:])]
    states, sse, n_free = joint_fit(t, s, d, idx, kinds, return_fit=True)
    css = [CharacteristicState(st, i, i in forced) for st, i in zip(states, idx)]
    return css, kinds, sse / var + n_free * math.log(max(2 * len(t), 3))


def _chained_design(t, idx, degree):
    """Design matrix of a C2 piecewise polynomial with breakpoints ``idx``.

    Parameters are the initial (value, rate, acceleration) followed by the
    free coefficients of powers 3..degree of each piece.  Returns the sample
    design matrix and, per breakpoint, the 3 rows giving its state.
    """
    n_free = degree - 2
    n_par = 3 + n_free * (len(idx) - 1)
    A = np.zeros((len(t), n_par))
    state = np.zeros((3, n_par))
    state[0, 0] = state[1, 1] = state[2, 2] = 1.0
    knots = [state.copy()]
    for k, (a, b) in enumerate(zip(idx[:-1], idx[1:])):
        cols = 3 + n_free * k + np.arange(n_free)
        lo = a if k == 0 else a + 1
        tau = t[lo:b + 1] - t[a]
        A[lo:b + 1] = (state[0] + np.outer(tau, state[1]) + np.outer(tau ** 2 / 2.0, state[2]))
        for j, c in enumerate(cols):
            A[lo:b + 1, c] += tau ** (j + 3)
        T = t[b] - t[a]
        nxt = np.zeros_like(state)
        nxt[0] = state[0] + T * state[1] + T * T / 2.0 * state[2]
        nxt[1] = state[1] + T * state[2]
        nxt[2] = state[2]
        for j, c in enumerate(cols):
            p = j + 3
            nxt[0, c] += T ** p
            nxt[1, c] += p * T ** (p - 1)
            nxt[2, c] += p * (p - 1) * T ** (p - 2)
        state = nxt
        knots.append(state.copy())
    return A, knots


def _label_constraints(knots_s, knots_d, labels):
    """Linear equalities that make each labelled piece executable by its leaf."""
    cs, cd = [], []
    for k, kind in enumerate(labels or []):
        if kind not in (CRUISE, CHANGE_LANE):
            continue
        end_s, end_d, start_d = knots_s[k + 1], knots_d[k + 1], knots_d[k]
        cs.append(end_s[2])  # leaves end with zero longitudinal acceleration
        cd.extend([end_d[1], end_d[2]])  # and zero lateral rate/acceleration
        if kind == CRUISE:
            cd.append(end_d[0] - start_d[0])  # cruise keeps its lateral offset
    return cs, cd


def _solve(A, y, C):
    scale = np.maximum(np.abs(A).max(axis=0), 1e-300)
    As = A / scale
    if not C:
        return np.linalg.lstsq(As, y, rcond=None)[0] / scale
    Cs = np.array(C) / scale
    N = null_space(Cs)
    z = np.linalg.lstsq(As @ N, y, rcond=None)[0]
    return (N @ z) / scale


def joint_fit(t, s, d, idx, labels=None, return_fit=False):
    """States at the breakpoints of the least-squares C2 quartic-s / quintic-d fit.

    With ``labels`` the fit is restricted to motions the corresponding leaves
    can execute (see ``_label_constraints``).  ``return_fit`` also returns
    the residual sum of squares and the number of free parameters.
    """
    t = np.asarray(t, float)
    As, Ks = _chained_design(t, idx, 4)
    Ad, Kd = _chained_design(t, idx, 5)
    cons_s, cons_d = _label_constraints(Ks, Kd, labels)
    coef_s = _solve(As, np.asarray(s, float), cons_s)
    coef_d = _solve(Ad, np.asarray(d, float), cons_d)
    out = []
    for K1, K2, i in zip(Ks, Kd, idx):
        sv, dv = K1 @ coef_s, K2 @ coef_d
        out.append(FrenetState(float(sv[0]), float(sv[1]), float(sv[2]), float(dv[0]), float(dv[1]),
                               float(dv[2]), float(t[i])))
    if not return_fit:
        return out
    r = np.concatenate([As @ coef_s - s, Ad @ coef_d - d])
    n_free = As.shape[1] + Ad.shape[1] - len(cons_s) - len(cons_d)
    return out, float(r @ r), n_free


# --------------------------------------------------------------------------
# classification and tree emission

def classify_segment(a: CharacteristicState, b: CharacteristicState, cfg: PartitionConfig = None) -> SegmentLabel:
    cfg = cfg or PartitionConfig()
    if b.forced_follow:
        return SegmentLabel(FOLLOW_LOG, a, b)
    if abs(a.state.d - b.state.d) > cfg.eps_lat:
        kind = CHANGE_LANE
    elif abs(a.state.s_dot - b.state.s_dot) < cfg.eps_vel:
        kind = CRUISE
    else:
        kind = FOLLOW_LOG
    return SegmentLabel(kind, a, b)


def _state_list(st: FrenetState):
    return [st.s, st.s_dot, st.s_ddot, st.d, st.d_dot, st.d_ddot, st.t]


def build_bt(css, cfg: PartitionConfig = None, agent="agent", semantic=True, time_origin=None,
             kinds=None) -> BehaviorTree:
    """Sequence of one leaf per consecutive pair of characteristic states.

    The first leaf starts at its source time (relative to ``time_origin``),
    every later leaf when its predecessor ends.
    """
    cfg = cfg or PartitionConfig()
    if len(css) < 2:
        raise TooFewStates("need at least two characteristic states")
    origin = css[0].state.t if time_origin is None else time_origin
    children = []
    prev = None
    for k, (a, b) in enumerate(zip(css[:-1], css[1:])):
        if kinds is not None:
            label = SegmentLabel(kinds[k], a, b)
        else:
            label = classify_segment(a, b, cfg) if semantic else SegmentLabel(FOLLOW_LOG, a, b)
        kind = _LEAF_TYPE[label.kind]
        node_id = f"{kind}_{k}"
        cond = TimeCondition(a.state.t - origin) if prev is None else EndsByBehaviorCondition(prev)
        duration = b.state.t - a.state.t
        if label.kind == CHANGE_LANE:
            delta = b.state.d - a.state.d
            node = leaf(node_id, kind, cond, direction="left" if delta > 0 else "right",
                        duration=duration, offset=abs(delta), end_speed=b.state.s_dot)
        elif label.kind == CRUISE:
            node = leaf(node_id, kind, cond, speed=b.state.s_dot, duration=duration)
        else:
            node = leaf(node_id, kind, cond, duration=duration,
                        start=_state_list(a.state), end=_state_list(b.state))
        children.append(node)
        prev = node_id
    return BehaviorTree(sequence("root", children), agent)


def labels(bt: BehaviorTree):
    return [n.type for n in bt.leaves()]


# --------------------------------------------------------------------------
# end-to-end conversion, replay and scoring

@dataclass
class Log2BTResult:
    tree: BehaviorTree
    css: list
    raw_css: list
    init: FrenetState
    path: ReferencePath
    time_origin: float
    dt: float


def log_dt(traj) -> float:
    return float(np.median(np.diff([p.t for p in traj])))


def log2bt(traj, path: ReferencePath, cfg: PartitionConfig = None, semantic=True, refine_breaks=True,
           agent="agent", sigma=None) -> Log2BTResult:
    cfg = cfg or PartitionConfig()
    if len(traj) < 2:
        raise TooFewStates("need at least two samples")
    states = estimate_states(traj, path, cfg)
    raw = partition_states(states, cfg)
    if not refine_breaks:
        css = raw
        kinds = [classify_segment(a, b, cfg).kind if semantic else FOLLOW_LOG for a, b in zip(css[:-1], css[1:])]
    elif not semantic:
        css = refine(traj, path, raw, sigma=sigma)
        kinds = [FOLLOW_LOG] * (len(css) - 1)
    else:
        # candidate segmentations scored under the final (labelled, C2) model
        t = np.array([p.t for p in traj], float)
        sd = np.array([path.locate(p.x, p.y)[:2] for p in traj], float)
        if sigma is None:
            sigma = max(noise_level(sd[:, 0]), noise_level(sd[:, 1]))
        var = max(sigma, SIGMA_FLOOR) ** 2
        refined = refine(traj, path, raw, sigma=sigma)
        forced = {c.index for c in refined if c.forced_follow}
        candidates = [([c.index for c in refined], None)]
        by_model = None if forced else _model_breaks(t, sd, var)
        if by_model is not None:
            candidates.append(by_model)
        best = None
        for idx, provisional in candidates:
            css_k, kinds_k, score = _label_and_fit(t, sd, idx, forced, cfg, var, provisional)
            if best is None or score < best[2]:
                best = (css_k, kinds_k, score)
        css, kinds = best[0], best[1]
    origin = traj[0].t
    bt = build_bt(css, cfg, agent=agent, semantic=semantic, time_origin=origin, kinds=kinds)
    return Log2BTResult(bt, css, raw, css[0].state, path, origin, log_dt(traj))


def reconstruction_scenario(result: Log2BTResult, lane_width=3.5, horizon=None) -> Scenario:
    """One-lane world (the reference path) holding only the converted agent."""
    lane_map = LaneMap([Lane("ref", result.path, lane_width)])
    st = result.init
    spec = AgentSpec(result.tree.agent, "ref", st.s, st.s_dot, d=st.d, accel=st.s_ddot,
                     d_dot=st.d_dot, d_ddot=st.d_ddot, tree=result.tree)
    end_t = result.css[-1].state.t - result.time_origin
    if horizon is None:
        horizon = max(result.dt, round(end_t / result.dt) * result.dt)
    return Scenario(lane_map, [spec], None, result.dt, horizon)


def reconstruct(result: Log2BTResult):
    """Replay the tree open loop; returns the trajectory as TrajectoryPoints."""
    from .simulator import run  # late import: the simulator depends on this package's core only
    scen = reconstruction_scenario(result)
    trace = run(scen, stop_on_collision=False)
    rows = trace.rows[result.tree.agent]
    return [TrajectoryPoint(r[1], r[2], 0.0, r[0] + result.time_origin) for r in rows]


def reconstruction_error(original, reconstructed, path: ReferencePath):
    """Mean absolute longitudinal and lateral differences on the original timestamps."""
    to = np.array([p.t for p in original], float)
    tr = np.array([p.t for p in reconstructed], float)
    lo, hi = max(to[0], tr[0]), min(to[-1], tr[-1])
    eps = 1e-9
    mask = (to >= lo - eps) & (to <= hi + eps)
    if hi < lo - eps or not mask.any():
        raise EmptyOverlap("trajectories do not overlap in time")
    so = np.array([path.locate(p.x, p.y)[:2] for p in original], float)[mask]
    sr = np.array([path.locate(p.x, p.y)[:2] for p in reconstructed], float)
    tq = np.clip(to[mask], tr[0], tr[-1])
    s_i = np.interp(tq, tr, sr[:, 0])
    d_i = np.interp(tq, tr, sr[:, 1])
    return float(np.mean(np.abs(so[:, 0] - s_i))), float(np.mean(np.abs(so[:, 1] - d_i)))


def trajectory_csv(traj, agent="agent") -> str:
    lines = ["id,t,x,y,z"]
    for p in traj:
        lines.append(f"{agent},{p.t!r},{p.x!r},{p.y!r},{p.z!r}")
    return "\n".join(lines) + "\n"


def compression_ratio(traj, bt: BehaviorTree) -> float:
    """Size of the CSV log over the size of the compact JSON tree."""
    log_bytes = len(trajectory_csv(traj, bt.agent).encode())
    bt_bytes = len(canonical_json(bt.to_dict()).encode())
    return log_bytes / bt_bytes


# --------------------------------------------------------------------------
# generalisation

def quantile_range(samples, quantiles=(0.05, 0.95)):
    x = np.asarray(samples, float).reshape(-1)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise EmptyDistribution("distribution has no finite samples")
    lo, hi = np.quantile(x, quantiles)
    return float(lo), float(hi)


def generalize(scenario, distributions, quantiles=(0.05, 0.95), name=None) -> LogicalScenario:
    """Replace concrete properties by variables ranging over distribution quantiles.

    ``scenario`` is a scenario document or logical scenario; ``distributions``
    maps a variable name to ``{"target": path, "samples": [...]}``.
    """
    if isinstance(scenario, LogicalScenario):
        base = scenario
    else:
        base = LogicalScenario(copy.deepcopy(scenario), name=name or "generalized")
    template = copy.deepcopy(base.template)
    variables = list(base.variables)
    for var_name, spec in distributions.items():
        target = spec["target"]
        try:
            get_target(template, target)
        except Exception as exc:
            raise UnknownProperty(f"{var_name}: {target!r} is not a property of the scenario") from exc
        lo, hi = quantile_range(spec["samples"], quantiles)
        if not lo < hi:
            raise EmptyDistribution(f"{var_name}: degenerate quantile range [{lo}, {hi}]")
        variables.append(Variable(var_name, target, UniformRange(lo, hi)))
    dists = dict(base.distributions)
    dists.update({k: {"target": v["target"], "quantiles": list(quantiles)} for k, v in distributions.items()})
    return LogicalScenario(template, variables, list(base.relative_variables), dists,
                           name or base.name)


def scenario_document(result: Log2BTResult, lane_map: LaneMap = None, lane_id=None, ego=None,
                      horizon=None, kind="vehicle") -> dict:
    """Scenario document holding the converted agent (plus an optional ego)."""
    if lane_map is None:
        lane_map = LaneMap([Lane("ref", result.path, 3.5)])
        lane_id = "ref"
    st = result.init
    end_t = result.css[-1].state.t - result.time_origin
    doc = {
        "map": lane_map.to_dict(),
        "agents": [{
            "id": result.tree.agent, "kind": kind,
            "init": {"lane": lane_id, "s": st.s, "speed": st.s_dot, "d": st.d, "accel": st.s_ddot,
                     "d_dot": st.d_dot, "d_ddot": st.d_ddot},
            "tree": result.tree.to_dict(),
        }],
        "simulation": {"dt": result.dt, "horizon": horizon or max(result.dt, round(end_t / result.dt) * result.dt)},
    }
    if ego is not None:
        doc["ego"] = ego
    return doc


def bt_json(bt: BehaviorTree) -> str:
    return json.dumps(bt.to_dict(), sort_keys=True, indent=1)
