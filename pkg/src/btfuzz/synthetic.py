"""Synthetic trajectory logs made of chained quartic/quintic pieces."""
from __future__ import annotations

import numpy as np

from .frenet import FrenetState, ReferencePath, TrajectoryPoint, plan_segment, unproject


def straight_path(length=1000.0, origin=(0.0, 0.0), heading=0.0) -> ReferencePath:
    c, s = np.cos(heading), np.sin(heading)
    return ReferencePath([origin, (origin[0] + c * length, origin[1] + s * length)])


def chain_segments(start: FrenetState, pieces):
    """Plan consecutive segments; each piece is ``(duration, end_s_dot, end_s_ddot, end_d, end_d_dot, end_d_ddot)``."""
    plans = []
    st = start
    for T, v, a, d, dd, ddd in pieces:
        end = FrenetState(0.0, v, a, d, dd, ddd, st.t + T)
        plan = plan_segment(st, end)
        plans.append(plan)
        st = plan.state_at(T)
    return plans


def sample_plans(plans, path: ReferencePath, dt=0.1, noise=0.0, rng=None, t0=None):
    """Sample chained plans at ``dt`` and map them to Cartesian points."""
    t_start = plans[0].t0 if t0 is None else t0
    t_end = plans[-1].t0 + plans[-1].duration
    n = int(round((t_end - t_start) / dt))
    rng = rng if rng is not None else np.random.default_rng(0)
    pts = []
    k_plan = 0
    for k in range(n + 1):
        t = t_start + k * dt
        while k_plan + 1 < len(plans) and t >= plans[k_plan + 1].t0 - 1e-9:
            k_plan += 1
        plan = plans[k_plan]
        st = plan.state_at(min(max(t - plan.t0, 0.0), plan.duration))
        x, y = unproject(FrenetState(st.s, 0, 0, st.d, 0, 0, t), path)
        if noise > 0:
            x += rng.normal(0.0, noise)
            y += rng.normal(0.0, noise)
        pts.append(TrajectoryPoint(float(x), float(y), 0.0, t))
    return pts


def semantic_pieces(kinds, rng, speed=20.0, lane_width=3.5):
    """Random cruise / lane-change / speed-change pieces with calm junctions."""
    pieces = []
    d = 0.0
    v = speed
    for kind in kinds:
        if kind == "cruise":
            v = float(np.clip(v + rng.uniform(-0.8, 0.8), 5.0, 35.0))
            pieces.append((float(np.round(rng.uniform(3.0, 8.0), 1)), v, 0.0, d, 0.0, 0.0))
        elif kind == "changelane":
            d = d + (lane_width if rng.random() < 0.5 else -lane_width) * rng.uniform(0.8, 1.0)
            v = float(np.clip(v + rng.uniform(-3.0, 3.0), 5.0, 35.0))
            pieces.append((float(np.round(rng.uniform(3.0, 7.0), 1)), v, 0.0, d, 0.0, 0.0))
        elif kind == "speed":
            v = float(np.clip(v + rng.choice([-1, 1]) * rng.uniform(2.5, 6.0), 5.0, 35.0))
            pieces.append((float(np.round(rng.uniform(3.0, 7.0), 1)), v, 0.0, d, 0.0, 0.0))
        else:
            raise ValueError(kind)
    return pieces


def random_pieces(count, rng, speed=20.0):
    """Generic pieces with nonzero end accelerations and lateral rates."""
    pieces = []
    for _ in range(count):
        T = float(np.round(rng.uniform(3.0, 7.0), 1))
        pieces.append((T, float(rng.uniform(10.0, 30.0)), float(rng.uniform(-1.0, 1.0)),
                       float(rng.uniform(-4.0, 4.0)), float(rng.uniform(-0.5, 0.5)),
                       float(rng.uniform(-0.3, 0.3))))
    return pieces


def semantic_log(kinds, seed=0, dt=0.1, noise=0.0, path=None, speed=20.0, s0=10.0):
    """Log of semantic pieces; returns (points, path, pieces)."""
    rng = np.random.default_rng(seed)
    path = path or straight_path()
    pieces = semantic_pieces(kinds, rng, speed)
    plans = chain_segments(FrenetState(s0, speed, 0.0, 0.0, 0.0, 0.0, 0.0), pieces)
    return sample_plans(plans, path, dt, noise, rng), path, pieces


def feasible(plans, a_min=-7.5, a_max=3.5):
    """Speeds stay positive and accelerations inside the vehicle limits."""
    for plan in plans:
        k = plan.evaluate(np.linspace(0.0, plan.duration, 101))
        if k[:, 1].min() <= 0.5 or k[:, 2].min() < a_min or k[:, 2].max() > a_max:
            return False
    return True


def polynomial_log(count, seed=0, dt=0.1, noise=0.0, path=None):
    """Log of generic pieces, redrawn until the motion is physically feasible."""
    rng = np.random.default_rng(seed)
    path = path or straight_path()
    while True:
        pieces = random_pieces(count, rng)
        start = FrenetState(10.0, float(rng.uniform(12.0, 25.0)), 0.0, 0.0, 0.0, 0.0, 0.0)
        plans = chain_segments(start, pieces)
        if feasible(plans):
            break
    return sample_plans(plans, path, dt, noise, rng), path, pieces


def cut_in_log(v1=20.0, v2=22.0, lat=3.5, t_cruise=3.4, t_change=5.0, t_after=3.0, dt=0.1,
               noise=0.0, seed=0, path=None, s0=40.0):
    """Cruise at ``v1`` then move right by ``lat`` ending at ``v2``, then hold."""
    path = path or straight_path()
    start = FrenetState(s0, v1, 0.0, 0.0, 0.0, 0.0, 0.0)
    pieces = [(t_cruise, v1, 0.0, 0.0, 0.0, 0.0), (t_change, v2, 0.0, -lat, 0.0, 0.0)]
    if t_after > 0:
        pieces.append((t_after, v2, 0.0, -lat, 0.0, 0.0))
    plans = chain_segments(start, pieces)
    return sample_plans(plans, path, dt, noise, np.random.default_rng(seed)), path
