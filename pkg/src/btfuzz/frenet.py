"""Reference-path geometry, Cartesian/Frenet conversion and polynomial segment planning.

The path is a polyline whose vertex normals are averaged from the adjacent
segments and interpolated linearly along each segment.  Projection solves for
the foot point whose interpolated normal passes through the query point, which
makes ``project`` and ``unproject`` exact inverses of each other (no dead
wedges at polyline vertices).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DegeneratePath, NonpositiveDuration, OutOfRange, PointOffPath

KINEMATIC_FIELDS = ("s", "s_dot", "s_ddot", "d", "d_dot", "d_ddot")


@dataclass(frozen=True)
class TrajectoryPoint:
    x: float
    y: float
    z: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class FrenetState:
    s: float
    s_dot: float = 0.0
    s_ddot: float = 0.0
    d: float = 0.0
    d_dot: float = 0.0
    d_ddot: float = 0.0
    t: float = 0.0

    def kinematics(self) -> np.ndarray:
        return np.array([self.s, self.s_dot, self.s_ddot, self.d, self.d_dot, self.d_ddot])

    @classmethod
    def from_row(cls, row) -> "FrenetState":
        return cls(*(float(v) for v in row[:7]))


class ReferencePath:
    """Polyline centerline with cumulative arc length."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise DegeneratePath("a reference path needs at least 2 (x, y) samples")
        if not np.all(np.isfinite(pts)):
            raise DegeneratePath("non-finite path sample")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise DegeneratePath("arc length must be strictly increasing")
        self.points = pts
        self.seg_len = seg_len
        self.s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.s[-1])
        tang = seg / seg_len[:, None]
        seg_normals = np.column_stack([-tang[:, 1], tang[:, 0]])
        vn = np.empty_like(pts)
        vn[0] = seg_normals[0]
        vn[-1] = seg_normals[-1]
        if len(pts) > 2:
            avg = seg_normals[:-1] + seg_normals[1:]
            norm = np.hypot(avg[:, 0], avg[:, 1])
            if np.any(norm < 1e-9):
                raise DegeneratePath("path folds back on itself")
            vn[1:-1] = avg / norm[:, None]
        self.vertex_normals = vn
        self.seg = seg
        self._straight = len(pts) == 2
        self.points.setflags(write=False)

    def __repr__(self):
        return f"ReferencePath(n={len(self.points)}, length={self.length:.3f})"

    def __eq__(self, other):
        return isinstance(other, ReferencePath) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def _frame_on_segment(self, k: int, lam: float):
        p0 = self.points[k]
        e = self.seg[k]
        n = (1.0 - lam) * self.vertex_normals[k] + lam * self.vertex_normals[k + 1]
        nn = math.hypot(n[0], n[1])
        nx, ny = n[0] / nn, n[1] / nn
        return p0[0] + lam * e[0], p0[1] + lam * e[1], nx, ny

    def frame_at(self, s: float):
        """Return (x, y, tx, ty, nx, ny) of the centerline at arc length ``s``."""
        if s < -1e-9 or s > self.length + 1e-9:
            raise OutOfRange(f"s={s} outside [0, {self.length}]")
        s = min(max(s, 0.0), self.length)
        if self._straight:
            k = 0
        else:
            k = int(np.searchsorted(self.s, s, side="right")) - 1
            k = min(max(k, 0), len(self.seg_len) - 1)
        lam = (s - self.s[k]) / self.seg_len[k]
        cx, cy, nx, ny = self._frame_on_segment(k, lam)
        return cx, cy, ny, -nx, nx, ny

    def heading_at(self, s: float) -> float:
        _, _, tx, ty, _, _ = self.frame_at(s)
        return math.atan2(ty, tx)

    def locate(self, x: float, y: float):
        """Foot point of (x, y): returns (s, d, tx, ty, nx, ny, dist).

        ``dist`` is the Euclidean distance to the foot point; it equals |d|
        except beyond the path ends, where the foot is clamped to an endpoint.
        """
        if self._straight:
            p0 = self.points[0]
            e = self.seg[0]
            L = self.seg_len[0]
            tx, ty = e[0] / L, e[1] / L
            wx, wy = x - p0[0], y - p0[1]
            along = wx * tx + wy * ty
            lam = min(max(along / L, 0.0), 1.0)
            cx, cy = p0[0] + lam * e[0], p0[1] + lam * e[1]
            nx, ny = -ty, tx
            d = (x - cx) * nx + (y - cy) * ny
            return lam * L, d, tx, ty, nx, ny, math.hypot(x - cx, y - cy)
        return self._locate_general(x, y)

    def _locate_general(self, x, y):
        p0 = self.points[:-1]
        e = self.seg
        n0 = self.vertex_normals[:-1]
        dn = self.vertex_normals[1:] - n0
        w = np.array([x, y]) - p0

        def cross(a, b):
            return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]

        # cross(w - lam e, n0 + lam dn) = 0  ->  A lam^2 + B lam + C = 0
        A = -cross(e, dn)
        B = cross(w, dn) - cross(e, n0)
        C = cross(w, n0)
        lam = np.full((len(e), 2), np.nan)
        lin = np.abs(A) < 1e-12 * np.maximum(np.abs(B), 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam[lin, 0] = -C[lin] / B[lin]
            q = ~lin
            disc = B[q] ** 2 - 4 * A[q] * C[q]
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            # numerically stable roots
            qq = -0.5 * (B[q] + np.copysign(sq, B[q]))
            lam[q, 0] = qq / A[q]
            lam[q, 1] = C[q] / qq
        tol = 1e-12
        ok = (lam >= -tol) & (lam <= 1 + tol)
        best = None
        for k, j in zip(*np.nonzero(ok)):
            lm = float(min(max(lam[k, j], 0.0), 1.0))
            cx, cy, nx, ny = self._frame_on_segment(int(k), lm)
            dist = math.hypot(x - cx, y - cy)
            if best is None or dist < best[0]:
                best = (dist, int(k), lm, cx, cy, nx, ny)
        # endpoints are always candidates (handles points beyond the ends)
        for k, lm in ((0, 0.0), (len(e) - 1, 1.0)):
            cx, cy, nx, ny = self._frame_on_segment(k, lm)
            dist = math.hypot(x - cx, y - cy)
            if best is None or dist < best[0] - 1e-12:
                best = (dist, k, lm, cx, cy, nx, ny)
        dist, k, lm, cx, cy, nx, ny = best
        s = float(self.s[k] + lm * self.seg_len[k])
        d = (x - cx) * nx + (y - cy) * ny
        return s, d, ny, -nx, nx, ny, dist


def project(p: TrajectoryPoint, velocity, acceleration, path: ReferencePath,
            max_lateral: float = 50.0) -> FrenetState:
    """Express a Cartesian sample in the path frame.

    Velocity and acceleration are decomposed onto the path tangent and normal
    at the foot point (left of travel is positive ``d``).
    """
    if not isinstance(path, ReferencePath):
        path = ReferencePath(path)
    s, d, tx, ty, nx, ny, dist = path.locate(p.x, p.y)
    if dist > max_lateral:
        raise PointOffPath(f"point ({p.x:.3f}, {p.y:.3f}) is {dist:.2f} m from the path")
    vx, vy = float(velocity[0]), float(velocity[1])
    ax, ay = float(acceleration[0]), float(acceleration[1])
    return FrenetState(
        s=s,
        s_dot=vx * tx + vy * ty,
        s_ddot=ax * tx + ay * ty,
        d=d,
        d_dot=vx * nx + vy * ny,
        d_ddot=ax * nx + ay * ny,
        t=p.t,
    )


def unproject(st: FrenetState, path: ReferencePath):
    """Cartesian position of a Frenet state."""
    cx, cy, _, _, nx, ny = path.frame_at(st.s)
    return cx + st.d * nx, cy + st.d * ny


@dataclass(frozen=True)
class PlannedSegment:
    """Quartic longitudinal / quintic lateral motion over relative time [0, duration]."""

    lon: tuple  # 5 coefficients, ascending powers of relative time
    lat: tuple  # 6 coefficients
    duration: float
    t0: float = 0.0
    _dlon: tuple = field(init=False, repr=False, compare=False)
    _dlat: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lon = np.asarray(self.lon, float)
        lat = np.asarray(self.lat, float)
        object.__setattr__(self, "_dlon", (lon, P.polyder(lon), P.polyder(lon, 2)))
        object.__setattr__(self, "_dlat", (lat, P.polyder(lat), P.polyder(lat, 2)))

    def evaluate(self, tau) -> np.ndarray:
        """Kinematics at relative time(s) ``tau``; shape (..., 6)."""
        tau = np.asarray(tau, float)
        cols = [P.polyval(tau, c) for c in self._dlon] + [P.polyval(tau, c) for c in self._dlat]
        return np.stack(cols, axis=-1)

    def state_at(self, tau: float) -> FrenetState:
        k = self.evaluate(tau)
        return FrenetState(*(float(v) for v in k), t=self.t0 + tau)

    def scalar_at(self, tau: float):
        """Fast pure-Python evaluation returning the 6 kinematic values."""
        out = []
        for group in (self._dlon, self._dlat):
            for c in group:
                acc = 0.0
                for coef in reversed(c):
                    acc = acc * tau + coef
                out.append(acc)
        return out


def quartic_coefficients(s0, v0, a0, v1, a1, T):
    A = np.array([[3 * T**2, 4 * T**3], [6 * T, 12 * T**2]])
    b = np.array([v1 - v0 - a0 * T, a1 - a0])
    c3, c4 = np.linalg.solve(A, b)
    return (s0, v0, a0 / 2.0, float(c3), float(c4))


def quintic_coefficients(d0, v0, a0, d1, v1, a1, T):
    A = np.array([
        [T**3, T**4, T**5],
        [3 * T**2, 4 * T**3, 5 * T**4],
        [6 * T, 12 * T**2, 20 * T**3],
    ])
    b = np.array([
        d1 - d0 - v0 * T - a0 / 2.0 * T**2,
        v1 - v0 - a0 * T,
        a1 - a0,
    ])
    c3, c4, c5 = np.linalg.solve(A, b)
    return (d0, v0, a0 / 2.0, float(c3), float(c4), float(c5))


def plan_segment(start: FrenetState, end: FrenetState) -> PlannedSegment:
    """Velocity-keeping quartic (end position free) plus full quintic lateral."""
    T = end.t - start.t
    if not T > 0:
        raise NonpositiveDuration(f"segment duration {T} must be positive")
    lon = quartic_coefficients(start.s, start.s_dot, start.s_ddot, end.s_dot, end.s_ddot, T)
    lat = quintic_coefficients(start.d, start.d_dot, start.d_ddot, end.d, end.d_dot, end.d_ddot, T)
    return PlannedSegment(lon=lon, lat=lat, duration=T, t0=start.t)


def partition_cost(original, planned: PlannedSegment, weights=None) -> float:
    """Sum over samples of the squared (weighted) distance between logged and planned kinematics.

    ``original`` is a sequence of FrenetState or an (m, 7) array whose last
    column is time.  Time is not part of the norm.
    """
    arr = _as_state_array(original)
    tau = arr[:, 6] - planned.t0
    diff = arr[:, :6] - planned.evaluate(tau)
    if weights is None:
        return float(np.sum(diff * diff))
    w = np.asarray(weights, float)
    return float(np.sum(diff * diff * w))


def _as_state_array(states) -> np.ndarray:
    if isinstance(states, np.ndarray):
        return states
    return np.array([[st.s, st.s_dot, st.s_ddot, st.d, st.d_dot, st.d_ddot, st.t] for st in states])
