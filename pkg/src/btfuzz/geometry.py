"""Planar polygon helpers: oriented boxes, overlap (separating axis) and distances."""
from __future__ import annotations

import math


def box_corners(x, y, heading, length, width):
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    return [
        (x + c * hl - s * hw, y + s * hl + c * hw),
        (x - c * hl - s * hw, y - s * hl + c * hw),
        (x - c * hl + s * hw, y - s * hl - c * hw),
        (x + c * hl + s * hw, y + s * hl - c * hw),
    ]


def _axes(poly):
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        norm = math.hypot(ex, ey)
        if norm > 0:
            yield -ey / norm, ex / norm


def polygons_overlap(a, b) -> bool:
    """Separating-axis test for two convex polygons (touching counts as overlap)."""
    for poly in (a, b):
        for ax, ay in _axes(poly):
            pa = [px * ax + py * ay for px, py in a]
            pb = [px * ax + py * ay for px, py in b]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return False
    return True


def point_segment_distance(px, py, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    L2 = ex * ex + ey * ey
    if L2 == 0:
        return math.hypot(px - ax, py - ay)
    lam = ((px - ax) * ex + (py - ay) * ey) / L2
    lam = min(max(lam, 0.0), 1.0)
    return math.hypot(px - ax - lam * ex, py - ay - lam * ey)


def point_in_polygon(px, py, poly) -> bool:
    """Even-odd rule; points on an edge count as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if point_segment_distance(px, py, ax, ay, bx, by) < 1e-12:
            return True
        if (ay > py) != (by > py):
            xc = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < xc:
                inside = not inside
    return inside


def point_polygon_distance(px, py, poly) -> float:
    if point_in_polygon(px, py, poly):
        return 0.0
    n = len(poly)
    return min(
        point_segment_distance(px, py, *poly[i], *poly[(i + 1) % n]) for i in range(n)
    )


def polygon_distance(a, b) -> float:
    """Minimum distance between two convex polygons, 0 when they overlap."""
    if polygons_overlap(a, b):
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        m = len(q)
        for px, py in p:
            for i in range(m):
                d = point_segment_distance(px, py, *q[i], *q[(i + 1) % m])
                if d < best:
                    best = d
    return best
