"""Lane graph: centerline paths with widths, adjacency and static obstacles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import ScenarioFormatError
from .frenet import ReferencePath


@dataclass
class Lane:
    id: str
    path: ReferencePath
    width: float
    left: Optional[str] = None
    right: Optional[str] = None

    def to_dict(self):
        return {"id": self.id, "centerline": self.path.points.tolist(), "width": self.width,
                "left": self.left, "right": self.right}


class LaneMap:
    def __init__(self, lanes, obstacles=None):
        self.lanes = {}
        for lane in lanes:
            if lane.id in self.lanes:
                raise ScenarioFormatError(f"duplicate lane id {lane.id!r}")
            if not lane.width > 0:
                raise ScenarioFormatError(f"lane {lane.id!r} width must be positive")
            self.lanes[lane.id] = lane
        for lane in self.lanes.values():
            for side, back in (("left", "right"), ("right", "left")):
                other = getattr(lane, side)
                if other is None:
                    continue
                if other not in self.lanes:
                    raise ScenarioFormatError(f"lane {lane.id!r} {side} neighbour {other!r} missing")
                if getattr(self.lanes[other], back) != lane.id:
                    raise ScenarioFormatError(f"adjacency {lane.id!r}<->{other!r} is not symmetric")
        self.obstacles = {k: [tuple(map(float, p)) for p in poly] for k, poly in (obstacles or {}).items()}

    def __eq__(self, other):
        return isinstance(other, LaneMap) and self.to_dict() == other.to_dict()

    def lane(self, lane_id) -> Lane:
        return self.lanes[lane_id]

    def locate(self, x, y):
        """Nearest lane to (x, y): returns (lane id, s, d) in that lane's frame."""
        best = None
        for lane in self.lanes.values():
            s, d, *_, dist = lane.path.locate(x, y)
            if best is None or dist < best[0]:
                best = (dist, lane.id, s, d)
        return best[1], best[2], best[3]

    def on_road(self, x, y) -> bool:
        for lane in self.lanes.values():
            s, d, *_, dist = lane.path.locate(x, y)
            if dist <= lane.width / 2.0 and abs(d) <= lane.width / 2.0 + 1e-9:
                return True
        return False

    def to_dict(self):
        return {
            "lanes": [lane.to_dict() for lane in self.lanes.values()],
            "obstacles": [{"id": k, "polygon": [list(p) for p in v]} for k, v in self.obstacles.items()],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            lanes = [Lane(str(ld["id"]), ReferencePath(ld["centerline"]), float(ld["width"]),
                          ld.get("left"), ld.get("right")) for ld in d["lanes"]]
            obstacles = {str(o["id"]): o["polygon"] for o in d.get("obstacles", [])}
        except (KeyError, TypeError) as exc:
            raise ScenarioFormatError(f"bad map document: {exc}") from exc
        return cls(lanes, obstacles)


def straight_road(n_lanes=2, length=500.0, width=3.5, origin=(0.0, 0.0), heading=0.0,
                  obstacles=None, prefix="L"):
    """Parallel straight lanes; lane 0 is the rightmost."""
    c, s = math.cos(heading), math.sin(heading)
    lanes = []
    for i in range(n_lanes):
        off = i * width
        x0 = origin[0] - s * off
        y0 = origin[1] + c * off
        pts = [(x0, y0), (x0 + c * length, y0 + s * length)]
        lanes.append(Lane(f"{prefix}{i}", ReferencePath(pts), width,
                          left=f"{prefix}{i + 1}" if i + 1 < n_lanes else None,
                          right=f"{prefix}{i - 1}" if i > 0 else None))
    return LaneMap(lanes, obstacles)
