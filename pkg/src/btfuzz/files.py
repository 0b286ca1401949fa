"""Reading and writing logs, maps, scenarios and campaign configs."""
from __future__ import annotations

import csv
import json
import math
import os
from collections import defaultdict

from .errors import LogFormatError, ScenarioFormatError
from .frenet import TrajectoryPoint
from .lanes import LaneMap
from .scenario import LogicalScenario

LOG_HEADER = ("id", "t", "x", "y", "z")


def read_log(path) -> dict:
    """Trajectory log CSV (``id,t,x,y,z``) -> {agent id: time-ordered points}."""
    tracks = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LOG_HEADER:
            raise LogFormatError(f"{path}: expected header {','.join(LOG_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise LogFormatError(f"{path}:{line}: expected 5 fields, got {len(row)}")
            try:
                t, x, y, z = (float(v) for v in row[1:])
            except ValueError as exc:
                raise LogFormatError(f"{path}:{line}: {exc}") from exc
            if not all(math.isfinite(v) for v in (t, x, y, z)):
                raise LogFormatError(f"{path}:{line}: non-finite value")
            tracks[row[0].strip()].append(TrajectoryPoint(x, y, z, t))
    if not tracks:
        raise LogFormatError(f"{path}: no samples")
    for aid, pts in tracks.items():
        pts.sort(key=lambda p: p.t)
        if any(b.t <= a.t for a, b in zip(pts, pts[1:])):
            raise LogFormatError(f"{path}: agent {aid!r} has repeated timestamps")
    return dict(tracks)


def write_log(path, tracks: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for aid, pts in tracks.items():
            for p in pts:
                w.writerow([aid, repr(float(p.t)), repr(float(p.x)), repr(float(p.y)), repr(float(p.z))])


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc


def dumps(doc) -> str:
    """Stable, human-diffable JSON."""
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))


def load_map(path) -> LaneMap:
    doc = read_json(path)
    return LaneMap.from_dict(doc.get("map", doc))


def load_scenario(path) -> LogicalScenario:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{path}: scenario must be a JSON object")
    return LogicalScenario.from_dict(doc)


def save_scenario(path, ls_or_doc):
    doc = ls_or_doc.to_dict() if isinstance(ls_or_doc, LogicalScenario) else ls_or_doc
    write_json(path, doc)


def load_config(path):
    from .fuzzing import CampaignConfig
    doc = read_json(path)
    try:
        return CampaignConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{path}: bad campaign config ({exc})") from exc


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
