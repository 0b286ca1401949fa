"""Command-line entry point: ``btfuzz {log2bt,fuzz,replay,report,validate}``.

Exit codes: 0 ok, 1 validation findings or unexpected failure, 2 unreadable
input, 3 projection failure, 4 scenario without variables, 5 dimension mismatch.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import analyzer, files, fuzzing
from .errors import (DegeneratePath, DomainError, EmptyDistribution, LogFormatError, PointOffPath,
                     ScenarioFormatError, TooFewStates, UnknownProperty)
from .frenet import ReferencePath

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_PROJECTION, EXIT_NO_VARIABLES, EXIT_DIMENSION = 0, 1, 2, 3, 4, 5

log = logging.getLogger("btfuzz")


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _read(fn, *args):
    """Run a loader, mapping input problems to exit code 2."""
    try:
        return fn(*args)
    except FileNotFoundError as exc:
        raise CommandError(EXIT_PARSE, f"no such file: {exc.filename}") from exc
    except (LogFormatError, ScenarioFormatError, DomainError, ValueError, KeyError) as exc:
        raise CommandError(EXIT_PARSE, str(exc)) from exc


# --------------------------------------------------------------------------
# log2bt

def _initial_heading_path(pts, run_in=10.0, margin=50.0):
    """Straight reference along the first ``run_in`` metres of travel (agents start lane-aligned)."""
    xy = np.array([(p.x, p.y) for p in pts])
    dist = np.hypot(*(xy - xy[0]).T)
    if dist.max() < 1e-6:
        raise CommandError(EXIT_PROJECTION, "log does not move; cannot derive a reference path")
    k = int(np.argmax(dist >= min(run_in, dist.max())))
    u = (xy[k] - xy[0]) / dist[k]
    reach = float(np.max((xy - xy[0]) @ u))
    return ReferencePath([tuple(xy[0] - margin * u), tuple(xy[0] + (reach + margin) * u)])


def cmd_log2bt(args):
    from .log2bt import PartitionConfig, compression_ratio, generalize, log2bt, reconstruct, \
        reconstruction_error, scenario_document

    tracks = _read(files.read_log, args.log)
    lane_map = _read(files.load_map, args.map) if args.map else None
    dists = _read(files.read_json, args.distributions) if args.distributions else None
    cfg = PartitionConfig(eps_part=args.eps_part, eps_lat=args.eps_lat, eps_vel=args.eps_vel)
    doc = None
    report = []
    try:
        for aid, pts in tracks.items():
            if lane_map is not None:
                if args.lane:
                    if args.lane not in lane_map.lanes:
                        raise CommandError(EXIT_PARSE, f"unknown lane {args.lane!r}")
                    lane_id = args.lane
                else:
                    lane_id = lane_map.locate(pts[0].x, pts[0].y)[0]
                path = lane_map.lane(lane_id).path
            else:
                lane_id, path = None, _initial_heading_path(pts)
            res = log2bt(pts, path, cfg, semantic=args.semantic, agent=aid)
            ade_s, ade_l = reconstruction_error(pts, reconstruct(res), path)
            ratio = compression_ratio(pts, res.tree)
            report.append((aid, len(res.css) - 1, ade_s, ade_l, ratio))
            one = scenario_document(res, lane_map, lane_id)
            if doc is None:
                doc = one
            else:
                doc["agents"].extend(one["agents"])
                doc["simulation"]["horizon"] = max(doc["simulation"]["horizon"], one["simulation"]["horizon"])
    except (PointOffPath, DegeneratePath, TooFewStates) as exc:
        raise CommandError(EXIT_PROJECTION, f"projection failed: {exc}") from exc
    if dists is not None:
        try:
            doc = generalize(doc, dists, name=args.name).to_dict()
        except (UnknownProperty, EmptyDistribution, KeyError, TypeError) as exc:
            raise CommandError(EXIT_PARSE, f"bad distribution file: {exc}") from exc
    elif args.name:
        doc["name"] = args.name
    files.save_scenario(args.out, doc)
    for aid, segs, ade_s, ade_l, ratio in report:
        print(f"{aid}: segments={segs} ADE_s={ade_s:.4f} ADE_l={ade_l:.4f} compression={ratio:.1f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fuzz

def _campaign_config(args):
    cfg = _read(files.load_config, args.config) if args.config else fuzzing.CampaignConfig()
    for name in ("seed", "workers", "budget", "patience", "algorithm"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if cfg.budget < 1:
        raise CommandError(EXIT_PARSE, "budget must be positive")
    return cfg


def print_metrics(m):
    print(f"total={m.total} critical={m.critical} invalid={m.invalid} types={m.types}")
    print(f"CR={m.cr:.4f} IR={m.ir:.4f} TR={m.tr:.4%}")


def cmd_fuzz(args):
    ls = _read(files.load_scenario, args.scenario)
    if fuzzing.effective_dimension(ls) < 1:
        raise CommandError(EXIT_NO_VARIABLES, "scenario declares no variables to search")
    cfg = _campaign_config(args)
    files.ensure_dir(args.out)

    def progress(ledger):
        if len(ledger) % 50 == 0:
            log.info("%d/%d evaluations", len(ledger), cfg.budget)

    ledger = fuzzing.run_campaign(ls, cfg, progress)
    path = os.path.join(args.out, "ledger.ndjson")
    ledger.save(path)
    print(f"ledger: {path} ({len(ledger)} evaluations, algorithm={ledger.header['algorithm']}, "
          f"stop={ledger.stop_reason})")
    print_metrics(analyzer.campaign_metrics(ledger, seed=cfg.seed))
    return EXIT_OK


# --------------------------------------------------------------------------
# replay

def cmd_replay(args):
    from .evaluation import fitness
    from .scenario import bind, concrete, sample
    from .simulator import run

    ls = _read(files.load_scenario, args.scenario)
    n = fuzzing.effective_dimension(ls)
    cfg = _read(files.load_config, args.config) if args.config else fuzzing.CampaignConfig()
    if args.values is not None:
        if len(args.values) != n:
            raise CommandError(EXIT_DIMENSION, f"scenario has {n} variables, got {len(args.values)} values")
        make = lambda: concrete(ls, args.values)
    else:
        ledger = _read(fuzzing.CampaignLedger.load, args.ledger)
        if not 0 <= args.record < len(ledger):
            raise CommandError(EXIT_PARSE, f"record {args.record} outside ledger of {len(ledger)}")
        rec = ledger.records[args.record]
        if len(rec["u"]) != n:
            raise CommandError(EXIT_DIMENSION, f"scenario has {n} variables, record has {len(rec['u'])}")
        make = lambda: sample(ls, rec["u"])
    try:
        cts = make()
    except DomainError as exc:
        raise CommandError(EXIT_PARSE, str(exc)) from exc
    trace = run(bind(cts))
    res = fitness(trace, cfg.weights, cfg.thresholds)
    files.ensure_dir(args.out)
    for pid in trace.rows:
        with open(os.path.join(args.out, f"trace_{pid}.csv"), "w", encoding="utf-8") as fh:
            fh.write(trace.to_csv(pid))
    with open(os.path.join(args.out, "events.json"), "w", encoding="utf-8") as fh:
        fh.write(trace.events_json() + "\n")
    files.write_json(os.path.join(args.out, "fitness.json"), res.to_dict())
    print("values: " + " ".join(f"{k}={v:.6g}" for k, v in cts.as_dict().items()))
    print(f"branch={res.branch} verdict={res.verdict} score={res.score!r}")
    print("terms: " + " ".join(f"{k}={v!r}" for k, v in res.terms.items()))
    return EXIT_OK


# --------------------------------------------------------------------------
# report / validate

def cmd_report(args):
    ledger = _read(fuzzing.CampaignLedger.load, args.ledger)
    if not len(ledger):
        raise CommandError(EXIT_PARSE, "ledger has no evaluations")
    axes = None
    if args.axes:
        names = ledger.header.get("variables", [])
        try:
            axes = [names.index(a) for a in args.axes.split(",")]
        except ValueError as exc:
            raise CommandError(EXIT_PARSE, f"unknown variable in --axes: {exc}") from exc
    out = analyzer.report(ledger, args.out, k=args.k, seed=args.seed, axes3d=axes)
    m = out["metrics"]
    print_metrics(analyzer.CampaignMetrics(m["total"], m["critical"], m["invalid"], m["types"]))
    for t in out["types"]:
        print(f"type {t.cluster}: size={len(t.members)} converged={','.join(t.converged) or '-'}")
    for note in out["notes"]:
        print(f"note: {note}")
    return EXIT_OK


def cmd_validate(args):
    from .scenario import validate_scenario
    doc = _read(files.read_json, args.scenario)
    try:
        diags = validate_scenario(doc)
    except ScenarioFormatError as exc:
        raise CommandError(EXIT_PARSE, str(exc)) from exc
    if args.config:
        _read(files.load_config, args.config)
    for d in diags:
        print(f"{d.code}: {d.node}: {d.message}")
    if not diags:
        print("ok")
    return EXIT_FAIL if diags else EXIT_OK


# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="btfuzz", description="Behavior-tree scenario conversion and fuzzing.")
    sub = p.add_subparsers(dest="command", required=True)

    def shared(sp, out_help):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("log2bt", help="convert a trajectory log into a scenario file")
    sp.add_argument("log")
    sp.add_argument("--map", help="map JSON; without it a straight reference line is fitted")
    sp.add_argument("--lane", help="lane id used as reference path (default: nearest)")
    shared(sp, "scenario file to write")
    sp.add_argument("--semantic", type=_bool, default=True, help="true: cruise/lane-change leaves; false: follow-log only")
    sp.add_argument("--eps-part", type=float, default=1.0)
    sp.add_argument("--eps-lat", type=float, default=2.0)
    sp.add_argument("--eps-vel", type=float, default=1.0)
    sp.add_argument("--distributions", help="JSON {name: {target, samples}} turning properties into variables")
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_log2bt)

    sp = sub.add_parser("fuzz", help="run a search campaign")
    sp.add_argument("scenario")
    sp.add_argument("--config")
    shared(sp, "output directory")
    sp.add_argument("--budget", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--algorithm", choices=[fuzzing.BO, fuzzing.GA, fuzzing.RANDOM])
    sp.set_defaults(func=cmd_fuzz)

    sp = sub.add_parser("replay", help="simulate one concrete scenario")
    sp.add_argument("scenario")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--values", type=_floats, help="comma-separated variable values")
    src.add_argument("--ledger")
    sp.add_argument("--record", type=int, default=0, help="ledger record index")
    sp.add_argument("--config")
    shared(sp, "output directory")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("report", help="analyse a campaign ledger")
    sp.add_argument("ledger")
    shared(sp, "report directory")
    sp.add_argument("--k", type=int, help="number of violation types (default: silhouette choice)")
    sp.add_argument("--axes", help="three variable names for the 3D scatter")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("validate", help="check a scenario (and optional config) file")
    sp.add_argument("scenario")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_validate)
    return p


def _setup_logging():
    level = os.environ.get("BTF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # unexpected: report, do not dump a traceback unless asked
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
