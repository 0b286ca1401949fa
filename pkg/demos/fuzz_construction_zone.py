"""Search the construction-zone cut-in for critical cases and write a report.

    python demos/fuzz_construction_zone.py [budget] [out_dir]
"""
import os
import sys

from btfuzz import analyzer, fuzzing, library


def main(budget="150", out_dir="demo_report"):
    ls = library.construction_cut_in()
    ledger = fuzzing.run_campaign(ls, fuzzing.CampaignConfig(budget=int(budget), seed=0))
    os.makedirs(out_dir, exist_ok=True)
    ledger.save(os.path.join(out_dir, "ledger.ndjson"))

    out = analyzer.report(ledger, out_dir)
    m = out["metrics"]
    print(f"{m['total']} runs: {m['critical']} critical, {m['invalid']} invalid, {m['types']} types")
    for t in out["types"]:
        values = [v.domain.from_unit(c) for v, c in zip(ls.variables, t.centroid)]
        desc = ", ".join(f"{v.name}={x:.1f}" for v, x in zip(ls.variables, values))
        print(f"  type {t.cluster} ({len(t.members)} cases): {desc}")
    best = ledger.best()
    print("best case:", dict(zip(ls.variable_names, best["values"])), "score", best["fitness"])
    print("report in", out_dir)


if __name__ == "__main__":
    main(*sys.argv[1:])
