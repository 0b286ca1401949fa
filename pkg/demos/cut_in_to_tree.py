"""Turn a synthetic cut-in log into a behavior tree, then replay it.

    python demos/cut_in_to_tree.py [out_dir]
"""
import os
import sys

from btfuzz import files, log2bt, synthetic


def main(out_dir="demo_out"):
    os.makedirs(out_dir, exist_ok=True)
    traj, path = synthetic.cut_in_log(v1=18.0, v2=21.0, lat=3.5, t_cruise=6.0, t_change=4.5,
                                      t_after=8.0, noise=0.05, seed=1)
    files.write_log(os.path.join(out_dir, "cut_in.csv"), {"agent": traj})

    res = log2bt.log2bt(traj, path)
    print("leaves:", " -> ".join(log2bt.labels(res.tree)))
    for node in res.tree.leaves():
        print(f"  {node.id}: {node.params}")
    ade_s, ade_l = log2bt.reconstruction_error(traj, log2bt.reconstruct(res), path)
    print(f"replay error: {ade_s:.3f} m along, {ade_l:.3f} m across")
    print(f"compression: {log2bt.compression_ratio(traj, res.tree):.1f}x")

    doc = log2bt.scenario_document(res)
    files.save_scenario(os.path.join(out_dir, "cut_in_scenario.json"), doc)
    print("scenario written to", os.path.join(out_dir, "cut_in_scenario.json"))


if __name__ == "__main__":
    main(*sys.argv[1:])
