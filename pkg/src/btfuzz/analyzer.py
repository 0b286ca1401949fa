"""Post-campaign analysis: ratios, violation typing, correlations, plots."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewPoints
from .evaluation import INVALID, VALID_CRITICAL

CONVERGED_STD = 0.15
MAX_K = 8
NO_CRITICAL_NOTE = "no critical scenarios"


@dataclass
class CampaignMetrics:
    total: int
    critical: int
    invalid: int
    types: int

    @property
    def cr(self):
        return self.critical / self.total if self.total else 0.0

    @property
    def ir(self):
        return self.invalid / self.total if self.total else 0.0

    @property
    def tr(self):
        return self.types / self.total if self.total else 0.0

    def to_dict(self):
        return {"total": self.total, "critical": self.critical, "invalid": self.invalid,
                "types": self.types, "CR": self.cr, "IR": self.ir, "TR": self.tr}


@dataclass
class ViolationType:
    cluster: int
    centroid: np.ndarray
    members: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    spread: np.ndarray = None


def critical_points(ledger):
    """Unit-space coordinates and ledger indices of the ValidCritical records."""
    recs = [r for r in ledger.records if r["verdict"] == VALID_CRITICAL]
    n = ledger.header.get("dimension", len(recs[0]["u"]) if recs else 0)
    U = np.array([r["u"] for r in recs], float).reshape(len(recs), n)
    return U, [r.get("index", k) for k, r in enumerate(recs)]


def _kmeans(U, k, seed):
    from sklearn.cluster import KMeans
    return KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed).fit(U)


def silhouette_by_k(U, seed=0):
    from sklearn.metrics import silhouette_score
    out = {}
    for k in range(2, min(MAX_K, len(U) - 1) + 1):
        km = _kmeans(U, k, seed)
        if len(np.unique(km.labels_)) < 2:
            continue
        out[k] = float(silhouette_score(U, km.labels_))
    return out


def cluster_critical(U, k=None, seed=0, names=None, refs=None):
    """k-means over unit-space points; k by best silhouette when not given."""
    U = np.asarray(U, float)
    if U.ndim != 2 or len(U) < 2:
        raise TooFewPoints("clustering needs at least two critical scenarios")
    refs = list(range(len(U))) if refs is None else list(refs)
    names = names or [f"x{i}" for i in range(U.shape[1])]
    distinct = len(np.unique(U, axis=0))
    if distinct == 1:
        labels, centers = np.zeros(len(U), int), U[:1].copy()
    else:
        if k is None:
            scores = silhouette_by_k(U, seed)
            k = max(scores, key=lambda kk: (scores[kk], -kk)) if scores else 2
        k = min(k, distinct)
        km = _kmeans(U, k, seed)
        labels, centers = km.labels_, km.cluster_centers_
    types = []
    for c in range(len(centers)):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            continue
        spread = U[idx].std(axis=0)
        types.append(ViolationType(c, centers[c], [refs[i] for i in idx],
                                   [names[j] for j in np.flatnonzero(spread < CONVERGED_STD)], spread))
    return types


def campaign_metrics(ledger, types=None, k=None, seed=0):
    verdicts = ledger.verdicts()
    if not verdicts:
        raise TooFewPoints("empty ledger")
    critical = sum(v == VALID_CRITICAL for v in verdicts)
    invalid = sum(v == INVALID for v in verdicts)
    if types is None:
        U, _ = critical_points(ledger)
        types = cluster_critical(U, k, seed) if len(U) >= 2 else [None] * len(U)
    return CampaignMetrics(len(verdicts), critical, invalid, len(types))


def variable_correlation(U):
    """Pearson matrix; zero-variance variables get 0 off-diagonal. Returns (matrix, flat_mask)."""
    U = np.asarray(U, float)
    if U.ndim != 2 or len(U) < 3:
        raise TooFewPoints("correlation needs at least three critical scenarios")
    Z = U - U.mean(axis=0)
    sd = np.sqrt((Z * Z).mean(axis=0))
    flat = sd < 1e-12
    Z[:, ~flat] /= sd[~flat]
    Z[:, flat] = 0.0
    C = Z.T @ Z / len(U)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0), flat


# --------------------------------------------------------------------------
# report bundle

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


_VERDICT_COLORS = {VALID_CRITICAL: "tab:red", INVALID: "tab:gray", "ValidNonCritical": "tab:blue"}


def _plots(ledger, names, U_crit, types, corr, out_dir, axes3d):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = []
    U = ledger.U
    colors = [_VERDICT_COLORS.get(v, "k") for v in ledger.verdicts()]
    it = np.arange(len(U))
    n = U.shape[1]
    fig, axs = plt.subplots(n, 1, figsize=(7, 1.8 * n + 0.6), sharex=True, squeeze=False)
    for j in range(n):
        axs[j, 0].scatter(it, U[:, j], c=colors, s=6)
        axs[j, 0].set_ylabel(names[j])
        axs[j, 0].set_ylim(-0.05, 1.05)
    axs[-1, 0].set_xlabel("iteration")
    fig.tight_layout()
    files.append(_save(fig, out_dir, "iterations.png"))

    fig = plt.figure(figsize=(6, 5))
    sel = list(axes3d)[:3] if axes3d else list(range(min(3, n)))
    if len(sel) == 3:
        ax = fig.add_subplot(projection="3d")
        ax.scatter(U[:, sel[0]], U[:, sel[1]], U[:, sel[2]], c=colors, s=6)
        ax.set_zlabel(names[sel[2]])
    else:
        ax = fig.add_subplot()
        ax.scatter(U[:, sel[0]], U[:, sel[-1]] if len(sel) > 1 else it, c=colors, s=6)
    ax.set_xlabel(names[sel[0]])
    if len(sel) > 1:
        ax.set_ylabel(names[sel[1]])
    files.append(_save(fig, out_dir, "scatter3d.png"))

    if corr is not None:
        fig, ax = plt.subplots(figsize=(1.0 * n + 2.5, 1.0 * n + 2))
        im = ax.imshow(corr, vmin=-1, vmax=1, cmap="coolwarm")
        ax.set_xticks(range(n), names)
        ax.set_yticks(range(n), names)
        for a in range(n):
            for b in range(n):
                ax.text(b, a, f"{corr[a, b]:.2f}", ha="center", va="center", fontsize=8)
        fig.colorbar(im)
        fig.tight_layout()
        files.append(_save(fig, out_dir, "correlation.png"))

    if types:
        fig, ax = plt.subplots(figsize=(7, 4))
        width = 0.8 / len(types)
        for c, t in enumerate(types):
            ax.bar(np.arange(n) + c * width, t.centroid, width, label=f"type {c} ({len(t.members)})")
        ax.set_xticks(np.arange(n) + 0.4 - width / 2, names)
        ax.set_ylabel("normalized centroid")
        ax.set_ylim(0, 1)
        ax.legend(fontsize=8)
        fig.tight_layout()
        files.append(_save(fig, out_dir, "clusters.png"))
    plt.close("all")
    return files


def _save(fig, out_dir, name):
    path = os.path.join(out_dir, name)
    # fixed metadata so reruns produce identical bytes
    fig.savefig(path, dpi=100, metadata={"Software": None})
    return path


def report(ledger, out_dir, k=None, seed=None, axes3d=None, plots=True):
    """Write metrics/clusters/correlations CSVs and figures; returns a summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    seed = ledger.header.get("config", {}).get("seed", 0) if seed is None else seed
    names = ledger.header.get("variables") or [f"x{i}" for i in range(ledger.header["dimension"])]
    U_crit, refs = critical_points(ledger)
    types = cluster_critical(U_crit, k, seed, names, refs) if len(U_crit) >= 2 else []
    metrics = campaign_metrics(ledger, types if len(U_crit) >= 2 else [None] * len(U_crit))
    md = metrics.to_dict()
    _write_csv(os.path.join(out_dir, "metrics.csv"), list(md),
               [[md[k_] if isinstance(md[k_], int) else _fmt(md[k_]) for k_ in md]])
    notes = []
    if not len(U_crit):
        notes.append(NO_CRITICAL_NOTE)
    _write_csv(os.path.join(out_dir, "clusters.csv"),
               ["cluster", "size", *[f"centroid_{n}" for n in names], "converged", "members"],
               [[t.cluster, len(t.members), *[_fmt(c) for c in t.centroid], " ".join(t.converged),
                 " ".join(map(str, t.members))] for t in types])
    corr = None
    if len(U_crit) >= 3:
        corr, flat = variable_correlation(U_crit)
        if flat.any():
            notes.append("zero-variance variables: " + " ".join(n for n, f in zip(names, flat) if f))
        _write_csv(os.path.join(out_dir, "correlations.csv"), ["variable", *names],
                   [[names[a], *[_fmt(c) for c in corr[a]]] for a in range(len(names))])
    else:
        _write_csv(os.path.join(out_dir, "correlations.csv"), ["variable", *names], [])
        notes.append("too few critical scenarios for correlations")
    if notes:
        with open(os.path.join(out_dir, "notes.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(notes) + "\n")
    files = _plots(ledger, names, U_crit, types, corr, out_dir, axes3d) if plots else []
    return {"metrics": md, "types": types, "correlation": corr, "notes": notes, "plots": files}
