"""Figure rendering for the report path: performance curves and per-feature
weight profiles saved next to the delimited outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

TRUTH_COLORS = {
    "informative": "#2a6fb0",
    "uninformative": "#c44e52",
    "unknown": "#777777",
}


def plot_performance_curves(curve, path):
    """Mean F versus constraint fraction, one line per algorithm and one
    panel per (init, constraint kind) pair."""
    aggregates = curve.aggregates()
    panels = sorted({(init, kind) for (_, init, kind, _) in aggregates})
    if not panels:
        return None
    fig, axes = plt.subplots(
        1, len(panels), figsize=(4.2 * len(panels), 3.4), squeeze=False, sharey=True
    )
    for ax, (init, kind) in zip(axes[0], panels):
        algos = sorted({a for (a, i, k, _) in aggregates if (i, k) == (init, kind)})
        for algo in algos:
            pts = sorted(
                (frac, stats["mean_f"], stats["std_f"])
                for (a, i, k, frac), stats in aggregates.items()
                if a == algo and (i, k) == (init, kind)
            )
            fracs = [p[0] for p in pts]
            means = [p[1] for p in pts]
            errs = [p[2] for p in pts]
            ax.errorbar(fracs, means, yerr=errs, marker="o", capsize=2, label=algo)
        ax.set_xlabel("constraint fraction")
        ax.set_title(f"{init} / {kind}")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("pairwise F-score")
    axes[0][-1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_weight_profiles(rows, path):
    """Bar chart of mean per-feature weight, one panel per
    (algorithm, init, fraction); uninformative features are drawn in red."""
    keys = sorted({(r["algorithm"], r["init"], r["fraction"]) for r in rows})
    if not keys:
        return None
    ncols = min(len(keys), 4)
    nrows = (len(keys) + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.0 * ncols, 2.8 * nrows), squeeze=False
    )
    for idx, key in enumerate(keys):
        ax = axes[idx // ncols][idx % ncols]
        sub = sorted((r for r in rows if (r["algorithm"], r["init"], r["fraction"]) == key),
                     key=lambda r: r["feature"])
        weights = [r["mean_weight"] for r in sub]
        colors = [TRUTH_COLORS.get(r["feature_truth"], TRUTH_COLORS["unknown"]) for r in sub]
        ax.bar(np.arange(len(sub)), weights, color=colors)
        algo, init, fraction = key
        ax.set_title(f"{algo} / {init} / {fraction:g}", fontsize=9)
        ax.set_xlabel("feature")
    for idx in range(len(keys), nrows * ncols):
        axes[idx // ncols][idx % ncols].axis("off")
    axes[0][0].set_ylabel("mean weight")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
