"""Static SVG plots with reproducible bytes (no timestamp, fixed element ids)."""
import matplotlib
from matplotlib.figure import Figure

_RC = {"svg.hashsalt": "upliftguard", "svg.fonttype": "path"}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})


def plot_uplift_curves(curves, path, labels=None):
    """Cumulative uplift against normalized rank, one line per curve."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for j, curve in enumerate(curves):
        label = labels[j] if labels else f"arm {curve.arm} (AUC {curve.auc:.4g})"
        ax.plot([0.0, *curve.normalized_ranks], [0.0, *curve.values], label=label)
    ax.axhline(0.0, color="grey", linewidth=0.5)
    ax.set_xlabel("share of customers targeted (by descending score)")
    ax.set_ylabel("cumulative uplift")
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(points, constraint_id, path):
    """Objective and treated share against the swept bound."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    bounds = [p.bound for p in points]
    ax.plot(bounds, [p.objective for p in points], marker="o", color="C0")
    ax.set_xlabel(f"bound on {constraint_id}")
    ax.set_ylabel("objective (estimated uplift)", color="C0")
    ax2 = ax.twinx()
    ax2.plot(bounds, [1.0 - p.targeting_shares[0] for p in points], marker="s", color="C1")
    ax2.set_ylabel("share treated", color="C1")
    fig.tight_layout()
    _save(fig, path)
