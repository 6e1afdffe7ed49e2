"""Learning-curve figures written as standalone SVG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .reporting import ReportError, read_metrics_csv, summarize  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 3.5,
    "axes.spines.top": False,
    "axes.spines.right": False,
    # Fixed salt and no date keep the SVG byte-stable across reruns.
    "svg.hashsalt": "l2ral",
    "svg.fonttype": "path",
}

LABELS = {"accuracy": "test accuracy", "mae": "test MAE", "spearman": "test Spearman (loss ranking)"}
COLORS = {
    "random": "#7f7f7f",
    "entropy": "#1f77b4",
    "coreset": "#2ca02c",
    "pairwise": "#ff7f0e",
    "listwise": "#d62728",
}


def curve_data(rows):
    """{metric: {strategy: (labeled, mean, min, max)}} from report rows."""
    data = {}
    for s in summarize(rows):
        series = data.setdefault(s.metric, {}).setdefault(s.strategy, ([], [], [], []))
        for lst, v in zip(series, (s.labeled, s.mean, s.min, s.max)):
            lst.append(v)
    return data


def render_curves(metrics_path, out_path, metrics=None):
    """One panel per metric, one seed-mean curve per strategy with a min/max band."""
    rows = read_metrics_csv(metrics_path)
    if not rows:
        raise ReportError(f"{metrics_path}: no metric rows")
    data = curve_data(rows)
    names = [m for m in (metrics or sorted(data)) if m in data]
    if not names:
        raise ReportError("none of the requested metrics are present")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(names), figsize=(3.4 * len(names), 2.8), squeeze=False)
        for ax, metric in zip(axes[0], names):
            for strategy, (x, mean, lo, hi) in sorted(data[metric].items()):
                color = COLORS.get(strategy)
                ax.fill_between(x, lo, hi, color=color, alpha=0.15, linewidth=0)
                ax.plot(x, mean, marker="o", color=color, label=strategy)
            ax.set_xlabel("labeled samples")
            ax.set_ylabel(LABELS.get(metric, metric))
            ax.grid(alpha=0.3, linewidth=0.5)
        axes[0][0].legend(frameon=False)
        fig.tight_layout()
        out_path = Path(out_path)
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return data
