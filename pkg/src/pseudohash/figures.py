"""Matplotlib rendering for reports, sweeps, and training logs.

Every function writes a PNG next to the delimited records the CLI
emits, so a run leaves both machine-readable and eyeball-readable
output.  The Agg backend keeps this usable on headless machines.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import METRIC_NAMES, MetricsReport

__all__ = [
    "plot_metric_curves",
    "plot_sweep_curves",
    "plot_training_log",
]

_DPI = 120


def plot_metric_curves(reports: dict[str, MetricsReport], path: str) -> None:
    """One panel per metric, cutoff on the x axis, one line per variant."""
    if not reports:
        raise ValueError("nothing to plot")
    fig, axes = plt.subplots(1, len(METRIC_NAMES), figsize=(3.2 * len(METRIC_NAMES), 3.0))
    for ax, metric in zip(axes, METRIC_NAMES):
        for variant, report in reports.items():
            ax.plot(report.cutoffs, [report.means[n][metric] for n in report.cutoffs],
                    marker="o", label=variant)
        ax.set_title(metric)
        ax.set_xlabel("cutoff")
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("mean value")
    axes[-1].legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_sweep_curves(param: str, results: dict[float, MetricsReport], path: str) -> None:
    """One panel per metric, swept parameter on the x axis, one line per cutoff."""
    if not results:
        raise ValueError("nothing to plot")
    values = sorted(results)
    cutoffs = results[values[0]].cutoffs
    fig, axes = plt.subplots(1, len(METRIC_NAMES), figsize=(3.2 * len(METRIC_NAMES), 3.0))
    for ax, metric in zip(axes, METRIC_NAMES):
        for cutoff in cutoffs:
            ax.plot(values, [results[v].means[cutoff][metric] for v in values],
                    marker="o", label=f"@{cutoff}")
        ax.set_title(metric)
        ax.set_xlabel(param)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("mean value")
    axes[-1].legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_training_log(log: list[dict], path: str) -> None:
    """Loss components against the iteration counter."""
    if not log:
        raise ValueError("empty training log")
    iters = [rec["iteration"] for rec in log]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for key in ("pair_loss", "quant_loss", "total_loss"):
        ax.plot(iters, [rec[key] for rec in log], label=key)
    if all(rec["total_loss"] > 0.0 for rec in log):
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("batch loss sum")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
