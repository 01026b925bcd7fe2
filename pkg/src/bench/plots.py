"""
Comparison charts: latency bars with 95% CI whiskers, CPU share bars
"""

import logging
from pathlib import Path
from typing import Union

import matplotlib
matplotlib.use("agg")  # write to file, never open a window
import matplotlib.pyplot as plt

from src.bench.harness import ComparisonReport

logger = logging.getLogger(__name__)


def plot_comparison(report: ComparisonReport, path: Union[str, Path]) -> Path:
    if not report.rows:
        raise ValueError("nothing to plot: report has no rows")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    names = [row.name for row in report.rows]
    with_cpu = [row for row in report.rows if row.cpu]
    ncols = 2 if with_cpu else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.0 * ncols, 3.5), squeeze=False)

    ax = axes[0][0]
    ax.bar(names, [row.latency.mean_ms for row in report.rows],
           yerr=[row.latency.ci95_half_width_ms for row in report.rows], capsize=4, color="tab:blue")
    ax.set_ylabel("prediction time (ms)")
    ax.set_title("Prediction time")

    if with_cpu:
        ax = axes[0][1]
        ax.bar([row.name for row in with_cpu], [row.cpu.mean_cpu_percent for row in with_cpu], color="tab:orange")
        ax.set_ylim(0, 100)
        ax.set_ylabel("CPU (%)")
        ax.set_title("CPU consumption")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"Wrote comparison plot to {path}")
    return path
