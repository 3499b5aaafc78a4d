"""Figures for corpus reports, rendered off-screen to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import CumulativeReport, RunReport  # noqa: E402


def plot_cumulative(cumulative: CumulativeReport, path: Path, lenient: CumulativeReport | None = None,
                    upper_bound: int | None = None) -> Path:
    runs = list(range(1, cumulative.runs + 1))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(runs, cumulative.unique_fixed_keys_by_prefix, marker="o", label="strict")
    if lenient is not None:
        ax.plot(runs, lenient.unique_fixed_keys_by_prefix, marker="s", linestyle="--", label="lenient")
    if upper_bound is not None:
        ax.axhline(upper_bound, color="grey", linestyle=":", label="files in corpus")
    ax.set_xlabel("runs")
    ax.set_ylabel("unique files fixed")
    ax.set_xticks(runs)
    ax.set_ylim(bottom=0)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_fix_times(reports: Sequence[RunReport], path: Path) -> Path:
    data = [[f.wall_time_seconds for f in r.per_file if f.status == "fixed"] for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot([d if d else [0.0] for d in data])
    ax.set_xticks(range(1, len(reports) + 1), [str(r.run_index) for r in reports])
    ax.set_xlabel("run")
    ax.set_ylabel("time to fix (s)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
