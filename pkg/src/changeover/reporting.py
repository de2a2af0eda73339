"""Report bundle: delimited tables plus rendered figures.

Given the raw run records this writes per-metric summary tables (CSV), the
pairwise win/loss/tie matrix, a returns-vs-baseline scatter with fitted
trendlines, and a histogram of per-solve runtimes.  Empty record sets still
produce a valid bundle (header-only tables, empty axes) so downstream
tooling never special-cases an unlucky suite.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import (
    DEFAULT_TIE_TOLERANCE,
    METRIC_PERCENT_CHANGE,
    METRICS,
    SummaryTable,
    summarize,
    win_loss_tie,
)

__all__ = ["fit_trendline", "emit_report"]


def fit_trendline(x, y) -> tuple[float, float]:
    """Ordinary least squares line through (x, y): returns (slope, intercept).
    A degenerate x (all equal) yields a flat line at the mean of y."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if xs.size == 0:
        raise ValueError("cannot fit a trendline to no points")
    x_bar = xs.mean()
    y_bar = ys.mean()
    sxx = float(((xs - x_bar) ** 2).sum())
    if sxx == 0.0:
        return 0.0, float(y_bar)
    slope = float(((xs - x_bar) * (ys - y_bar)).sum() / sxx)
    return slope, float(y_bar - slope * x_bar)


def _write_summary_csv(path: str, table: SummaryTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("policy",) + SummaryTable.COLUMNS)
        for policy in sorted(table.rows):
            stats = table.rows[policy]
            writer.writerow(
                (
                    policy,
                    f"{stats.mean:.6f}",
                    f"{stats.std_dev:.6f}",
                    f"{stats.median:.6f}",
                    f"{stats.maximum:.6f}",
                    f"{stats.minimum:.6f}",
                )
            )


def emit_report(
    records,
    output_dir: str,
    *,
    baseline: str = "Naive",
    tie_tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> dict[str, str]:
    """Write the full report bundle into ``output_dir`` and return a name ->
    path map of everything written."""
    os.makedirs(output_dir, exist_ok=True)
    paths: dict[str, str] = {}

    for metric in METRICS:
        table = summarize(records, metric) if records else SummaryTable(metric=metric, rows={})
        path = os.path.join(output_dir, f"summary_{metric}.csv")
        _write_summary_csv(path, table)
        paths[f"summary_{metric}"] = path

    wlt_path = os.path.join(output_dir, "win_loss_tie.csv")
    successful = [r for r in records if r.succeeded]
    with open(wlt_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if successful:
            matrix = win_loss_tie(successful, METRIC_PERCENT_CHANGE, tie_tolerance)
            writer.writerow(("policy",) + matrix.policies)
            for row_policy in matrix.policies:
                cells = [
                    "/".join(str(v) for v in matrix.entries[row_policy][col])
                    for col in matrix.policies
                ]
                writer.writerow((row_policy, *cells))
        else:
            writer.writerow(("policy",))
    paths["win_loss_tie"] = wlt_path

    # returns scatter against the baseline policy, one trendline per policy
    fig, ax = plt.subplots(figsize=(7, 6))
    base_values = {
        r.scenario: r.percent_change for r in successful if r.policy == baseline
    }
    others = sorted({r.policy for r in successful} - {baseline})
    for policy in others:
        pairs = [
            (base_values[r.scenario], r.percent_change)
            for r in successful
            if r.policy == policy and r.scenario in base_values
        ]
        if not pairs:
            continue
        xs, ys = zip(*pairs)
        ax.scatter(xs, ys, s=18, alpha=0.7, label=policy)
        if len(xs) >= 2:
            slope, intercept = fit_trendline(xs, ys)
            grid = np.linspace(min(xs), max(xs), 32)
            ax.plot(grid, slope * grid + intercept, linewidth=1)
    if base_values:
        lo = min(base_values.values())
        hi = max(base_values.values())
        ax.plot([lo, hi], [lo, hi], linestyle="--", color="grey", linewidth=1, label="parity")
    ax.set_xlabel(f"{baseline} percent change")
    ax.set_ylabel("policy percent change")
    ax.set_title(f"Returns vs {baseline}")
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=8)
    scatter_path = os.path.join(output_dir, "returns_vs_baseline.png")
    fig.savefig(scatter_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths["returns_scatter"] = scatter_path

    fig, ax = plt.subplots(figsize=(7, 4))
    solve_times = [
        s for r in successful for s in r.period_solve_seconds if s > 0.0
    ]
    if solve_times:
        ax.hist(solve_times, bins=min(40, max(5, len(solve_times) // 5)), color="#4878a8")
    ax.set_xlabel("seconds per policy solve")
    ax.set_ylabel("solves")
    ax.set_title("Solve-time distribution")
    hist_path = os.path.join(output_dir, "runtime_histogram.png")
    fig.savefig(hist_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths["runtime_histogram"] = hist_path
    return paths
