"""Figure rendering for the report path.

Renders matplotlib figures to files next to the delimited outputs; nothing
here is needed for metric computation.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_metric_bars(rows: list[dict], path) -> None:
    """Grouped bar chart of rank-1 accuracy and mAP@k per run.

    ``rows`` are dicts with keys run, r1, map_at_k (the report CSV rows).
    """
    runs = [row["run"] for row in rows]
    r1s = [row["r1"] for row in rows]
    maps = [row["map_at_k"] for row in rows]
    x = np.arange(len(runs))
    width = 0.38

    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(runs)), 3.6))
    ax.bar(x - width / 2, r1s, width, label="R1", color="#39608c")
    ax.bar(x + width / 2, maps, width, label="mAP@k", color="#8c5a39")
    ax.set_xticks(x)
    ax.set_xticklabels(runs, rotation=20, ha="right")
    ax.set_ylabel("percent")
    ax.set_ylim(0, 105)
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_distance_curves(curves: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]], path) -> None:
    """One panel per run: KDE curves of positive and negative pair distances.

    ``curves`` maps run name to (grid, density_pos, density_neg).
    """
    n = len(curves)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 3.2), squeeze=False)
    for ax, (run, (grid, pos, neg)) in zip(axes[0], sorted(curves.items())):
        ax.plot(grid, pos, color="#666666", label="same id")
        ax.plot(grid, neg, color="#7b3fa0", label="different id")
        ax.fill_between(grid, pos, alpha=0.25, color="#666666")
        ax.fill_between(grid, neg, alpha=0.25, color="#7b3fa0")
        ax.set_title(run)
        ax.set_xlabel("distance")
        ax.set_ylabel("density")
        ax.legend(frameon=False)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_condition_matrix(cells: list[dict], path) -> None:
    """4x4 heatmap of per-cell mAP@k with R1 annotated underneath."""
    order = ["separated-initial", "separated-flipped", "touched-initial", "touched-flipped"]
    grid = np.full((4, 4), np.nan)
    r1 = np.full((4, 4), np.nan)
    for cell in cells:
        qi = order.index(cell["query_condition"])
        gi = order.index(cell["gallery_condition"])
        grid[qi, gi] = cell["map_at_k"]
        r1[qi, gi] = cell["r1"]

    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    im = ax.imshow(grid, vmin=0, vmax=100, cmap="viridis")
    ax.set_xticks(range(4))
    ax.set_yticks(range(4))
    ax.set_xticklabels(order, rotation=30, ha="right")
    ax.set_yticklabels(order)
    ax.set_xlabel("gallery condition")
    ax.set_ylabel("query condition")
    for i in range(4):
        for j in range(4):
            if not np.isnan(grid[i, j]):
                ax.text(
                    j,
                    i,
                    f"{grid[i, j]:.1f}\n{r1[i, j]:.1f}",
                    ha="center",
                    va="center",
                    color="white" if grid[i, j] < 60 else "black",
                    fontsize=8,
                )
    fig.colorbar(im, ax=ax, label="mAP@k (top) / R1 (bottom) %")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
