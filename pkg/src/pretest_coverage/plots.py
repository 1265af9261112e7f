"""Figure rendering for the report-producing CLI commands.

Renders to files only (Agg backend); the CSV next to each figure remains
the canonical, machine-readable artifact.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .boundary import ContourGrid, ScalingPoint  # noqa: E402

__all__ = ["save_contour_figure", "save_scaling_figure"]


def save_contour_figure(grid: ContourGrid, path: Path, nominal: float | None = None) -> Path:
    """Filled contour of the partially-minimized coverage over (p1, p1')."""
    fig, ax = plt.subplots(figsize=(7.0, 5.6))
    mesh = ax.contourf(grid.p1_values, grid.p1p_values, grid.values.T, levels=24)
    contours = ax.contour(grid.p1_values, grid.p1p_values, grid.values.T,
                          levels=8, colors="black", linewidths=0.4)
    ax.clabel(contours, inline=True, fontsize=7, fmt="%.3f")
    cbar = fig.colorbar(mesh, ax=ax)
    cbar.set_label("partially-minimized coverage")
    if nominal is not None:
        cbar.ax.axhline(nominal, color="red", lw=1.0)
    ax.set_xlabel("$p_1$")
    ax.set_ylabel("$p_1'$")
    ax.set_title("Minimum two-stage coverage over the stratum-2 sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_scaling_figure(points: Sequence[ScalingPoint], path: Path,
                        nominal: float | None = None) -> Path:
    """Partially-minimized coverage versus the sample-size multiple."""
    included = [pt for pt in points if pt.coverage is not None]
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    ax.plot([pt.scale for pt in included], [pt.coverage for pt in included],
            marker="o", color="tab:blue")
    if nominal is not None:
        ax.axhline(nominal, color="red", lw=1.0, ls="--", label="nominal")
        ax.legend()
    ax.set_xscale("log", base=2)
    ax.set_xlabel("sample-size multiple N")
    ax.set_ylabel("partially-minimized coverage")
    ax.set_title("Coverage does not recover as sample sizes grow")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
