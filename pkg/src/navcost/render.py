"""Matplotlib figure emission for CLI reports (cost maps, masks, alignment).

All figures are written straight to files with fixed dpi and constant PNG
metadata so reruns are byte-identical.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .costmap import CostGrid
from .evalkit import MetricReport, centerline_pixels
from .geometry import Pose2D
from .mask import PathMask

_SAVEKW = dict(dpi=120, metadata={"Software": "navcost"})


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, **_SAVEKW)
    plt.close(fig)


def costmap_figure(grid: CostGrid, path: str | os.PathLike,
                   plan: list[Pose2D] | None = None) -> None:
    """Heat image of the plausibility field, optional planned path overlay."""
    spec = grid.spec
    fig, ax = plt.subplots(figsize=(6, 6))
    extent = (*spec.x_range, *spec.y_range)
    im = ax.imshow(grid.plausibility, origin="lower", extent=extent, cmap="viridis",
                   vmin=0.0, vmax=1.0, aspect="equal")
    if plan:
        xs = [p.x for p in plan]
        ys = [p.y for p in plan]
        ax.plot(xs, ys, "r-", linewidth=1.5)
        ax.plot(xs[0], ys[0], "ro", markersize=4)
    fig.colorbar(im, ax=ax, label="plausibility")
    ax.set_xlabel("x forward [m]")
    ax.set_ylabel("y left [m]")
    _save(fig, path)


def mask_figure(mask: PathMask, path: str | os.PathLike,
                overlay_centerline: bool = True) -> None:
    """Grayscale mask with its extracted centerline marked."""
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.imshow(mask.classes, cmap="gray", vmin=0, vmax=255)
    if overlay_centerline and mask.traversable.any():
        rows, cols = centerline_pixels(mask)
        ax.plot(cols, rows, "r.", markersize=1.5)
    ax.set_axis_off()
    _save(fig, path)


def alignment_figure(traj_px: np.ndarray, route_px: np.ndarray, pairs: np.ndarray,
                     path: str | os.PathLike) -> None:
    """Trajectory, route points, and their warping correspondences."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for i, j in pairs:
        ax.plot(
            [traj_px[i, 0], route_px[j, 0]],
            [traj_px[i, 1], route_px[j, 1]],
            color="0.8", linewidth=0.6,
        )
    ax.plot(traj_px[:, 0], traj_px[:, 1], "b.-", label="trajectory", markersize=3)
    ax.plot(route_px[:, 0], route_px[:, 1], "r.", label="route points", markersize=5)
    ax.invert_yaxis()  # map rasters are y-down
    ax.legend()
    ax.set_aspect("equal")
    _save(fig, path)


def metrics_figure(report: MetricReport, path: str | os.PathLike) -> None:
    """Per-frame metric traces next to the CSV report."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    frames = np.arange(len(report.rows))
    for ax, fieldname in zip(axes.flat, report.FIELDS):
        values = [getattr(r, fieldname) for r in report.rows]
        ax.plot(frames, values, "b-", linewidth=0.9)
        ax.set_title(fieldname)
        ax.grid(True, alpha=0.3)
    axes[1, 0].set_xlabel("frame")
    axes[1, 1].set_xlabel("frame")
    fig.tight_layout()
    _save(fig, path)
