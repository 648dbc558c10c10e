"""Evaluation metrics: IOU, centerline cover rate, heading error, patch L1,
and trajectory negative log-likelihood on cost grids."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmap import CostGrid
from .errors import (
    EmptyHorizon,
    EmptyPrediction,
    InsufficientPoints,
    UndefinedMetric,
)
from .geometry import CameraModel, Pose2D, ground_coordinate_grid, polyline_yaw
from .mask import TRAVERSABLE, UNKNOWN, PathMask


def iou(pred: PathMask, gt: PathMask) -> float:
    """Intersection over union of traversable areas.

    Pixels the ground truth marks unknown are excluded from both sets: weak
    labels leave most of the image unknown, and predictions there are neither
    right nor wrong.
    """
    pred.require_same_shape(gt)
    known = gt.classes != UNKNOWN
    p = pred.traversable & known
    g = gt.traversable
    union = int((p | g).sum())
    if union == 0:
        raise UndefinedMetric("both masks are empty after excluding gt-unknown pixels")
    return float((p & g).sum() / union)


def centerline_pixels(mask: PathMask) -> tuple[np.ndarray, np.ndarray]:
    """Per-row centerline: (rows, cols) of the median traversable column.

    The median is always itself a traversable pixel, so a mask covers its own
    centerline even where a row's traversable run is split by a turn.
    """
    trav = mask.traversable
    rows = np.nonzero(trav.any(axis=1))[0]
    if len(rows) == 0:
        raise EmptyPrediction("mask has no traversable pixels")
    cols = np.empty(len(rows), dtype=int)
    for k, v in enumerate(rows):
        cs = np.nonzero(trav[v])[0]
        cols[k] = cs[len(cs) // 2]
    return rows, cols


def cover_rate(pred: PathMask, gt: PathMask) -> float:
    """Fraction of the predicted centerline lying on ground-truth traversable
    pixels."""
    pred.require_same_shape(gt)
    rows, cols = centerline_pixels(pred)
    return float((gt.classes[rows, cols] == TRAVERSABLE).mean())


def yaw_difference_deg(a_rad: float, b_rad: float) -> float:
    """Absolute heading difference in degrees, wrapped to [0, 180]."""
    d = abs(math.degrees(a_rad) - math.degrees(b_rad)) % 360.0
    return 360.0 - d if d > 180.0 else d


def mask_centerline_yaw(mask: PathMask, cam: CameraModel, fit_range: float) -> float:
    """Ground-plane heading of a mask's centerline (radians)."""
    rows, cols = centerline_pixels(mask)
    gx, gy, valid = ground_coordinate_grid(cam)
    ok = valid[rows, cols]
    pts = np.column_stack([gx[rows[ok], cols[ok]], gy[rows[ok], cols[ok]]])
    if len(pts) < 2:
        raise InsufficientPoints("centerline has fewer than 2 ground points")
    return polyline_yaw(pts, fit_range)


def delta_yaw(
    pred: PathMask, gt: PathMask, cam: CameraModel, fit_range: float = 10.0
) -> float:
    """Heading difference between predicted and ground-truth centerlines after
    projecting both to the ground plane; degrees in [0, 180]."""
    pred.require_same_shape(gt)
    return yaw_difference_deg(
        mask_centerline_yaw(pred, cam, fit_range),
        mask_centerline_yaw(gt, cam, fit_range),
    )


def patch_l1(pred: PathMask, gt: PathMask) -> float:
    """Mean absolute class-code difference, scaled to [0, 1]."""
    pred.require_same_shape(gt)
    diff = np.abs(pred.classes.astype(float) - gt.classes.astype(float))
    return float(diff.mean() / 255.0)


@dataclass(frozen=True)
class NllReport:
    """Trajectory cost summary over one horizon."""

    horizon: float
    nll: float
    probability: float
    n_poses: int = 0


def trajectory_nll(
    grid: CostGrid, demo: Sequence[Pose2D], horizon: float
) -> NllReport:
    """Mean -ln plausibility over demonstration poses within the horizon.

    The demonstration starts at the grid origin; poses are kept while their
    cumulative arc length stays within `horizon`. Poses falling outside the
    grid are charged the floor plausibility.
    """
    poses = list(demo)
    if not poses:
        raise EmptyHorizon("demonstration trajectory is empty")
    arc = 0.0
    nlls = []
    prev = poses[0]
    for k, p in enumerate(poses):
        if k > 0:
            arc += math.hypot(p.x - prev.x, p.y - prev.y)
            prev = p
        if arc > horizon + 1e-9:
            break
        nlls.append(-math.log(grid.plausibility_at(p.x, p.y)))
    if not nlls:
        raise EmptyHorizon(f"no pose within {horizon} m of the trajectory start")
    nll = float(np.mean(nlls))
    return NllReport(horizon=horizon, nll=nll, probability=math.exp(-nll),
                     n_poses=len(nlls))


@dataclass(frozen=True)
class FrameMetrics:
    frame_id: str
    iou: float
    cover_rate: float
    delta_yaw_deg: float
    patch_l1: float


@dataclass
class MetricReport:
    """Per-frame metric rows plus their aggregate (NaN-skipping means)."""

    rows: list[FrameMetrics]

    FIELDS = ("iou", "cover_rate", "delta_yaw_deg", "patch_l1")

    def aggregate(self) -> dict[str, float]:
        with np.errstate(all="ignore"):
            return {
                f: float(np.nanmean([getattr(r, f) for r in self.rows]))
                for f in self.FIELDS
            }

    def to_csv(self, path: str | os.PathLike) -> None:
        agg = self.aggregate()
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["frame"] + list(self.FIELDS))
            for r in self.rows:
                writer.writerow(
                    [r.frame_id] + [f"{getattr(r, field):.6f}" for field in self.FIELDS]
                )
            writer.writerow(["aggregate"] + [f"{agg[field]:.6f}" for field in self.FIELDS])

    def format_table(self, label: str = "frames") -> str:
        """Human-readable summary table (percentages for ratio metrics)."""
        agg = self.aggregate()
        lines = [
            f"{'set':<12}{'IOU/%':>10}{'cover_rate/%':>16}{'d_yaw/deg':>12}{'patch_L1':>12}",
            f"{label:<12}{100 * agg['iou']:>10.2f}{100 * agg['cover_rate']:>16.2f}"
            f"{agg['delta_yaw_deg']:>12.2f}{agg['patch_l1']:>12.4f}",
        ]
        return "\n".join(lines)


def format_nll_table(reports: Sequence[NllReport], label: str = "oracle") -> str:
    lines = [f"{'prediction distance':<22}{label:>12}"]
    for r in reports:
        lines.append(f"{f'{r.horizon:g} m':<22}{r.nll:>12.3f}")
    lines.append("")
    for r in reports:
        lines.append(f"probability@{r.horizon:g}m = {r.probability:.3f}")
    return "\n".join(lines)
