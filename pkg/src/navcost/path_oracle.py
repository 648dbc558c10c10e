"""Pluggable goal-directed path generation: geometric oracle + external masks.

The learned generator is out of scope here; this module supplies the same
interface three ways: a geometric oracle over a synthetic world, a loader for
masks produced by external ML tooling, and canonical fake instructions for
multi-modal studies.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as sparse_dijkstra

from .errors import DimensionMismatch, NoFeasibleBranch, OffRoad
from .geometry import CameraModel, Pose2D, footprint_to_mask, normalize_angle
from .mask import PathMask, snap_to_class_codes
from .pgm import read_pgm
from .route_map import InstructionView, draw_polyline_raster
from .simworld import (
    APPROACH,
    DEFAULT_OBSTACLE_CLEARANCE,
    DEFAULT_PATH_HORIZON,
    DEFAULT_VEHICLE_WIDTH,
    World,
    polyline_arc_length,
    project_to_polyline,
    remove_mask_near_obstacles,
    route_ahead,
)

#: Fraction of the view size used for the stroke width and the decode windows.
STROKE_FRACTION = 0.05
_PROBE_FRACTION = 0.15  # geodesic distance used to pick the "ahead" stroke end
_TAIL_FRACTION = 0.15  # trailing stroke length whose direction names the branch
#: A straight continuation is trusted when the junction was too far to show up
#: in the instruction window, minus a slack for route-matching jitter (meters).
FALLBACK_SLACK_M = 3.0


class FakeDirection(str, Enum):
    GO_STRAIGHT = "go_straight"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"


@dataclass(frozen=True)
class GeneratorInput:
    """The generator contract: a camera image plus a local instruction view."""

    image: np.ndarray
    instruction: InstructionView

    def validate(self, cam: CameraModel, out_px: int | None = None) -> None:
        if self.image.shape != (cam.image_height, cam.image_width):
            raise DimensionMismatch(
                f"image {self.image.shape} != camera "
                f"({cam.image_height}, {cam.image_width})"
            )
        if out_px is not None and self.instruction.out_px != out_px:
            raise DimensionMismatch(
                f"instruction {self.instruction.out_px} px != expected {out_px} px"
            )


class PathGenerator(Protocol):
    """Anything that turns (image, instruction) into a goal-directed path mask."""

    def generate(self, inp: GeneratorInput, pose: Pose2D) -> PathMask: ...


def fake_instruction(
    direction: FakeDirection | str,
    window_size_m: float = 30.0,
    out_px: int = 648,
) -> InstructionView:
    """Synthesize a canonical instruction raster.

    go_straight is a full-height vertical stroke through the window center;
    the turns are L-strokes that bend at the center and leave through the
    matching border. Left and right are exact mirrors.
    """
    direction = FakeDirection(direction)
    c = (out_px - 1) / 2.0
    if direction is FakeDirection.GO_STRAIGHT:
        polyline = [(c, out_px - 1.0), (c, 0.0)]
    elif direction is FakeDirection.TURN_LEFT:
        polyline = [(c, out_px - 1.0), (c, c), (0.0, c)]
    else:
        polyline = [(c, out_px - 1.0), (c, c), (out_px - 1.0, c)]
    raster = draw_polyline_raster(
        (out_px, out_px), np.array(polyline), stroke_px=STROKE_FRACTION * out_px
    )
    return InstructionView(raster=raster, window_size_m=window_size_m)


def _stroke_graph(white: np.ndarray) -> tuple[np.ndarray, csr_matrix]:
    """8-connected pixel graph over the stroke; returns (coords (N,2) as
    (row, col), adjacency)."""
    coords = np.argwhere(white)
    index = np.full(white.shape, -1, dtype=int)
    index[coords[:, 0], coords[:, 1]] = np.arange(len(coords))
    rows_i = []
    rows_j = []
    weights = []
    h, w = white.shape
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        src = coords[
            (coords[:, 0] + dr < h)
            & (coords[:, 1] + dc >= 0)
            & (coords[:, 1] + dc < w)
        ]
        dst_idx = index[src[:, 0] + dr, src[:, 1] + dc]
        ok = dst_idx >= 0
        src_idx = index[src[ok, 0], src[ok, 1]]
        rows_i.append(src_idx)
        rows_j.append(dst_idx[ok])
        weights.append(np.full(ok.sum(), math.hypot(dr, dc)))
    i = np.concatenate(rows_i) if rows_i else np.empty(0, int)
    j = np.concatenate(rows_j) if rows_j else np.empty(0, int)
    wts = np.concatenate(weights) if weights else np.empty(0)
    n = len(coords)
    graph = csr_matrix((wts, (i, j)), shape=(n, n))
    return coords, graph + graph.T


def decode_instruction_turn(instruction: InstructionView) -> float:
    """Read the indicated turn out of an instruction raster.

    The stroke is traced as a geodesic from the robot's position (the stroke
    pixel nearest the view center): the end reached by initially moving up is
    "ahead", and the direction of the trailing stroke segment at that end is
    the indicated travel direction. Returns the angle relative to image-up,
    radians, CCW positive (left turn > 0). Translation of the stroke does not
    change the result, which is what makes offset injection survivable.
    """
    raster = instruction.raster
    white = raster >= 128
    if white.sum() < 8:
        raise ValueError("instruction raster carries no usable stroke")
    out_px = instruction.out_px
    coords, graph = _stroke_graph(white)
    center = (np.array(raster.shape, dtype=float) - 1.0) / 2.0
    start = int(np.argmin(((coords - center) ** 2).sum(axis=1)))

    d_start = sparse_dijkstra(graph, indices=start)
    reachable = np.isfinite(d_start)
    if reachable.sum() < 8:
        raise ValueError("instruction stroke is fragmented at the view center")
    far = np.where(reachable, d_start, -1.0)
    end_a = int(np.argmax(far))
    d_a = sparse_dijkstra(graph, indices=end_a)
    end_b = int(np.argmax(np.where(np.isfinite(d_a), d_a, -1.0)))
    d_b = sparse_dijkstra(graph, indices=end_b)

    probe = _PROBE_FRACTION * out_px

    def initial_up_component(d_end: np.ndarray, end: int) -> float:
        toward = (d_end < d_end[start]) & reachable & (d_start > 0) & (d_start <= probe)
        if not toward.any():
            return -math.inf
        mean = coords[toward].mean(axis=0) - coords[start]
        norm = math.hypot(mean[0], mean[1])
        return -mean[0] / norm if norm > 0 else -math.inf  # row decreases upward

    ahead_end, d_ahead = max(
        ((end_a, d_a), (end_b, d_b)),
        key=lambda pair: initial_up_component(pair[1], pair[0]),
    )

    tail = np.isfinite(d_ahead) & (d_ahead <= _TAIL_FRACTION * out_px) & reachable
    pts = coords[tail].astype(float)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    axis = vecs[:, -1]  # (d_row, d_col)
    toward_end = coords[ahead_end] - pts.mean(axis=0)
    if np.dot(axis, toward_end) < 0:
        axis = -axis
    dv, du = axis
    return math.atan2(-du, -dv)


def oracle_generate(
    world: World,
    pose: Pose2D,
    instruction: InstructionView,
    cam: CameraModel,
    horizon_m: float = DEFAULT_PATH_HORIZON,
    width_m: float = DEFAULT_VEHICLE_WIDTH,
    clearance_m: float = DEFAULT_OBSTACLE_CLEARANCE,
) -> PathMask:
    """Geometric stand-in for the learned generator.

    Decodes the instruction's indicated direction, picks the nearest world
    branch whose heading matches within 45 degrees, sweeps the vehicle width
    along the route centerline ahead, removes obstacle-occluded area, and
    renders the camera-frame mask. When no branch matches but the decode says
    "keep straight" and the junction lies at or beyond the instruction's
    visible half-window, the straight continuation up to the junction is
    used; otherwise NoFeasibleBranch.
    """
    if not world.on_road(pose.x, pose.y):
        raise OffRoad(f"pose ({pose.x:.2f}, {pose.y:.2f}) is not on a traversable region")
    relative = decode_instruction_turn(instruction)
    up_heading = instruction.heading if instruction.heading is not None else pose.yaw
    desired = normalize_angle(up_heading + relative)

    candidates = [
        b
        for b in world.branches
        if abs(normalize_angle(b.heading - desired)) <= math.pi / 4
    ]
    candidates.sort(
        key=lambda b: project_to_polyline(b.polyline, np.array([pose.x, pose.y]))[1]
    )
    centerline = None
    for branch in candidates:
        if branch.branch_id == APPROACH:
            continue  # the approach arm is not a drivable route
        try:
            centerline = route_ahead(world, pose, branch.branch_id, horizon_m)
            break
        except OffRoad:
            continue
    if centerline is None:
        if abs(normalize_angle(desired - pose.yaw)) <= math.pi / 4:
            half_window = instruction.window_size_m / 2.0
            approach = world.branch(APPROACH)
            approach_route = np.vstack([approach.polyline[-1], approach.polyline[0]])
            s0, lateral = project_to_polyline(approach_route, np.array([pose.x, pose.y]))
            to_junction = polyline_arc_length(approach_route) - s0
            if (
                lateral <= world.road_width / 2.0
                and to_junction >= half_window - FALLBACK_SLACK_M
            ):
                centerline = route_ahead(world, pose, None, horizon_m)
        if centerline is None:
            raise NoFeasibleBranch(
                f"no branch within 45 deg of indicated heading {math.degrees(desired):.1f}"
            )
    mask = footprint_to_mask(centerline, width_m, cam)
    return remove_mask_near_obstacles(mask, cam, pose, world, clearance_m)


def load_external_mask(
    path: str | os.PathLike, expected_dims: tuple[int, int]
) -> tuple[PathMask, int]:
    """Load a PathMask produced by an external generator.

    expected_dims is (width, height). Non-canonical gray values are snapped to
    the nearest class code; the second return value counts snapped pixels.
    """
    raw = read_pgm(path)
    w, h = expected_dims
    if raw.shape != (h, w):
        raise DimensionMismatch(f"{path}: mask is {raw.shape[::-1]}, expected {(w, h)}")
    snapped, warnings = snap_to_class_codes(raw)
    return PathMask(snapped), warnings


@dataclass
class OracleGenerator:
    """PathGenerator backed by the geometric oracle over a synthetic world."""

    world: World
    cam: CameraModel
    horizon_m: float = DEFAULT_PATH_HORIZON
    width_m: float = DEFAULT_VEHICLE_WIDTH
    clearance_m: float = DEFAULT_OBSTACLE_CLEARANCE

    def generate(self, inp: GeneratorInput, pose: Pose2D) -> PathMask:
        inp.validate(self.cam)
        return oracle_generate(
            self.world, pose, inp.instruction, self.cam,
            self.horizon_m, self.width_m, self.clearance_m,
        )
