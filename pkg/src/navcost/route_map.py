"""Route discretization, DTW pose-to-route alignment, and instruction views.

Map rasters are 8-bit grayscale with image axes: x = column (east), y = row
increasing southward (row 0 is the north edge). All headings in files and
APIs are world-frame radians, CCW from +x/east; drawing and cropping code
converts internally.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import pgm
from .errors import DegenerateRoute, EmptySequence, IoError, OutOfMapBounds
from .geometry import points_to_polyline_d2

#: Offset level -> (low, high) magnitude as a fraction of the view size.
OFFSET_LEVELS = {
    "minor": (0.0, 0.06),
    "moderate": (0.06, 0.12),
    "hard": (0.12, 0.18),
}


@dataclass(frozen=True)
class RoutePolyline:
    """Authored route: vertices in map pixels plus per-segment headings.

    segment_headings[i] is the world-frame heading of the edge from
    vertices[i] to vertices[i+1]; a route point at arc position s belongs to
    the edge containing s (the final point to the last edge).
    """

    vertices: np.ndarray = field(repr=False)
    segment_headings: np.ndarray = field(repr=False)
    scale: float  # meters per map pixel

    def __post_init__(self):
        verts = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        headings = np.atleast_1d(np.asarray(self.segment_headings, dtype=float))
        if len(verts) < 2:
            raise ValueError("route needs at least 2 vertices")
        if len(headings) != len(verts) - 1:
            raise ValueError(
                f"expected {len(verts) - 1} segment headings, got {len(headings)}"
            )
        if self.scale <= 0:
            raise ValueError("scale must be positive (meters per pixel)")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "segment_headings", headings)

    def edge_lengths_px(self) -> np.ndarray:
        return np.hypot(*np.diff(self.vertices, axis=0).T)

    def length_px(self) -> float:
        return float(self.edge_lengths_px().sum())

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "segment_headings": self.segment_headings.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RoutePolyline":
        return cls(
            vertices=np.asarray(data["vertices"], dtype=float),
            segment_headings=np.asarray(data["segment_headings"], dtype=float),
            scale=float(data["scale"]),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RoutePolyline":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_json(json.load(f))
        except OSError as e:
            raise IoError(f"cannot read route file {path}: {e}") from e

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)
            f.write("\n")


@dataclass(frozen=True)
class RoutePointSeq:
    """Discretized route points (map pixels), ordered along the route."""

    points: np.ndarray = field(repr=False)
    spacing: float  # realized spacing, map pixels
    scale: float  # meters per map pixel
    headings: np.ndarray = field(repr=False, default=None)  # world radians per point

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if self.headings is not None:
            h = np.atleast_1d(np.asarray(self.headings, dtype=float))
            if len(h) != len(pts):
                raise ValueError("headings length must match points")
            object.__setattr__(self, "headings", h)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class TrajectorySeq:
    """Robot poses projected to map pixels, time-ordered."""

    poses: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "poses", np.atleast_2d(np.asarray(self.poses, dtype=float)))

    def __len__(self) -> int:
        return len(self.poses)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TrajectorySeq":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls(np.asarray(json.load(f)["poses"], dtype=float))
        except OSError as e:
            raise IoError(f"cannot read trajectory file {path}: {e}") from e

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"poses": self.poses.tolist()}, f, indent=2)
            f.write("\n")


@dataclass(frozen=True)
class WarpPath:
    """Monotone index correspondence between a trajectory and route points.

    pairs[k] = (i, j) maps trajectory index i to route index j; cost is the
    normalized score (1/K) * sqrt(sum of squared step distances) and
    total_distance the accumulated distance of the optimal path.
    """

    pairs: np.ndarray = field(repr=False)
    K: int
    cost: float
    total_distance: float

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=int)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("pairs must be (K, 2)")
        if self.K != len(pairs):
            raise ValueError("K must equal len(pairs)")
        if tuple(pairs[0]) != (0, 0):
            raise ValueError("warping path must start at (0, 0)")
        steps = np.diff(pairs, axis=0)
        ok = ((steps >= 0) & (steps <= 1)).all() and (steps.sum(axis=1) >= 1).all()
        if len(steps) and not ok:
            raise ValueError("warping path steps must be (1,0), (0,1) or (1,1)")
        object.__setattr__(self, "pairs", pairs)

    def matched_route_indices(self) -> np.ndarray:
        """For each trajectory index i, the last route index j paired with it."""
        n = int(self.pairs[-1, 0]) + 1
        out = np.zeros(n, dtype=int)
        for i, j in self.pairs:
            out[i] = j
        return out


@dataclass(frozen=True)
class InstructionView:
    """Local navigation view: the route stroked in a square, heading-up crop."""

    raster: np.ndarray = field(repr=False)
    window_size_m: float
    center: np.ndarray | None = None  # map px of the route point cropped around
    heading: float | None = None  # world heading shown as image-up; None for synthetic
    offset_applied: float = 0.0  # signed lateral offset, meters (+ = image-right)

    def __post_init__(self):
        r = np.asarray(self.raster, dtype=np.uint8)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"instruction raster must be square, got {r.shape}")
        if self.window_size_m <= 0:
            raise ValueError("window_size_m must be positive")
        object.__setattr__(self, "raster", r)
        if self.center is not None:
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def out_px(self) -> int:
        return self.raster.shape[0]

    def save_pgm(self, path: str | os.PathLike) -> None:
        pgm.write_pgm(path, self.raster)


@dataclass(frozen=True)
class MapFrame:
    """Placement of a map raster in the world: x0/y_top are the world
    coordinates of pixel (0, 0)'s center; rows run north to south."""

    x0: float
    y_top: float
    scale: float
    width: int
    height: int

    def world_to_map(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.column_stack([(p[:, 0] - self.x0) / self.scale,
                                (self.y_top - p[:, 1]) / self.scale])

    def map_to_world(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.column_stack([self.x0 + p[:, 0] * self.scale,
                                self.y_top - p[:, 1] * self.scale])

    def to_json(self) -> dict:
        return {"x0": self.x0, "y_top": self.y_top, "scale": self.scale,
                "width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, data: dict) -> "MapFrame":
        return cls(**data)


def discretize_route(route: RoutePolyline, spacing_m: float) -> RoutePointSeq:
    """Sample the route at (near-)uniform arc-length intervals, endpoints included.

    The route length is divided into n = round(L / spacing) equal intervals so
    the realized spacing stays within tolerance of the request.
    """
    if spacing_m <= 0 or spacing_m < 2.0 * route.scale:
        raise ValueError("spacing_m must be positive and at least 2 * scale")
    seg_len = route.edge_lengths_px()
    total_px = float(seg_len.sum())
    if total_px * route.scale < spacing_m:
        raise DegenerateRoute(
            f"route length {total_px * route.scale:.3f} m < spacing {spacing_m} m"
        )
    spacing_px = spacing_m / route.scale
    n = max(1, int(round(total_px / spacing_px)))
    arcs = np.arange(n + 1) * (total_px / n)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    pts = np.empty((n + 1, 2))
    headings = np.empty(n + 1)
    for k, s in enumerate(arcs):
        e = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg_len) - 1)
        t = (s - cum[e]) / seg_len[e] if seg_len[e] > 0 else 0.0
        pts[k] = route.vertices[e] + t * (route.vertices[e + 1] - route.vertices[e])
        headings[k] = route.segment_headings[e]
    return RoutePointSeq(points=pts, spacing=total_px / n, scale=route.scale,
                         headings=headings)


def _as_points(seq, attr: str) -> np.ndarray:
    arr = getattr(seq, attr, seq)
    return np.atleast_2d(np.asarray(arr, dtype=float))


def dtw_align(t: TrajectorySeq | np.ndarray, r: RoutePointSeq | np.ndarray) -> WarpPath:
    """Align trajectory points to route points with dynamic time warping.

    Accumulated distance gamma(i, j) = d(i, j) + min(diag, up, left) with d
    the Euclidean distance; ties in the backtrack prefer the diagonal, then
    (i-1, j), then (i, j-1), so output is deterministic.
    """
    tp = _as_points(t, "poses")
    rp = _as_points(r, "points")
    if tp.size == 0 or rp.size == 0:
        raise EmptySequence("both sequences must be non-empty")
    n, m = len(tp), len(rp)
    d = np.hypot(tp[:, 0][:, None] - rp[:, 0][None, :],
                 tp[:, 1][:, None] - rp[:, 1][None, :])
    g = np.empty((n, m))
    g[0, 0] = d[0, 0]
    for j in range(1, m):
        g[0, j] = d[0, j] + g[0, j - 1]
    for i in range(1, n):
        g[i, 0] = d[i, 0] + g[i - 1, 0]
        for j in range(1, m):
            g[i, j] = d[i, j] + min(g[i - 1, j - 1], g[i - 1, j], g[i, j - 1])

    # Backtrack, diagonal-first on ties.
    i, j = n - 1, m - 1
    rev = [(i, j)]
    while i > 0 or j > 0:
        cands = []
        if i > 0 and j > 0:
            cands.append((g[i - 1, j - 1], i - 1, j - 1))
        if i > 0:
            cands.append((g[i - 1, j], i - 1, j))
        if j > 0:
            cands.append((g[i, j - 1], i, j - 1))
        best = min(c[0] for c in cands)
        for val, bi, bj in cands:
            if val == best:
                i, j = bi, bj
                break
        rev.append((i, j))
    pairs = np.array(rev[::-1], dtype=int)
    dists = d[pairs[:, 0], pairs[:, 1]]
    k = len(pairs)
    cost = float(math.sqrt(float((dists ** 2).sum())) / k)
    return WarpPath(pairs=pairs, K=k, cost=cost, total_distance=float(g[n - 1, m - 1]))


def crop_instruction(
    map_raster: np.ndarray,
    r: RoutePointSeq,
    match_index: int,
    heading: float,
    window_size_m: float,
    out_px: int,
    offset_px: float = 0.0,
) -> InstructionView:
    """Cut a square, heading-up local view around a matched route point.

    The window covers window_size_m per side, rotated so the world heading
    points to image-up, resampled nearest-neighbor to out_px x out_px.
    offset_px shifts the crop center along image-right (emulating lateral
    localization error); the metric equivalent is recorded on the view.
    """
    raster = np.asarray(map_raster)
    if raster.ndim != 2:
        raise ValueError("map raster must be 2-D grayscale")
    if not (0 <= match_index < len(r)):
        raise ValueError(f"match_index {match_index} out of range 0..{len(r) - 1}")
    if out_px <= 0:
        raise ValueError("out_px must be positive")
    h, w = raster.shape
    px_per_out = window_size_m / out_px / r.scale
    up = np.array([math.cos(heading), -math.sin(heading)])  # world heading, map axes
    right = np.array([-up[1], up[0]])
    center = r.points[match_index] + offset_px * px_per_out * right

    half = (out_px - 1) / 2.0
    d = np.arange(out_px) - half
    # src = center + px_per_out * (dx * right - dy * up), dy down the output image
    src_x = center[0] + px_per_out * (d[None, :] * right[0] - d[:, None] * up[0])
    src_y = center[1] + px_per_out * (d[None, :] * right[1] - d[:, None] * up[1])
    cols = np.rint(src_x).astype(int)
    rows = np.rint(src_y).astype(int)
    if cols.min() < 0 or cols.max() >= w or rows.min() < 0 or rows.max() >= h:
        raise OutOfMapBounds(
            f"crop around map px {center.round(1).tolist()} exceeds {w}x{h} raster"
        )
    return InstructionView(
        raster=raster[rows, cols],
        window_size_m=window_size_m,
        center=r.points[match_index].copy(),
        heading=heading,
        offset_applied=offset_px * window_size_m / out_px,
    )


def inject_offset(level: str, out_px: int, rng_seed: int) -> float:
    """Draw a signed horizontal crop offset (pixels) for a localization-error level.

    Magnitude is uniform in the level's fraction band of out_px, sign uniform;
    identical seeds give identical offsets.
    """
    if level not in OFFSET_LEVELS:
        raise ValueError(f"unknown offset level {level!r}; expected {sorted(OFFSET_LEVELS)}")
    if out_px <= 0:
        raise ValueError("out_px must be positive")
    lo, hi = OFFSET_LEVELS[level]
    rng = np.random.default_rng(rng_seed)
    magnitude = rng.uniform(lo * out_px, hi * out_px)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return float(sign * magnitude)


def draw_polyline_raster(
    shape: tuple[int, int],
    vertices: np.ndarray,
    stroke_px: float,
    value: int = 255,
    background: int = 0,
) -> np.ndarray:
    """Stroke a polyline onto a fresh raster (pixel-center coverage test)."""
    h, w = shape
    cols, rows = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    d2 = points_to_polyline_d2(cols, rows, np.asarray(vertices, dtype=float))
    img = np.full(shape, background, dtype=np.uint8)
    img[d2 <= (0.5 * stroke_px) ** 2] = value
    return img
