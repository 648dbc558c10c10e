"""Top-view navigation cost map: cell projection, Gaussian fusion, planning.

Cells are indexed (ix, iy) with ix along robot-forward x and iy along lateral
y; arrays are stored row-major with iy as the row, matching the on-disk
layout. Cell (ix, iy) covers [x0 + ix*res, x0 + (ix+1)*res) etc., with its
center at x0 + (ix + 0.5) * res.
"""

from __future__ import annotations

import heapq
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
from scipy import ndimage

from .errors import IoError, NoReachableGoal
from .geometry import CameraModel, Pose2D, ground_coordinate_grid
from .mask import PathMask


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the top-view grid; origin is the robot at (0, 0)."""

    resolution: float = 0.1
    x_range: tuple[float, float] = (0.0, 20.0)
    y_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValueError("grid ranges must be non-degenerate")

    @property
    def nx(self) -> int:
        return int(round((self.x_range[1] - self.x_range[0]) / self.resolution))

    @property
    def ny(self) -> int:
        return int(round((self.y_range[1] - self.y_range[0]) / self.resolution))

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """Containing cell of a metric point, or None outside the grid."""
        ix = math.floor((x - self.x_range[0]) / self.resolution)
        iy = math.floor((y - self.y_range[0]) / self.resolution)
        if 0 <= ix < self.nx and 0 <= iy < self.ny:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.x_range[0] + (ix + 0.5) * self.resolution,
            self.y_range[0] + (iy + 0.5) * self.resolution,
        )


@dataclass(frozen=True)
class KernelParams:
    """Gaussian kernel widths/amplitudes and the obstacle height gate."""

    sigma_path: float = 1.0
    sigma_obs: float = 0.6
    amp_path: float = 1.0
    amp_obs: float = 1.0
    height_range: tuple[float, float] = (0.3, 2.0)
    floor_eps: float = 1e-3

    def __post_init__(self):
        if self.sigma_path <= 0 or self.sigma_obs <= 0:
            raise ValueError("kernel sigmas must be positive")
        if not (0 < self.floor_eps < self.amp_path <= 1.0):
            raise ValueError("need 0 < floor_eps < amp_path <= 1")
        if not (0 < self.amp_obs <= 1.0):
            raise ValueError("amp_obs must lie in (0, 1]")
        if self.height_range[0] > self.height_range[1]:
            raise ValueError("height_range must be ordered [z_min, z_max]")


@dataclass(frozen=True)
class LaserScan:
    """Scan points (x, y, z) in the robot frame, meters."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("laser points must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class CostGrid:
    """Fused per-cell plausibility in [floor_eps, 1] and its -ln cost."""

    spec: GridSpec
    plausibility: np.ndarray = field(repr=False)
    path_field: np.ndarray | None = field(repr=False, default=None)
    obstacle_field: np.ndarray | None = field(repr=False, default=None)
    params: KernelParams | None = None

    def __post_init__(self):
        p = np.asarray(self.plausibility, dtype=float)
        if p.shape != (self.spec.ny, self.spec.nx):
            raise ValueError(
                f"plausibility shape {p.shape} != grid (ny={self.spec.ny}, nx={self.spec.nx})"
            )
        if not np.isfinite(p).all():
            raise ValueError("plausibility must be finite")
        object.__setattr__(self, "plausibility", p)

    @property
    def cost(self) -> np.ndarray:
        """Per-cell traversal cost, -ln(plausibility)."""
        return -np.log(self.plausibility)

    @property
    def floor_eps(self) -> float:
        return self.params.floor_eps if self.params else float(self.plausibility.min())

    def plausibility_at(self, x: float, y: float) -> float:
        """Plausibility of the containing cell; floor value outside the grid."""
        cell = self.spec.cell_of(x, y)
        if cell is None:
            return self.floor_eps
        ix, iy = cell
        return float(self.plausibility[iy, ix])


class CellProjection(NamedTuple):
    cells: set[tuple[int, int]]
    skipped: int


def mask_to_cells(mask: PathMask, cam: CameraModel, spec: GridSpec) -> CellProjection:
    """Back-project traversable mask pixels onto grid cells.

    Pixels above the horizon (or landing outside the grid) are skipped and
    counted; a cell is marked when at least one projected pixel lands in it.
    """
    if (mask.height, mask.width) != (cam.image_height, cam.image_width):
        raise ValueError(
            f"mask {mask.width}x{mask.height} does not match camera "
            f"{cam.image_width}x{cam.image_height}"
        )
    gx, gy, valid = ground_coordinate_grid(cam)
    trav = mask.traversable
    usable = trav & valid
    skipped = int(trav.sum() - usable.sum())
    xs = gx[usable]
    ys = gy[usable]
    ix = np.floor((xs - spec.x_range[0]) / spec.resolution).astype(int)
    iy = np.floor((ys - spec.y_range[0]) / spec.resolution).astype(int)
    inside = (ix >= 0) & (ix < spec.nx) & (iy >= 0) & (iy < spec.ny)
    skipped += int((~inside).sum())
    cells = set(zip(ix[inside].tolist(), iy[inside].tolist()))
    return CellProjection(cells, skipped)


def laser_to_cells(scan: LaserScan, params: KernelParams, spec: GridSpec) -> CellProjection:
    """Bin in-height-range scan points into grid cells; out-of-gate points are
    dropped and counted. The height gate is the closed interval
    [z_min, z_max]."""
    if len(scan) == 0:
        return CellProjection(set(), 0)
    pts = scan.points
    z_ok = (pts[:, 2] >= params.height_range[0]) & (pts[:, 2] <= params.height_range[1])
    ix = np.floor((pts[:, 0] - spec.x_range[0]) / spec.resolution).astype(int)
    iy = np.floor((pts[:, 1] - spec.y_range[0]) / spec.resolution).astype(int)
    inside = (ix >= 0) & (ix < spec.nx) & (iy >= 0) & (iy < spec.ny)
    keep = z_ok & inside
    cells = set(zip(ix[keep].tolist(), iy[keep].tolist()))
    return CellProjection(cells, int((~keep).sum()))


def _kernel_field(
    cells: Iterable[tuple[int, int]], sigma: float, amp: float, spec: GridSpec
) -> np.ndarray:
    """amp * max over marked cells of exp(-d^2 / (2 sigma^2)), d between cell centers.

    The max over same-width kernels is a function of the distance to the
    nearest marked cell, so an exact Euclidean feature transform gives the
    same values as the per-cell maximum.
    """
    marked = np.zeros((spec.ny, spec.nx), dtype=bool)
    for ix, iy in cells:
        if not (0 <= ix < spec.nx and 0 <= iy < spec.ny):
            raise ValueError(f"cell ({ix}, {iy}) outside grid {spec.nx}x{spec.ny}")
        marked[iy, ix] = True
    if not marked.any():
        return np.zeros((spec.ny, spec.nx))
    near_iy, near_ix = ndimage.distance_transform_edt(~marked, return_distances=False,
                                                      return_indices=True)
    iys, ixs = np.indices(marked.shape)
    d2 = (((ixs - near_ix) ** 2 + (iys - near_iy) ** 2).astype(float)
          * spec.resolution * spec.resolution)
    return amp * np.exp(-d2 / (2.0 * sigma * sigma))


def fuse(
    path_cells: Iterable[tuple[int, int]],
    obstacle_cells: Iterable[tuple[int, int]],
    params: KernelParams,
    spec: GridSpec,
) -> CostGrid:
    """Fuse positive path and negative obstacle kernels into one cost grid.

    plausibility = clamp(path_field - obstacle_field, floor_eps, 1); the cell
    cost is -ln plausibility.
    """
    path_field = _kernel_field(path_cells, params.sigma_path, params.amp_path, spec)
    obstacle_field = _kernel_field(obstacle_cells, params.sigma_obs, params.amp_obs, spec)
    plausibility = np.clip(path_field - obstacle_field, params.floor_eps, 1.0)
    return CostGrid(spec=spec, plausibility=plausibility, path_field=path_field,
                    obstacle_field=obstacle_field, params=params)


_STEPS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


def extract_local_path(grid: CostGrid, start: Pose2D, horizon: float) -> list[Pose2D]:
    """Plan a local path to the most plausible reachable cell beyond the horizon.

    Dijkstra over the 8-connected cell graph with edge weight
    step_length * mean(endpoint costs); ties between equal-cost paths are
    broken by path length, which steers the uniform-field case straight
    along +x. Returned poses are cell centers with segment headings.
    """
    start_cell = grid.spec.cell_of(start.x, start.y)
    if start_cell is None:
        raise ValueError(f"start ({start.x}, {start.y}) outside the grid")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    cost = grid.cost
    res = grid.spec.resolution
    nx, ny = grid.spec.nx, grid.spec.ny
    sx, sy = start_cell

    dist = np.full((ny, nx), np.inf)
    dlen = np.full((ny, nx), np.inf)
    parent = np.full((ny, nx, 2), -1, dtype=int)
    dist[sy, sx] = 0.0
    dlen[sy, sx] = 0.0
    pq: list[tuple[float, float, int, int]] = [(0.0, 0.0, sx, sy)]
    while pq:
        c, l, x, y = heapq.heappop(pq)
        if (c, l) > (dist[y, x], dlen[y, x]):
            continue
        for dx, dy in _STEPS:
            xn, yn = x + dx, y + dy
            if not (0 <= xn < nx and 0 <= yn < ny):
                continue
            step = res * math.sqrt(2.0) if dx and dy else res
            cn = c + step * 0.5 * (cost[y, x] + cost[yn, xn])
            ln = l + step
            if (cn, ln) < (dist[yn, xn], dlen[yn, xn]):
                dist[yn, xn] = cn
                dlen[yn, xn] = ln
                parent[yn, xn] = (x, y)
                heapq.heappush(pq, (cn, ln, xn, yn))

    # Candidate goals: reachable cells beyond the horizon that are not floored out.
    floor = grid.floor_eps * (1.0 + 1e-9)
    ixs, iys = np.meshgrid(np.arange(nx), np.arange(ny))
    radial = np.hypot((ixs - sx) * res, (iys - sy) * res)
    cand = (radial >= horizon) & (grid.plausibility > floor) & np.isfinite(dist)
    if not cand.any():
        raise NoReachableGoal(f"no cell beyond {horizon} m has plausibility above floor")
    cys, cxs = np.nonzero(cand)
    best = min(
        range(len(cxs)),
        key=lambda k: (
            cost[cys[k], cxs[k]],
            dist[cys[k], cxs[k]],
            dlen[cys[k], cxs[k]],
            -(cxs[k] - sx),
            abs(cys[k] - sy),
            cys[k],
        ),
    )
    gx, gy = int(cxs[best]), int(cys[best])

    cells = []
    x, y = gx, gy
    while (x, y) != (sx, sy):
        cells.append((x, y))
        x, y = parent[y, x]
    cells.append((sx, sy))
    cells.reverse()

    centers = [grid.spec.cell_center(ix, iy) for ix, iy in cells]
    poses = []
    for k, (cx_, cy_) in enumerate(centers):
        if k + 1 < len(centers):
            yaw = math.atan2(centers[k + 1][1] - cy_, centers[k + 1][0] - cx_)
        else:
            yaw = poses[-1].yaw if poses else 0.0
        poses.append(Pose2D(cx_, cy_, yaw))
    return poses


_MAGIC = "NAVCOST v1"


def write_costgrid(path: str | os.PathLike, grid: CostGrid) -> None:
    """Write the NAVCOST v1 file: ASCII header, one comment line documenting the
    cell ordering and kernel parameters, then W*H little-endian float32
    plausibility values (row-major, iy-major)."""
    spec = grid.spec
    header = (
        f"{_MAGIC} {spec.nx} {spec.ny} {spec.resolution!r} "
        f"{spec.x_range[0]!r} {spec.y_range[0]!r}\n"
    )
    p = grid.params
    params = (
        f"sigma_path={p.sigma_path!r} sigma_obs={p.sigma_obs!r} amp_path={p.amp_path!r} "
        f"amp_obs={p.amp_obs!r} floor_eps={p.floor_eps!r} "
        f"height_range={p.height_range[0]!r}:{p.height_range[1]!r}"
        if p
        else ""
    )
    comment = (
        "# value[iy*W + ix] = plausibility of cell center "
        "(x0+(ix+0.5)*res, y0+(iy+0.5)*res), float32 LE; " + params + "\n"
    )
    try:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(comment.encode("ascii"))
            f.write(grid.plausibility.astype("<f4").tobytes())
    except OSError as e:
        raise IoError(f"cannot write cost grid {path}: {e}") from e


def read_costgrid(path: str | os.PathLike) -> CostGrid:
    """Read a NAVCOST v1 file back into a CostGrid (fields other than
    plausibility are not stored on disk)."""
    try:
        with open(path, "rb") as f:
            header = f.readline().decode("ascii").split()
            comment = f.readline().decode("ascii")
            payload = f.read()
    except OSError as e:
        raise IoError(f"cannot read cost grid {path}: {e}") from e
    if header[: len(_MAGIC.split())] != _MAGIC.split() or len(header) != 7:
        raise IoError(f"{path} is not a {_MAGIC} file")
    w, h = int(header[2]), int(header[3])
    res, x0, y0 = (float(v) for v in header[4:7])
    spec = GridSpec(resolution=res, x_range=(x0, x0 + w * res), y_range=(y0, y0 + h * res))
    if len(payload) != w * h * 4:
        raise IoError(f"{path}: expected {w * h * 4} payload bytes, got {len(payload)}")
    plaus = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(float)
    params = _parse_params(comment)
    return CostGrid(spec=spec, plausibility=plaus, params=params)


def _parse_params(comment: str) -> KernelParams | None:
    fields = {}
    for token in comment.split():
        if "=" not in token:
            continue
        key, val = token.split("=", 1)
        fields[key] = val
    try:
        return KernelParams(
            sigma_path=float(fields["sigma_path"]),
            sigma_obs=float(fields["sigma_obs"]),
            amp_path=float(fields["amp_path"]),
            amp_obs=float(fields["amp_obs"]),
            floor_eps=float(fields["floor_eps"]),
            height_range=tuple(float(v) for v in fields["height_range"].split(":")),
        )
    except (KeyError, ValueError):
        return None
