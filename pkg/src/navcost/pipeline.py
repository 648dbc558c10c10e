"""End-to-end frame pipeline over synthetic scenarios.

Shared by the CLI subcommands and the benchmark suite: builds the map and
route artifacts for a world, aligns frame poses to the discretized route,
renders instructions (optionally with injected localization offsets), runs
the oracle generator, fuses cost grids, and evaluates against ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import evalkit
from .costmap import CostGrid, GridSpec, KernelParams, fuse, laser_to_cells, mask_to_cells
from .errors import EmptyPrediction, InsufficientPoints, UndefinedMetric
from .geometry import CameraModel, DEFAULT_CAMERA, Pose2D, from_pose_frame, \
    ground_coordinate_grid, normalize_angle, points_in_polygon, to_pose_frame
from .label_gen import FrameRecord
from .mask import PathMask
from .path_oracle import oracle_generate
from .route_map import (
    InstructionView,
    MapFrame,
    RoutePolyline,
    TrajectorySeq,
    crop_instruction,
    discretize_route,
    draw_polyline_raster,
    dtw_align,
    inject_offset,
)
from .simworld import (
    ScanSpec,
    World,
    build_scenario,
    gt_path_mask,
    polyline_arc_length,
    pose_at_arc,
    simulate_laser,
)

#: Default exit branch per scenario kind, cycled by seed for variety.
KIND_BRANCHES = {
    "straight": ("east",),
    "t_junction": ("north", "south"),
    "crossroad": ("east", "north", "south"),
}


def default_branch(kind: str, seed: int) -> str:
    options = KIND_BRANCHES[kind]
    return options[seed % len(options)]


@dataclass(frozen=True)
class PipelineConfig:
    camera: CameraModel = DEFAULT_CAMERA
    grid: GridSpec = GridSpec()
    kernels: KernelParams = KernelParams()
    scan: ScanSpec = ScanSpec()
    window_size_m: float = 30.0
    out_px: int = 648
    map_scale: float = 0.1  # meters per map pixel
    route_spacing_m: float = 2.0
    footprint_width_m: float = 1.6
    path_horizon_m: float = 15.0
    label_horizon_m: float = 30.0
    fit_range_m: float = 10.0
    stroke_fraction: float = 0.05
    frame_dt: float = 0.5  # seconds between frames
    frame_tail_m: float = 12.0  # route length reserved past the last frame
    demo_spacing_m: float = 0.5


def build_route_map(
    world: World, branch: str, cfg: PipelineConfig
) -> tuple[np.ndarray, MapFrame, RoutePolyline]:
    """Render the route onto a fresh map raster covering the world.

    The margin leaves room for a rotated window crop plus the largest
    injectable offset at any route point.
    """
    route_w = world.route_polyline(branch)
    margin = 0.95 * cfg.window_size_m
    xs = [p[0] for poly in world.traversable_polygons for p in poly]
    ys = [p[1] for poly in world.traversable_polygons for p in poly]
    x_min, x_max = min(xs) - margin, max(xs) + margin
    y_min, y_max = min(ys) - margin, max(ys) + margin
    width = int(math.ceil((x_max - x_min) / cfg.map_scale)) + 1
    height = int(math.ceil((y_max - y_min) / cfg.map_scale)) + 1
    frame = MapFrame(x0=x_min, y_top=y_max, scale=cfg.map_scale, width=width,
                     height=height)
    verts_px = frame.world_to_map(route_w)
    stroke_px = cfg.stroke_fraction * cfg.window_size_m / cfg.map_scale
    raster = draw_polyline_raster((height, width), verts_px, stroke_px)
    seg = np.diff(route_w, axis=0)
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    route_px = RoutePolyline(vertices=verts_px, segment_headings=headings,
                             scale=cfg.map_scale)
    return raster, frame, route_px


def ego_prior_cells(cfg: PipelineConfig) -> set[tuple[int, int]]:
    """Cells under and just ahead of the vehicle, up to the first camera-visible
    ground range.

    A pitched forward camera cannot see the ground at the robot's own feet;
    those cells are traversable by the weak-supervision premise (the vehicle
    occupies them), so the pipeline seeds them as path cells before fusion.
    """
    gx, _, valid = ground_coordinate_grid(cfg.camera)
    x_min = float(gx[valid].min()) if valid.any() else 0.0
    spec = cfg.grid
    half = cfg.footprint_width_m / 2.0
    cells = set()
    for ix in range(spec.nx):
        for iy in range(spec.ny):
            xc, yc = spec.cell_center(ix, iy)
            if 0.0 <= xc <= x_min + spec.resolution and abs(yc) <= half:
                cells.add((ix, iy))
    return cells


def render_camera_view(world: World, pose: Pose2D, cam: CameraModel) -> np.ndarray:
    """Geometric grayscale proxy for the camera image: sky, ground, road
    surface, obstacle footprints."""
    gx, gy, valid = ground_coordinate_grid(cam)
    img = np.full((cam.image_height, cam.image_width), 225, dtype=np.uint8)
    img[valid] = 90
    px = gx[valid]
    py = gy[valid]
    wpts = from_pose_frame(np.column_stack([px, py]), pose)
    road = np.zeros(len(wpts), dtype=bool)
    for poly in world.traversable_polygons:
        road |= points_in_polygon(wpts[:, 0], wpts[:, 1], poly)
    shade = np.full(len(wpts), 90, dtype=np.uint8)
    shade[road] = 170
    for o in world.obstacles:
        shade[points_in_polygon(wpts[:, 0], wpts[:, 1], o.polygon)] = 45
    img[valid] = shade
    return img


def compare_masks(
    frame_id: str, pred: PathMask, gt: PathMask, cam: CameraModel, fit_range: float
) -> evalkit.FrameMetrics:
    """Evaluate one prediction, recording NaN where a metric is undefined.

    Right before a sharp turn the whole remaining path can leave a forward
    camera's view, leaving nothing to compare; such frames get NaN rows and
    drop out of the NaN-skipping aggregates.
    """

    def guarded(fn):
        try:
            return fn()
        except (UndefinedMetric, EmptyPrediction, InsufficientPoints):
            return math.nan

    return evalkit.FrameMetrics(
        frame_id=frame_id,
        iou=guarded(lambda: evalkit.iou(pred, gt)),
        cover_rate=guarded(lambda: evalkit.cover_rate(pred, gt)),
        delta_yaw_deg=guarded(lambda: evalkit.delta_yaw(pred, gt, cam, fit_range)),
        patch_l1=evalkit.patch_l1(pred, gt),
    )


@dataclass(frozen=True)
class FrameResult:
    index: int
    pose: Pose2D
    timestamp: float
    instruction: InstructionView
    pred_mask: PathMask
    gt_mask: PathMask
    grid: CostGrid
    metrics: evalkit.FrameMetrics
    nll_5: evalkit.NllReport
    nll_10: evalkit.NllReport


@dataclass
class FramePipeline:
    """Per-scenario state: map artifacts, alignment, and frame evaluation."""

    world: World
    branch: str
    n_frames: int
    cfg: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        cfg = self.cfg
        self.route_world = self.world.route_polyline(self.branch)
        self.map_raster, self.map_frame, self.route_px = build_route_map(
            self.world, self.branch, cfg
        )
        self.route_points = discretize_route(self.route_px, cfg.route_spacing_m)
        total = polyline_arc_length(self.route_world)
        usable = max(total - cfg.frame_tail_m, cfg.frame_dt)
        arcs = np.linspace(0.0, usable, self.n_frames)
        self.frame_arcs = arcs
        self.frame_poses = [pose_at_arc(self.route_world, s) for s in arcs]
        traj = TrajectorySeq(
            self.map_frame.world_to_map(np.array([[p.x, p.y] for p in self.frame_poses]))
        )
        self.warp = dtw_align(traj, self.route_points)
        self.matched = self.warp.matched_route_indices()
        self.ego_cells = ego_prior_cells(cfg)

    def frame_record(self, k: int) -> FrameRecord:
        pose = self.frame_poses[k]
        t = k * self.cfg.frame_dt
        scan = simulate_laser(self.world.at_time(t), pose, self.cfg.scan)
        return FrameRecord(
            image_id=f"{k:06d}",
            pose=pose,
            camera_image_dims=(self.cfg.camera.image_width, self.cfg.camera.image_height),
            scan=scan,
            timestamp=t,
        )

    def instruction_for(self, k: int, offset_px: float = 0.0) -> InstructionView:
        j = int(self.matched[k])
        return crop_instruction(
            self.map_raster,
            self.route_points,
            j,
            heading=float(self.route_points.headings[j]),
            window_size_m=self.cfg.window_size_m,
            out_px=self.cfg.out_px,
            offset_px=offset_px,
        )

    def future_demo(self, k: int, horizon: float) -> list[Pose2D]:
        """Demonstration continuation from frame k, in that frame's robot frame."""
        cfg = self.cfg
        s0 = float(self.frame_arcs[k])
        total = polyline_arc_length(self.route_world)
        arcs = np.arange(s0, min(total, s0 + horizon + cfg.demo_spacing_m),
                         cfg.demo_spacing_m)
        base = self.frame_poses[k]
        out = []
        for s in arcs:
            p = pose_at_arc(self.route_world, float(s))
            local = to_pose_frame(np.array([[p.x, p.y]]), base)[0]
            out.append(Pose2D(local[0], local[1], normalize_angle(p.yaw - base.yaw)))
        return out

    def run_frame(self, k: int, offset_level: str | None = None,
                  offset_seed: int = 0) -> FrameResult:
        cfg = self.cfg
        t = k * cfg.frame_dt
        world_t = self.world.at_time(t)
        pose = self.frame_poses[k]
        offset_px = (
            inject_offset(offset_level, cfg.out_px, offset_seed * 100003 + k)
            if offset_level
            else 0.0
        )
        instruction = self.instruction_for(k, offset_px)
        pred = oracle_generate(
            world_t, pose, instruction, cfg.camera,
            cfg.path_horizon_m, cfg.footprint_width_m,
        )
        gt = gt_path_mask(
            world_t, pose, self.branch, cfg.camera,
            cfg.path_horizon_m, cfg.footprint_width_m,
        )
        metrics = compare_masks(f"{k:06d}", pred, gt, cfg.camera, cfg.fit_range_m)
        scan = simulate_laser(world_t, pose, cfg.scan)
        path_cells = mask_to_cells(pred, cfg.camera, cfg.grid).cells | self.ego_cells
        obstacle_cells = laser_to_cells(scan, cfg.kernels, cfg.grid).cells
        grid = fuse(path_cells, obstacle_cells, cfg.kernels, cfg.grid)
        demo = self.future_demo(k, 10.0)
        nll_5 = evalkit.trajectory_nll(grid, demo, 5.0)
        nll_10 = evalkit.trajectory_nll(grid, demo, 10.0)
        return FrameResult(
            index=k, pose=pose, timestamp=t, instruction=instruction,
            pred_mask=pred, gt_mask=gt, grid=grid, metrics=metrics,
            nll_5=nll_5, nll_10=nll_10,
        )


@dataclass
class ScenarioResult:
    kind: str
    seed: int
    branch: str
    metrics: evalkit.MetricReport
    nll_5: list[evalkit.NllReport]
    nll_10: list[evalkit.NllReport]

    def mean_probability(self, horizon: float) -> float:
        reports = self.nll_5 if horizon == 5.0 else self.nll_10
        return float(np.mean([r.probability for r in reports]))

    def mean_nll(self, horizon: float) -> float:
        reports = self.nll_5 if horizon == 5.0 else self.nll_10
        return float(np.mean([r.nll for r in reports]))


def run_scenario(
    kind: str,
    seed: int,
    n_frames: int = 50,
    branch: str | None = None,
    offset_level: str | None = None,
    cfg: PipelineConfig | None = None,
) -> ScenarioResult:
    """Build a world, drive the demonstration route, evaluate every frame."""
    cfg = cfg or PipelineConfig()
    branch = branch or default_branch(kind, seed)
    world = build_scenario(kind, seed)
    pipe = FramePipeline(world, branch, n_frames, cfg)
    rows = []
    nll_5 = []
    nll_10 = []
    for k in range(n_frames):
        result = pipe.run_frame(k, offset_level=offset_level, offset_seed=seed)
        rows.append(result.metrics)
        nll_5.append(result.nll_5)
        nll_10.append(result.nll_10)
    return ScenarioResult(
        kind=kind, seed=seed, branch=branch,
        metrics=evalkit.MetricReport(rows), nll_5=nll_5, nll_10=nll_10,
    )


@dataclass
class BenchmarkResult:
    scenarios: list[ScenarioResult]

    def aggregate(self) -> dict[str, float]:
        rows = [r for s in self.scenarios for r in s.metrics.rows]
        agg = evalkit.MetricReport(rows).aggregate()
        agg["probability_5m"] = float(
            np.mean([r.probability for s in self.scenarios for r in s.nll_5])
        )
        agg["probability_10m"] = float(
            np.mean([r.probability for s in self.scenarios for r in s.nll_10])
        )
        agg["nll_5m"] = float(np.mean([r.nll for s in self.scenarios for r in s.nll_5]))
        agg["nll_10m"] = float(np.mean([r.nll for s in self.scenarios for r in s.nll_10]))
        return agg


def run_benchmark(
    kinds: tuple[str, ...] = ("straight", "t_junction", "crossroad"),
    seeds: range = range(10),
    n_frames: int = 50,
    offset_level: str | None = None,
    cfg: PipelineConfig | None = None,
) -> BenchmarkResult:
    """The synthetic benchmark: every kind x seed scenario, aggregated."""
    cfg = cfg or PipelineConfig()
    scenarios = [
        run_scenario(kind, seed, n_frames, offset_level=offset_level, cfg=cfg)
        for kind in kinds
        for seed in seeds
    ]
    return BenchmarkResult(scenarios)
