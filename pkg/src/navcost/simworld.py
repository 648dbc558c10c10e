"""Deterministic synthetic road worlds: layouts, scans, ground-truth masks.

World frame: x east, y north, junction center at the origin. The robot always
enters from the west arm driving east, so a drivable route for branch `b` is
west-arm outer end -> center -> outer end of `b`. Branch ids are the compass
arms ("east", "north", "west", "south").
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .costmap import LaserScan
from .errors import IoError, OffRoad, UnknownBranch
from .geometry import (
    CameraModel,
    Pose2D,
    footprint_to_mask,
    ground_coordinate_grid,
    normalize_angle,
    points_in_polygon,
    points_near_polygon,
    to_pose_frame,
)
from .mask import UNKNOWN, PathMask

ARM_HEADINGS = {"east": 0.0, "north": math.pi / 2, "west": math.pi, "south": -math.pi / 2}
KIND_ARMS = {
    "straight": ("west", "east"),
    "t_junction": ("west", "north", "south"),
    "crossroad": ("west", "east", "north", "south"),
}
APPROACH = "west"

DEFAULT_ROAD_WIDTH = 6.0
DEFAULT_ARM_LENGTH = 30.0
DEFAULT_VEHICLE_WIDTH = 1.6
DEFAULT_PATH_HORIZON = 15.0
DEFAULT_OBSTACLE_CLEARANCE = 1.0


@dataclass(frozen=True)
class Obstacle:
    """Prism obstacle: footprint polygon (meters), height, velocity (m/s)."""

    polygon: np.ndarray = field(repr=False)
    height: float = 1.0
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        poly = np.atleast_2d(np.asarray(self.polygon, dtype=float))
        if self.height <= 0:
            raise ValueError("obstacle height must be positive")
        object.__setattr__(self, "polygon", poly)

    def at_time(self, t: float) -> "Obstacle":
        if t == 0.0 or self.velocity == (0.0, 0.0):
            return self
        shift = np.array(self.velocity) * t
        return replace(self, polygon=self.polygon + shift)


@dataclass(frozen=True)
class Branch:
    """One junction arm: polyline from the center outward, heading along it."""

    branch_id: str
    heading: float
    polyline: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "polyline", np.atleast_2d(np.asarray(self.polyline, float)))


@dataclass(frozen=True)
class ScanSpec:
    """Planar scanner: beams are horizontal at mount_height, so obstacles
    shorter than the mount height are transparent."""

    num_beams: int = 180
    fov: float = 2.0 * math.pi
    max_range: float = 30.0
    mount_height: float = 0.8

    def __post_init__(self):
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if not (0 < self.fov <= 2.0 * math.pi):
            raise ValueError("fov must lie in (0, 2*pi]")


@dataclass(frozen=True)
class World:
    kind: str
    seed: int
    road_width: float
    arm_length: float
    branches: tuple[Branch, ...]
    traversable_polygons: tuple[np.ndarray, ...]
    obstacles: tuple[Obstacle, ...]

    def branch(self, branch_id: str) -> Branch:
        for b in self.branches:
            if b.branch_id == branch_id:
                return b
        raise UnknownBranch(f"world has no branch {branch_id!r}")

    def route_ids(self) -> tuple[str, ...]:
        """Branch ids with a drivable route (every arm but the approach)."""
        return tuple(b.branch_id for b in self.branches if b.branch_id != APPROACH)

    def route_polyline(self, branch_id: str) -> np.ndarray:
        """Centerline of the route exiting through `branch_id`."""
        if branch_id == APPROACH:
            raise UnknownBranch(f"{APPROACH!r} is the approach arm, not a drivable route")
        exit_arm = self.branch(branch_id)
        approach = self.branch(APPROACH)
        return np.vstack([approach.polyline[-1], approach.polyline[0], exit_arm.polyline[1:]])

    def at_time(self, t: float) -> "World":
        if t == 0.0:
            return self
        return replace(self, obstacles=tuple(o.at_time(t) for o in self.obstacles))

    def on_road(self, x: float, y: float) -> bool:
        px = np.array([x])
        py = np.array([y])
        return any(bool(points_in_polygon(px, py, poly)[0]) for poly in self.traversable_polygons)

    def mirrored(self) -> "World":
        """Reflect the world across the road axis (y -> -y); north/south swap."""
        swap = {"north": "south", "south": "north"}
        branches = tuple(
            Branch(
                branch_id=swap.get(b.branch_id, b.branch_id),
                heading=normalize_angle(-b.heading),
                polyline=b.polyline * np.array([1.0, -1.0]),
            )
            for b in self.branches
        )
        polys = tuple(p * np.array([1.0, -1.0]) for p in self.traversable_polygons)
        obstacles = tuple(
            replace(o, polygon=o.polygon * np.array([1.0, -1.0]),
                    velocity=(o.velocity[0], -o.velocity[1]))
            for o in self.obstacles
        )
        return replace(self, branches=branches, traversable_polygons=polys,
                       obstacles=obstacles)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "road_width": self.road_width,
            "arm_length": self.arm_length,
            "branches": [
                {"id": b.branch_id, "heading": b.heading, "polyline": b.polyline.tolist()}
                for b in self.branches
            ],
            "traversable_polygons": [p.tolist() for p in self.traversable_polygons],
            "obstacles": [
                {"polygon": o.polygon.tolist(), "height": o.height,
                 "velocity": list(o.velocity)}
                for o in self.obstacles
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "World":
        return cls(
            kind=data["kind"],
            seed=int(data["seed"]),
            road_width=float(data["road_width"]),
            arm_length=float(data["arm_length"]),
            branches=tuple(
                Branch(b["id"], float(b["heading"]), np.asarray(b["polyline"], float))
                for b in data["branches"]
            ),
            traversable_polygons=tuple(
                np.asarray(p, float) for p in data["traversable_polygons"]
            ),
            obstacles=tuple(
                Obstacle(np.asarray(o["polygon"], float), float(o["height"]),
                         tuple(o["velocity"]))
                for o in data["obstacles"]
            ),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "World":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_json(json.load(f))
        except OSError as e:
            raise IoError(f"cannot read world file {path}: {e}") from e

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)
            f.write("\n")


def build_scenario(
    kind: str,
    seed: int,
    road_width: float = DEFAULT_ROAD_WIDTH,
    arm_length: float = DEFAULT_ARM_LENGTH,
) -> World:
    """Deterministic world for (kind, seed): roads, branches, a few obstacles.

    Obstacles are boxes placed beside the roads (at least ~4 m from every arm
    centerline, at least 8 m from the junction) so routes stay drivable; one
    obstacle drifts slowly outward along its arm to exercise dynamic scenes.
    """
    if kind not in KIND_ARMS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected {sorted(KIND_ARMS)}")
    half = road_width / 2.0
    branches = []
    polys = []
    for arm in KIND_ARMS[kind]:
        h = ARM_HEADINGS[arm]
        d = np.array([math.cos(h), math.sin(h)])
        n = np.array([-d[1], d[0]])
        outer = d * arm_length
        branches.append(Branch(arm, h, np.array([[0.0, 0.0], outer])))
        # Road rectangle overhangs the arm end by 1 m so swept footprints stay inside.
        far = d * (arm_length + 1.0)
        polys.append(np.array([n * half, far + n * half, far - n * half, -half * n]))

    rng = np.random.default_rng(seed)
    arms = KIND_ARMS[kind]
    n_obs = int(rng.integers(2, 5))
    obstacles = []
    for i in range(n_obs):
        arm = arms[int(rng.integers(0, len(arms)))]
        h = ARM_HEADINGS[arm]
        d = np.array([math.cos(h), math.sin(h)])
        n = np.array([-d[1], d[0]])
        along = rng.uniform(8.0, arm_length - 4.0)
        lateral = rng.uniform(half + 1.2, half + 3.0) * (1 if rng.random() < 0.5 else -1)
        size_l = rng.uniform(0.8, 2.0)
        size_w = rng.uniform(0.8, 2.0)
        height = rng.uniform(0.5, 2.5)
        center = d * along + n * lateral
        corners = np.array(
            [
                center + d * size_l / 2 + n * size_w / 2,
                center + d * size_l / 2 - n * size_w / 2,
                center - d * size_l / 2 - n * size_w / 2,
                center - d * size_l / 2 + n * size_w / 2,
            ]
        )
        velocity = tuple(0.2 * d) if i == 0 else (0.0, 0.0)
        obstacles.append(Obstacle(corners, height, velocity))

    return World(
        kind=kind,
        seed=seed,
        road_width=road_width,
        arm_length=arm_length,
        branches=tuple(branches),
        traversable_polygons=tuple(polys),
        obstacles=tuple(obstacles),
    )


def polyline_arc_length(polyline: np.ndarray) -> float:
    return float(np.hypot(*np.diff(np.atleast_2d(polyline), axis=0).T).sum())


def pose_at_arc(polyline: np.ndarray, s: float) -> Pose2D:
    """Pose at arc position s along a polyline, heading tangent (outgoing at
    vertices)."""
    pts = np.atleast_2d(np.asarray(polyline, float))
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = min(max(s, 0.0), cum[-1])
    e = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lens) - 1)
    t = (s - cum[e]) / lens[e] if lens[e] > 0 else 0.0
    p = pts[e] + t * seg[e]
    return Pose2D(float(p[0]), float(p[1]), math.atan2(seg[e, 1], seg[e, 0]))


def project_to_polyline(polyline: np.ndarray, point: np.ndarray) -> tuple[float, float]:
    """(arc position, lateral distance) of the closest point on the polyline."""
    pts = np.atleast_2d(np.asarray(polyline, float))
    q = np.asarray(point, float)
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    best = (math.inf, 0.0)
    for e in range(len(seg)):
        if lens[e] == 0:
            continue
        t = float(np.clip(np.dot(q - pts[e], seg[e]) / (lens[e] ** 2), 0.0, 1.0))
        closest = pts[e] + t * seg[e]
        d = float(np.hypot(*(q - closest)))
        if d < best[0]:
            best = (d, float(cum[e] + t * lens[e]))
    return best[1], best[0]


def demo_trajectory(world: World, branch: str, spacing_m: float) -> list[Pose2D]:
    """Poses along the branch route centerline at fixed arc spacing, with
    tangent headings."""
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    route = world.route_polyline(branch)
    total = polyline_arc_length(route)
    n = int(math.floor(total / spacing_m + 1e-9))
    return [pose_at_arc(route, k * spacing_m) for k in range(n + 1)]


def simulate_laser(world: World, pose: Pose2D, spec: ScanSpec) -> LaserScan:
    """Ray-cast horizontal beams against obstacle footprints.

    Each beam reports the nearest boundary intersection within max_range as a
    robot-frame point with z = mount_height; misses are omitted.
    """
    tall = [o for o in world.obstacles if o.height >= spec.mount_height]
    if not tall:
        return LaserScan(np.empty((0, 3)))
    edges_a = []
    edges_b = []
    for o in tall:
        poly = o.polygon
        for i in range(len(poly)):
            edges_a.append(poly[i])
            edges_b.append(poly[(i + 1) % len(poly)])
    a = np.array(edges_a)
    b = np.array(edges_b)
    ab = b - a

    if spec.fov >= 2.0 * math.pi - 1e-12:
        bearings = pose.yaw + np.linspace(-math.pi, math.pi, spec.num_beams, endpoint=False)
    elif spec.num_beams == 1:
        bearings = np.array([pose.yaw])
    else:
        bearings = pose.yaw + np.linspace(-spec.fov / 2, spec.fov / 2, spec.num_beams)

    origin = np.array([pose.x, pose.y])
    ao = a - origin
    cross_ao_ab = ao[:, 0] * ab[:, 1] - ao[:, 1] * ab[:, 0]
    d = np.column_stack([np.cos(bearings), np.sin(bearings)])  # (B, 2)
    denom = d[:, 0:1] * ab[None, :, 1] - d[:, 1:2] * ab[None, :, 0]  # (B, E)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_ao_ab[None, :] / denom
        s = (ao[None, :, 0] * d[:, 1:2] - ao[None, :, 1] * d[:, 0:1]) / denom
    ok = (denom != 0) & (t > 1e-9) & (t <= spec.max_range) & (s >= 0.0) & (s <= 1.0)
    t = np.where(ok, t, np.inf)
    t_min = t.min(axis=1)
    hit = np.isfinite(t_min)
    if not hit.any():
        return LaserScan(np.empty((0, 3)))
    pts = origin + t_min[hit, None] * d[hit]
    local = to_pose_frame(pts, pose)
    return LaserScan(np.column_stack([local, np.full(len(local), spec.mount_height)]))


def route_ahead(
    world: World,
    pose: Pose2D,
    branch: str | None,
    horizon_m: float,
) -> np.ndarray:
    """Robot-frame centerline from the pose's route projection, `horizon_m` ahead.

    branch=None follows the approach arm only (up to the junction center).
    Raises OffRoad when the pose sits more than half a road width off the
    route, or when no road remains ahead.
    """
    if branch is None:
        approach = world.branch(APPROACH)
        route = np.vstack([approach.polyline[-1], approach.polyline[0]])
    else:
        route = world.route_polyline(branch)
    s0, lateral = project_to_polyline(route, np.array([pose.x, pose.y]))
    if lateral > world.road_width / 2.0:
        raise OffRoad(f"pose ({pose.x:.2f}, {pose.y:.2f}) is {lateral:.2f} m off the route")
    total = polyline_arc_length(route)
    if s0 >= total - 1e-9:
        raise OffRoad("no road ahead of the pose on this route")
    s_end = min(total, s0 + horizon_m)
    seg = np.diff(route, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    pts = [pose_at_arc(route, s0).xy]
    for v, c in zip(route[1:], cum[1:]):
        if s0 < c < s_end:
            pts.append(v)
    pts.append(pose_at_arc(route, s_end).xy)
    return to_pose_frame(np.array(pts), pose)


def remove_mask_near_obstacles(
    mask: PathMask,
    cam: CameraModel,
    pose: Pose2D,
    world: World,
    clearance: float = DEFAULT_OBSTACLE_CLEARANCE,
) -> PathMask:
    """Clear traversable pixels whose ground point lies within `clearance` of
    an obstacle footprint (world frame); cleared pixels become unknown."""
    if not world.obstacles:
        return mask
    gx, gy, _ = ground_coordinate_grid(cam)
    trav = mask.traversable
    px = gx[trav]
    py = gy[trav]
    blocked = np.zeros(len(px), dtype=bool)
    for o in world.obstacles:
        local = to_pose_frame(o.polygon, pose)
        lo = local.min(axis=0) - clearance
        hi = local.max(axis=0) + clearance
        box = (px >= lo[0]) & (px <= hi[0]) & (py >= lo[1]) & (py <= hi[1])
        if not box.any():
            continue
        idx = np.nonzero(box)[0]
        blocked[idx[points_near_polygon(px[idx], py[idx], local, clearance)]] = True
    if not blocked.any():
        return mask
    classes = mask.classes.copy()
    vs, us = np.nonzero(trav)
    classes[vs[blocked], us[blocked]] = UNKNOWN
    return PathMask(classes)


def gt_path_mask(
    world: World,
    pose: Pose2D,
    branch: str,
    cam: CameraModel,
    horizon_m: float = DEFAULT_PATH_HORIZON,
    width_m: float = DEFAULT_VEHICLE_WIDTH,
    clearance_m: float = DEFAULT_OBSTACLE_CLEARANCE,
) -> PathMask:
    """Ground-truth path mask: the branch-route centerline ahead of the pose,
    swept to vehicle width, with obstacle-occluded area removed."""
    centerline = route_ahead(world, pose, branch, horizon_m)
    mask = footprint_to_mask(centerline, width_m, cam)
    return remove_mask_near_obstacles(mask, cam, pose, world, clearance_m)
