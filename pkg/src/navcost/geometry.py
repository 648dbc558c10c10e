"""Camera model, flat-ground projection, trajectory footprints, heading fits.

Coordinate conventions used throughout the package:

Robot frame (right-handed):  x forward, y left, z up; ground plane z = 0.
Camera frame (computer vision): x right in image, y down, z along optical axis.
Image frame: u = column (right), v = row (down); pixel centers at integer
coordinates, (0, 0) is the top-left pixel center.

A camera with zero pitch/yaw/roll looks along robot +x. Pitch is positive
downward, yaw_offset positive CCW (toward robot +y), roll about the optical
axis; extrinsic rotation applied roll, then pitch, then yaw.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BehindCamera,
    EmptyTrajectory,
    HorizonError,
    InsufficientPoints,
    OutOfImage,
)
from .mask import TRAVERSABLE, UNKNOWN, PathMask

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(angle, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Pose2D:
    """Planar pose (x, y, yaw); yaw in radians CCW from +x, stored in (-pi, pi]."""

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def to_pose_frame(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    """Express world-frame (N, 2) points in the local frame of `pose`."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dx = p[:, 0] - pose.x
    dy = p[:, 1] - pose.y
    return np.column_stack([c * dx + s * dy, -s * dx + c * dy])


def from_pose_frame(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    """Express pose-local (N, 2) points in the world frame."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return np.column_stack(
        [pose.x + c * p[:, 0] - s * p[:, 1], pose.y + s * p[:, 0] + c * p[:, 1]]
    )


@dataclass(frozen=True)
class PixelCoord:
    """Image coordinate; u = column, v = row. May lie outside image bounds."""

    u: float
    v: float


@dataclass(frozen=True)
class GroundPoint:
    """Point on the z = 0 ground plane, robot frame (x forward, y left)."""

    x: float
    y: float


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus planar mounting extrinsics.

    Lengths in meters, angles in radians. mount_height is the optical center
    height above the ground plane; forward/lateral offsets locate it in the
    robot frame.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int = 648
    image_height: int = 314
    mount_height: float = 1.5
    pitch: float = 0.0
    yaw_offset: float = 0.0
    roll: float = 0.0
    forward_offset: float = 0.0
    lateral_offset: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.mount_height <= 0:
            raise ValueError("mount_height must be positive")
        if not (0 <= self.cx < self.image_width):
            raise ValueError("cx must lie within [0, image_width)")
        if not (0 <= self.cy < self.image_height):
            raise ValueError("cy must lie within [0, image_height)")

    @property
    def position(self) -> np.ndarray:
        """Optical center in the robot frame."""
        return np.array([self.forward_offset, self.lateral_offset, self.mount_height])

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "CameraModel":
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CameraModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, for dataset manifests."""
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


#: Principal point at the exact grid center keeps mirrored scenes bit-mirrored.
DEFAULT_CAMERA = CameraModel(fx=500.0, fy=500.0, cx=323.5, cy=156.5, pitch=0.3)

# Columns are the camera x/y/z axes expressed in the robot frame.
_BASE_CAM_TO_ROBOT = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@lru_cache(maxsize=64)
def camera_rotation(cam: CameraModel) -> np.ndarray:
    """Rotation taking camera-frame vectors to the robot frame."""
    r = _rot_z(cam.yaw_offset) @ _rot_y(cam.pitch) @ _rot_x(cam.roll) @ _BASE_CAM_TO_ROBOT
    r.flags.writeable = False
    return r


def pixel_to_ground(p: PixelCoord | tuple[float, float], cam: CameraModel) -> GroundPoint:
    """Intersect a pixel's viewing ray with the ground plane (robot frame).

    Raises OutOfImage for pixels outside bounds and HorizonError when the
    back-projected ray does not point below the horizon.
    """
    u, v = (p.u, p.v) if isinstance(p, PixelCoord) else (float(p[0]), float(p[1]))
    if not (0 <= u < cam.image_width and 0 <= v < cam.image_height):
        raise OutOfImage(f"pixel ({u}, {v}) outside {cam.image_width}x{cam.image_height}")
    d_cam = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    d_rob = camera_rotation(cam) @ d_cam
    if d_rob[2] >= 0.0:
        raise HorizonError(f"ray for pixel ({u}, {v}) does not intersect the ground ahead")
    t = -cam.mount_height / d_rob[2]
    g = cam.position + t * d_rob
    return GroundPoint(float(g[0]), float(g[1]))


def ground_to_pixel(g: GroundPoint | tuple[float, float], cam: CameraModel) -> PixelCoord:
    """Project a ground-plane point into the image.

    The result may lie outside image bounds (caller clips). Raises
    BehindCamera when the point has non-positive depth.
    """
    gx, gy = (g.x, g.y) if isinstance(g, GroundPoint) else (float(g[0]), float(g[1]))
    q = project_points_to_pixels(np.array([[gx, gy, 0.0]]), cam)
    if q is None or not np.isfinite(q[0]).all():
        raise BehindCamera(f"ground point ({gx}, {gy}) is behind the camera")
    return PixelCoord(float(q[0, 0]), float(q[0, 1]))


def project_points_to_pixels(points_xyz: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Project robot-frame 3-D points; rows with depth <= 0 come back as NaN."""
    pts = np.atleast_2d(np.asarray(points_xyz, dtype=float))
    rel = pts - cam.position
    q = rel @ camera_rotation(cam)  # == R.T @ rel, row-wise
    out = np.full((len(pts), 2), np.nan)
    front = q[:, 2] > 0.0
    out[front, 0] = cam.fx * q[front, 0] / q[front, 2] + cam.cx
    out[front, 1] = cam.fy * q[front, 1] / q[front, 2] + cam.cy
    return out


@lru_cache(maxsize=8)
def ground_coordinate_grid(cam: CameraModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel ground intersection for the whole image.

    Returns (X, Y, valid): robot-frame coordinates of each pixel-center ray's
    ground intersection and a boolean mask of pixels below the horizon.
    Arrays are cached per camera and read-only.
    """
    us = np.arange(cam.image_width, dtype=float)
    vs = np.arange(cam.image_height, dtype=float)
    xc = (us[None, :] - cam.cx) / cam.fx
    yc = (vs[:, None] - cam.cy) / cam.fy
    r = camera_rotation(cam)
    dx = r[0, 0] * xc + r[0, 1] * yc + r[0, 2]
    dy = r[1, 0] * xc + r[1, 1] * yc + r[1, 2]
    dz = r[2, 0] * xc + r[2, 1] * yc + r[2, 2]
    valid = dz < 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = -cam.mount_height / dz
        gx = cam.forward_offset + t * dx
        gy = cam.lateral_offset + t * dy
    valid &= np.isfinite(gx) & np.isfinite(gy)
    gx = np.where(valid, gx, np.nan)
    gy = np.where(valid, gy, np.nan)
    for a in (gx, gy, valid):
        a.flags.writeable = False
    return gx, gy, valid


def points_to_polyline_d2(px: np.ndarray, py: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Squared distance from points (any shape) to a polyline (M, 2).

    Consecutive duplicate vertices are ignored; a single vertex degenerates
    to point distance. NaN points yield NaN distances.
    """
    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    if len(verts) > 1:
        keep = np.ones(len(verts), dtype=bool)
        keep[1:] = np.einsum("ij,ij->i", np.diff(verts, axis=0), np.diff(verts, axis=0)) > 1e-24
        verts = verts[keep]
    if len(verts) == 1:
        return (px - verts[0, 0]) ** 2 + (py - verts[0, 1]) ** 2
    best = np.full(np.shape(px), np.inf)
    for a, b in zip(verts[:-1], verts[1:]):
        ab = b - a
        denom = ab[0] * ab[0] + ab[1] * ab[1]
        t = ((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom
        t = np.clip(t, 0.0, 1.0)
        dx = px - (a[0] + t * ab[0])
        dy = py - (a[1] + t * ab[1])
        best = np.minimum(best, dx * dx + dy * dy)
    return best


def points_in_polygon(px: np.ndarray, py: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test, vectorized over points."""
    poly = np.asarray(polygon, dtype=float)
    inside = np.zeros(np.shape(px), dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = ((y1 > py) != (y2 > py)) & (px < (x2 - x1) * (py - y1) / (y2 - y1) + x1)
        inside ^= crosses
    return inside


def points_near_polygon(
    px: np.ndarray, py: np.ndarray, polygon: np.ndarray, clearance: float
) -> np.ndarray:
    """True where a point is inside the polygon or within `clearance` of its boundary."""
    poly = np.asarray(polygon, dtype=float)
    ring = np.vstack([poly, poly[:1]])
    d2 = points_to_polyline_d2(px, py, ring)
    with np.errstate(invalid="ignore"):
        near = d2 <= clearance * clearance
    return near | points_in_polygon(px, py, poly)


def footprint_to_mask(
    traj: Sequence[Pose2D] | np.ndarray, width: float, cam: CameraModel
) -> PathMask:
    """Rasterize the swept vehicle strip along a robot-frame trajectory.

    Pixels whose ground intersection lies within width/2 of the trajectory
    centerline become traversable; everything else stays unknown. Pixel-center
    sampling, no anti-aliasing, so output is deterministic.
    """
    pts = _trajectory_points(traj)
    if len(pts) == 0:
        raise EmptyTrajectory("trajectory has no poses")
    if width <= 0:
        raise ValueError("footprint width must be positive")
    gx, gy, valid = ground_coordinate_grid(cam)
    half = 0.5 * width
    # Only pixels whose ground point falls in the strip's bounding box can hit it.
    lo = pts.min(axis=0) - half
    hi = pts.max(axis=0) + half
    with np.errstate(invalid="ignore"):
        cand = valid & (gx >= lo[0]) & (gx <= hi[0]) & (gy >= lo[1]) & (gy <= hi[1])
    classes = np.full((cam.image_height, cam.image_width), UNKNOWN, dtype=np.uint8)
    if cand.any():
        rows, cols = np.nonzero(cand)
        d2 = points_to_polyline_d2(gx[rows, cols], gy[rows, cols], pts)
        hit = d2 <= half * half
        classes[rows[hit], cols[hit]] = TRAVERSABLE
    return PathMask(classes)


def _trajectory_points(traj: Sequence[Pose2D] | np.ndarray) -> np.ndarray:
    if isinstance(traj, np.ndarray):
        return np.atleast_2d(traj)[:, :2].astype(float) if traj.size else np.empty((0, 2))
    rows = []
    for p in traj:
        if isinstance(p, Pose2D):
            rows.append((p.x, p.y))
        else:
            rows.append((float(p[0]), float(p[1])))
    return np.array(rows, dtype=float) if rows else np.empty((0, 2))


def polyline_yaw(
    points: Iterable[GroundPoint] | np.ndarray, fit_range: float = 10.0
) -> float:
    """Heading of the total-least-squares line through points near the origin.

    Only points within `fit_range` of the origin enter the fit; the returned
    angle is signed toward increasing x, so it lies in [-pi/2, pi/2].
    """
    if isinstance(points, np.ndarray):
        pts = np.atleast_2d(points)[:, :2].astype(float)
    else:
        pts = np.array([(p.x, p.y) if isinstance(p, GroundPoint) else tuple(p[:2]) for p in points],
                       dtype=float)
        pts = pts.reshape(-1, 2)
    if len(pts):
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= fit_range]
    if len(pts) < 2:
        raise InsufficientPoints(f"need >= 2 points within {fit_range} m, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    w, vecs = np.linalg.eigh(cov)
    if w[-1] <= 1e-24:
        raise InsufficientPoints("points are coincident; direction undefined")
    v = vecs[:, -1]
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return math.atan2(v[1], v[0])
