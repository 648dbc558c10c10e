"""Weakly-supervised label generation and dataset export.

Labels are composed without human annotation: driven trajectory footprints
become traversable, height-gated laser points projected into the image become
obstacle, everything else stays unknown.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import pgm
from .costmap import LaserScan
from .errors import DimensionMismatch, InvalidRate, IoError
from .geometry import CameraModel, Pose2D, footprint_to_mask, project_points_to_pixels
from .mask import OBSTACLE, PathMask

DEFAULT_LABEL_HORIZON_M = 30.0
DEFAULT_OBSTACLE_DILATE_PX = 2
DEFAULT_MAX_RATE = 0.15


@dataclass(frozen=True)
class FrameRecord:
    """One recorded observation: pose, laser scan, timestamp, image identity."""

    image_id: str
    pose: Pose2D
    camera_image_dims: tuple[int, int]  # (width, height)
    scan: LaserScan
    timestamp: float


def validate_frame_sequence(frames: Sequence[FrameRecord]) -> None:
    """Timestamps must be strictly increasing within a sequence."""
    for a, b in zip(frames, frames[1:]):
        if b.timestamp <= a.timestamp:
            raise ValueError(
                f"timestamps not strictly increasing: {a.image_id}={a.timestamp} "
                f">= {b.image_id}={b.timestamp}"
            )


@dataclass(frozen=True)
class CropSpec:
    """Horizontal crop-augmentation parameters.

    Offsets are signed pixel shifts of the crop window center; None means
    "draw from the RNG at apply time". |offset| never exceeds
    max_rate * width.
    """

    max_rate: float = DEFAULT_MAX_RATE
    image_offset_px: int | None = None
    instruction_offset_px: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.max_rate <= 0.25):
            raise InvalidRate(f"max_rate {self.max_rate} outside [0, 0.25]")

    def check_offset(self, offset: int, width: int) -> int:
        if abs(offset) > self.max_rate * width:
            raise InvalidRate(
                f"offset {offset} exceeds max_rate*width = {self.max_rate * width:.1f}"
            )
        return offset


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def label_frame(
    frame: FrameRecord,
    future_traj: Sequence[Pose2D],
    cam: CameraModel,
    scan: LaserScan,
    width_m: float,
    height_range: tuple[float, float] = (0.3, 2.0),
    dilate_px: int = DEFAULT_OBSTACLE_DILATE_PX,
) -> PathMask:
    """Compose the weak label for one frame.

    future_traj is the upcoming drive expressed in the frame's robot frame;
    its swept footprint is traversable. Laser points inside the closed height
    gate project to obstacle pixels (dilated so thin scans are visible);
    obstacle wins over traversable on conflict.
    """
    if frame.camera_image_dims != (cam.image_width, cam.image_height):
        raise DimensionMismatch(
            f"frame dims {frame.camera_image_dims} != camera "
            f"({cam.image_width}, {cam.image_height})"
        )
    mask = footprint_to_mask(future_traj, width_m, cam)
    classes = mask.classes.copy()

    pts = scan.points
    if len(pts):
        gate = (pts[:, 2] >= height_range[0]) & (pts[:, 2] <= height_range[1])
        uv = project_points_to_pixels(pts[gate], cam)
        ok = np.isfinite(uv).all(axis=1)
        u = np.rint(uv[ok, 0]).astype(int)
        v = np.rint(uv[ok, 1]).astype(int)
        inside = (u >= 0) & (u < cam.image_width) & (v >= 0) & (v < cam.image_height)
        if inside.any():
            hit = np.zeros(classes.shape, dtype=bool)
            hit[v[inside], u[inside]] = True
            if dilate_px > 0:
                hit = ndimage.binary_dilation(hit, structure=_disk(dilate_px))
            classes[hit] = OBSTACLE
    return PathMask(classes)


def _crop_margin(width: int, max_rate: float) -> int:
    return int(np.floor(max_rate * width))


def draw_crop_offset(width: int, max_rate: float, rng: np.random.Generator) -> int:
    """Signed integer offset for a (1 - max_rate)-wide crop window."""
    margin = _crop_margin(width, max_rate)
    if margin == 0:
        return 0
    return int(rng.integers(0, margin + 1)) - margin // 2


def crop_and_rescale(
    array: np.ndarray, offset_px: int, max_rate: float, interpolation: str = "bilinear"
) -> np.ndarray:
    """Horizontally crop a (1 - max_rate)-wide window shifted by offset_px and
    rescale back to the original width.

    interpolation "bilinear" for images, "nearest" for class masks (codes
    preserved). Height is untouched.
    """
    if not (0.0 <= max_rate <= 0.25):
        raise InvalidRate(f"max_rate {max_rate} outside [0, 0.25]")
    arr = np.asarray(array)
    w = arr.shape[1]
    margin = _crop_margin(w, max_rate)
    if margin == 0:
        return arr.copy()
    start = margin // 2 + int(offset_px)
    if start < 0 or start + (w - margin) > w:
        raise InvalidRate(f"offset {offset_px} slides the window outside the image")
    window = arr[:, start : start + (w - margin)]
    wc = window.shape[1]
    xs = (np.arange(w) + 0.5) * wc / w - 0.5
    if interpolation == "nearest":
        idx = np.clip(np.rint(xs), 0, wc - 1).astype(int)
        return window[:, idx].copy()
    i0 = np.clip(np.floor(xs), 0, wc - 1).astype(int)
    i1 = np.clip(i0 + 1, 0, wc - 1)
    frac = np.clip(xs - i0, 0.0, 1.0)
    out = window[:, i0].astype(float) * (1.0 - frac) + window[:, i1].astype(float) * frac
    return np.rint(out).astype(arr.dtype)


def random_crop_pair(
    image: np.ndarray,
    instruction: np.ndarray,
    spec: CropSpec,
    rng_seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Horizontally crop-augment an (image, instruction) pair.

    Each input gets its own independently drawn offset (image first, then
    instruction) unless the spec pins one; same seed, same bytes out.
    """
    rng = np.random.default_rng(rng_seed)
    img = np.asarray(image)
    ins = np.asarray(instruction)
    if spec.image_offset_px is None:
        img_off = draw_crop_offset(img.shape[1], spec.max_rate, rng)
    else:
        img_off = spec.check_offset(spec.image_offset_px, img.shape[1])
    if spec.instruction_offset_px is None:
        ins_off = draw_crop_offset(ins.shape[1], spec.max_rate, rng)
    else:
        ins_off = spec.check_offset(spec.instruction_offset_px, ins.shape[1])
    return (
        crop_and_rescale(img, img_off, spec.max_rate, "bilinear"),
        crop_and_rescale(ins, ins_off, spec.max_rate, "bilinear"),
    )


MANIFEST_NAME = "manifest.json"
_SUBDIRS = ("images", "instructions", "masks")


def export_dataset(
    records: Sequence[tuple[np.ndarray, np.ndarray, PathMask]],
    out_dir: str | os.PathLike,
    ids: Sequence[str] | None = None,
    camera: CameraModel | None = None,
    params: dict | None = None,
) -> dict:
    """Write (image, instruction, mask) triples as PGM files plus a manifest.

    Masks must match their image dimensions; instructions may differ (square
    crops). import_dataset(export_dataset(x)) round-trips bit-exactly.
    """
    out = Path(out_dir)
    if ids is None:
        ids = [f"{k:06d}" for k in range(len(records))]
    if len(ids) != len(records):
        raise ValueError("ids length must match records")
    for sub in _SUBDIRS:
        (out / sub).mkdir(parents=True, exist_ok=True)

    frames = []
    for frame_id, (image, instruction, mask) in zip(ids, records):
        img = np.asarray(image, dtype=np.uint8)
        ins = np.asarray(instruction, dtype=np.uint8)
        if mask.classes.shape != img.shape:
            raise DimensionMismatch(
                f"frame {frame_id}: mask {mask.classes.shape} != image {img.shape}"
            )
        rel = {
            "image": f"images/{frame_id}.pgm",
            "instruction": f"instructions/{frame_id}.pgm",
            "mask": f"masks/{frame_id}.pgm",
        }
        pgm.write_pgm(out / rel["image"], img)
        pgm.write_pgm(out / rel["instruction"], ins)
        mask.save_pgm(out / rel["mask"])
        frames.append(
            {
                "id": frame_id,
                **rel,
                "width": img.shape[1],
                "height": img.shape[0],
                "instruction_px": ins.shape[1],
            }
        )

    manifest = {
        "format": "navcost-dataset/1",
        "frames": frames,
        "camera_sha256": camera.config_hash() if camera else None,
        "params": dict(params or {}),
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def import_dataset(
    in_dir: str | os.PathLike,
) -> tuple[list[tuple[np.ndarray, np.ndarray, PathMask]], dict]:
    """Read a dataset directory back into memory; missing files raise IoError
    naming the file."""
    root = Path(in_dir)
    manifest_path = root / MANIFEST_NAME
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read dataset manifest {manifest_path}: {e}") from e
    records = []
    for entry in manifest["frames"]:
        paths = [root / entry[key] for key in ("image", "instruction", "mask")]
        for p in paths:
            if not p.exists():
                raise IoError(f"dataset file missing: {p}")
        image = pgm.read_pgm(paths[0])
        instruction = pgm.read_pgm(paths[1])
        mask = PathMask.load_pgm(paths[2])
        if mask.classes.shape != image.shape:
            raise DimensionMismatch(
                f"frame {entry['id']}: mask {mask.classes.shape} != image {image.shape}"
            )
        records.append((image, instruction, mask))
    return records, manifest
