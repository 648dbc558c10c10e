"""Class-coded path masks: traversable / obstacle / unknown camera-frame labels."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import pgm
from .errors import DimensionMismatch

UNKNOWN = 0
OBSTACLE = 128
TRAVERSABLE = 255
CLASS_CODES = (UNKNOWN, OBSTACLE, TRAVERSABLE)


@dataclass(frozen=True)
class PathMask:
    """Per-pixel class codes for one camera frame.

    classes[v, u] is one of UNKNOWN (0), OBSTACLE (128), TRAVERSABLE (255);
    dimensions match the source camera image.
    """

    classes: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.classes, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        valid = (arr == UNKNOWN) | (arr == OBSTACLE) | (arr == TRAVERSABLE)
        if not valid.all():
            bad = np.unique(arr[~valid])
            raise ValueError(f"mask contains non-class values {bad.tolist()}")
        object.__setattr__(self, "classes", arr)

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def traversable(self) -> np.ndarray:
        return self.classes == TRAVERSABLE

    @property
    def obstacle(self) -> np.ndarray:
        return self.classes == OBSTACLE

    @property
    def unknown(self) -> np.ndarray:
        return self.classes == UNKNOWN

    def histogram(self) -> dict[int, int]:
        """Pixel count per class code."""
        return {code: int((self.classes == code).sum()) for code in CLASS_CODES}

    def require_same_shape(self, other: "PathMask") -> None:
        if self.classes.shape != other.classes.shape:
            raise DimensionMismatch(
                f"mask shapes differ: {self.classes.shape} vs {other.classes.shape}"
            )

    def save_pgm(self, path: str | os.PathLike) -> None:
        pgm.write_pgm(path, self.classes)

    @classmethod
    def load_pgm(cls, path: str | os.PathLike) -> "PathMask":
        return cls(pgm.read_pgm(path))


def snap_to_class_codes(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Snap arbitrary gray values to the nearest class code.

    Band edges are the midpoints between codes; exact ties go to the lower
    code. Returns (snapped uint8 array, count of pixels that changed).
    """
    arr = np.asarray(values, dtype=np.uint8)
    snapped = np.where(arr <= 64, UNKNOWN, np.where(arr <= 191, OBSTACLE, TRAVERSABLE))
    snapped = snapped.astype(np.uint8)
    return snapped, int((snapped != arr).sum())
