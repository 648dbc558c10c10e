"""Binary PGM (P5) read/write for 8-bit grayscale images and masks."""

from __future__ import annotations

import os

import numpy as np

from .errors import IoError


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write a 2-D uint8 array as a binary P5 PGM with maxval 255."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"PGM image must be 2-D, got shape {arr.shape}")
    arr = arr.astype(np.uint8, copy=False)
    h, w = arr.shape
    try:
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(arr.tobytes())
    except OSError as e:
        raise IoError(f"cannot write PGM file {path}: {e}") from e


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary P5 PGM into a uint8 array of shape (height, width)."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoError(f"cannot read PGM file {path}: {e}") from e

    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        c = data[pos:pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            pos = data.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(data) and data[end:end + 1] not in b" \t\r\n":
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) != 4 or tokens[0] != b"P5":
        raise IoError(f"{path} is not a binary P5 PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise IoError(f"{path}: unsupported PGM maxval {maxval} (expected 255)")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + w * h]
    if len(raw) != w * h:
        raise IoError(f"{path}: truncated PGM payload ({len(raw)} of {w * h} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()
