import numpy as np
import pytest

from navcost.geometry import CameraModel

# The worked-example camera used throughout the docs: principal point at
# integer pixel (324, 157), 1.5 m above ground, pitched 0.3 rad down.
EXAMPLE_CAMERA = CameraModel(fx=500.0, fy=500.0, cx=324.0, cy=157.0,
                             mount_height=1.5, pitch=0.3)

# Half-resolution camera for tests that rasterize many masks.
SMALL_CAMERA = CameraModel(fx=250.0, fy=250.0, cx=161.5, cy=78.0,
                           image_width=324, image_height=157,
                           mount_height=1.5, pitch=0.3)


@pytest.fixture
def example_camera() -> CameraModel:
    return EXAMPLE_CAMERA


@pytest.fixture
def small_camera() -> CameraModel:
    return SMALL_CAMERA


def random_camera(rng: np.random.Generator) -> CameraModel:
    """A physically plausible random camera (zero planar offsets are exercised
    separately where the monotonicity property needs them)."""
    w = int(rng.integers(200, 800))
    h = int(rng.integers(120, 400))
    return CameraModel(
        fx=float(rng.uniform(200, 800)),
        fy=float(rng.uniform(200, 800)),
        cx=float(rng.uniform(0.3, 0.7) * w),
        cy=float(rng.uniform(0.3, 0.7) * h),
        image_width=w,
        image_height=h,
        mount_height=float(rng.uniform(0.8, 2.5)),
        pitch=float(rng.uniform(0.1, 0.6)),
        yaw_offset=float(rng.uniform(-0.3, 0.3)),
        roll=float(rng.uniform(-0.2, 0.2)),
        forward_offset=float(rng.uniform(-0.5, 0.5)),
        lateral_offset=float(rng.uniform(-0.3, 0.3)),
    )
