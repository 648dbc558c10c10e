import numpy as np
import pytest

from navcost.costmap import LaserScan
from navcost.errors import DimensionMismatch, EmptyTrajectory, InvalidRate, IoError
from navcost.geometry import Pose2D, project_points_to_pixels
from navcost.label_gen import (
    CropSpec,
    FrameRecord,
    crop_and_rescale,
    draw_crop_offset,
    export_dataset,
    import_dataset,
    label_frame,
    random_crop_pair,
    validate_frame_sequence,
)
from navcost.mask import OBSTACLE, TRAVERSABLE, UNKNOWN, PathMask
from conftest import SMALL_CAMERA

EMPTY_SCAN = LaserScan(np.empty((0, 3)))


def frame_for(cam, pose=Pose2D(0, 0, 0), t=0.0, scan=EMPTY_SCAN):
    return FrameRecord(image_id="000000", pose=pose,
                       camera_image_dims=(cam.image_width, cam.image_height),
                       scan=scan, timestamp=t)


def straight_future(length=20.0):
    return [Pose2D(x, 0.0) for x in np.arange(0.0, length + 0.1, 1.0)]


class TestLabelFrame:
    def test_straight_drive_no_obstacles(self):
        mask = label_frame(frame_for(SMALL_CAMERA), straight_future(), SMALL_CAMERA,
                           EMPTY_SCAN, 1.6)
        codes = set(np.unique(mask.classes))
        assert codes == {UNKNOWN, TRAVERSABLE}

    def test_laser_point_on_centerline_overrides(self):
        scan = LaserScan(np.array([[5.0, 0.0, 1.0]]))
        mask = label_frame(frame_for(SMALL_CAMERA), straight_future(), SMALL_CAMERA,
                           scan, 1.6)
        plain = label_frame(frame_for(SMALL_CAMERA), straight_future(), SMALL_CAMERA,
                            EMPTY_SCAN, 1.6)
        obst = mask.obstacle
        assert obst.any()
        # every obstacle pixel was traversable before the override
        assert (plain.traversable[obst]).all()
        # the projected 3-D point itself is obstacle-coded
        uv = project_points_to_pixels(np.array([[5.0, 0.0, 1.0]]), SMALL_CAMERA)[0]
        assert mask.classes[round(uv[1]), round(uv[0])] == OBSTACLE
        # dilation makes the single return a region
        assert obst.sum() >= 9

    def test_out_of_height_range_points_ignored(self):
        scan = LaserScan(np.array([[5.0, 0.0, 0.1], [5.0, 0.0, 2.5]]))
        mask = label_frame(frame_for(SMALL_CAMERA), straight_future(), SMALL_CAMERA,
                           scan, 1.6)
        assert not mask.obstacle.any()

    def test_empty_trajectory(self):
        with pytest.raises(EmptyTrajectory):
            label_frame(frame_for(SMALL_CAMERA), [], SMALL_CAMERA, EMPTY_SCAN, 1.6)

    def test_dims_must_match_camera(self):
        rec = FrameRecord(image_id="x", pose=Pose2D(0, 0), camera_image_dims=(10, 10),
                          scan=EMPTY_SCAN, timestamp=0.0)
        with pytest.raises(DimensionMismatch):
            label_frame(rec, straight_future(), SMALL_CAMERA, EMPTY_SCAN, 1.6)


class TestRandomCropPair:
    def test_zero_rate_is_identity(self):
        rng = np.random.default_rng(1)
        image = rng.integers(0, 255, (60, 100)).astype(np.uint8)
        instruction = rng.integers(0, 255, (40, 40)).astype(np.uint8)
        out_img, out_ins = random_crop_pair(image, instruction, CropSpec(max_rate=0.0),
                                            rng_seed=7)
        np.testing.assert_array_equal(out_img, image)
        np.testing.assert_array_equal(out_ins, instruction)

    def test_fixed_seed_is_byte_identical(self):
        rng = np.random.default_rng(2)
        image = rng.integers(0, 255, (60, 100)).astype(np.uint8)
        instruction = rng.integers(0, 255, (40, 40)).astype(np.uint8)
        spec = CropSpec(max_rate=0.15)
        a = random_crop_pair(image, instruction, spec, rng_seed=99)
        b = random_crop_pair(image, instruction, spec, rng_seed=99)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()

    def test_window_arithmetic_at_648(self):
        # max_rate 0.1 on a 648-wide image: 64 px margin -> 584 px window
        arr = np.tile(np.arange(648, dtype=np.uint8), (4, 1))
        margin = int(np.floor(0.1 * 648))
        assert 648 - margin == 584
        rng = np.random.default_rng(0)
        offsets = [draw_crop_offset(648, 0.1, np.random.default_rng(s))
                   for s in range(300)]
        assert all(abs(o) <= 0.1 * 648 for o in offsets)
        # applying any drawn offset keeps the window inside the image
        for off in offsets:
            crop_and_rescale(arr, off, 0.1)

    def test_invalid_rate(self):
        with pytest.raises(InvalidRate):
            CropSpec(max_rate=0.3)
        with pytest.raises(InvalidRate):
            crop_and_rescale(np.zeros((4, 10), dtype=np.uint8), 0, 0.5)

    def test_pinned_offsets_respected(self):
        image = np.tile(np.arange(100, dtype=np.uint8), (4, 1))
        spec = CropSpec(max_rate=0.2, image_offset_px=5, instruction_offset_px=-5)
        a, b = random_crop_pair(image, image, spec, rng_seed=0)
        # opposite shifts slide the sampled content in opposite directions
        assert a.astype(int).mean() > b.astype(int).mean()

    def test_nearest_preserves_mask_codes(self):
        mask = np.full((6, 40), UNKNOWN, dtype=np.uint8)
        mask[:, 10:30] = TRAVERSABLE
        mask[:, 18:22] = OBSTACLE
        out = crop_and_rescale(mask, 2, 0.2, interpolation="nearest")
        assert set(np.unique(out)) <= {UNKNOWN, OBSTACLE, TRAVERSABLE}


def synthetic_records(n=10, seed=0, cam=SMALL_CAMERA):
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        image = rng.integers(0, 255, (cam.image_height, cam.image_width)).astype(np.uint8)
        instruction = rng.integers(0, 255, (64, 64)).astype(np.uint8)
        classes = rng.choice([UNKNOWN, OBSTACLE, TRAVERSABLE],
                             size=(cam.image_height, cam.image_width)).astype(np.uint8)
        records.append((image, instruction, PathMask(classes)))
    return records


class TestDatasetExport:
    def test_round_trip_bit_exact(self, tmp_path):
        records = synthetic_records()
        export_dataset(records, tmp_path, camera=SMALL_CAMERA, params={"seed": 0})
        back, manifest = import_dataset(tmp_path)
        assert len(back) == len(records)
        for (ai, an, am), (bi, bn, bm) in zip(records, back):
            assert ai.tobytes() == bi.tobytes()
            assert an.tobytes() == bn.tobytes()
            assert am.classes.tobytes() == bm.classes.tobytes()
        assert manifest["camera_sha256"] == SMALL_CAMERA.config_hash()

    def test_histograms_stable(self, tmp_path):
        records = synthetic_records(3, seed=5)
        export_dataset(records, tmp_path)
        back, _ = import_dataset(tmp_path)
        for (_, _, a), (_, _, b) in zip(records, back):
            assert a.histogram() == b.histogram()

    def test_missing_file_names_it(self, tmp_path):
        export_dataset(synthetic_records(2), tmp_path)
        victim = tmp_path / "masks" / "000001.pgm"
        victim.unlink()
        with pytest.raises(IoError) as err:
            import_dataset(tmp_path)
        assert "000001.pgm" in str(err.value)

    def test_dimension_mismatch_on_export(self, tmp_path):
        records = synthetic_records(1)
        bad_mask = PathMask(np.zeros((10, 10), dtype=np.uint8))
        with pytest.raises(DimensionMismatch):
            export_dataset([(records[0][0], records[0][1], bad_mask)], tmp_path)

    def test_augment_commutes_with_round_trip(self, tmp_path):
        records = synthetic_records(1, seed=9)
        spec = CropSpec(max_rate=0.2)
        image, instruction, mask = records[0]
        direct = random_crop_pair(image, instruction, spec, rng_seed=123)
        export_dataset(records, tmp_path)
        back, _ = import_dataset(tmp_path)
        r_image, r_instruction, _ = back[0]
        loaded = random_crop_pair(r_image, r_instruction, spec, rng_seed=123)
        assert direct[0].tobytes() == loaded[0].tobytes()
        assert direct[1].tobytes() == loaded[1].tobytes()


def test_frame_sequence_timestamps():
    frames = [frame_for(SMALL_CAMERA, t=0.0), frame_for(SMALL_CAMERA, t=1.0)]
    validate_frame_sequence(frames)
    with pytest.raises(ValueError):
        validate_frame_sequence(frames[::-1])
