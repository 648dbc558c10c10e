import math

import networkx as nx
import numpy as np
import pytest

from navcost.costmap import (
    CostGrid,
    GridSpec,
    KernelParams,
    LaserScan,
    extract_local_path,
    fuse,
    laser_to_cells,
    mask_to_cells,
    read_costgrid,
    write_costgrid,
)
from navcost.errors import NoReachableGoal
from navcost.geometry import Pose2D, footprint_to_mask, pixel_to_ground
from navcost.mask import TRAVERSABLE, PathMask
from conftest import SMALL_CAMERA


def brute_force_field(cells, sigma, amp, spec):
    """Direct per-cell maximum over Gaussian kernels (the definition)."""
    out = np.zeros((spec.ny, spec.nx))
    cells = list(cells)
    if not cells:
        return out
    for iy in range(spec.ny):
        for ix in range(spec.nx):
            best = 0.0
            for px, py in cells:
                d2 = ((ix - px) ** 2 + (iy - py) ** 2) * spec.resolution**2
                v = amp * math.exp(-d2 / (2.0 * sigma * sigma))
                best = max(best, v)
            out[iy, ix] = best
    return out


def grid_graph(cost, res):
    """Independent planner graph with the same edge-weight formula."""
    rows, cols = cost.shape
    g = nx.Graph()
    for y in range(rows):
        for x in range(cols):
            for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
                xn, yn = x + dx, y + dy
                if 0 <= xn < cols and 0 <= yn < rows:
                    step = res * math.sqrt(2.0) if dx and dy else res
                    w = step * 0.5 * (cost[y, x] + cost[yn, xn])
                    g.add_edge((x, y), (xn, yn), weight=w)
    return g


def path_cost_of(poses, grid):
    """Edge-weight sum of a returned pose path, same accumulation order."""
    res = grid.spec.resolution
    cost = grid.cost
    cells = [grid.spec.cell_of(p.x, p.y) for p in poses]
    total = 0.0
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        step = res * math.sqrt(2.0) if (x1 - x0) and (y1 - y0) else res
        total = total + step * 0.5 * (cost[y0, x0] + cost[y1, x1])
    return total, cells


SPEC10 = GridSpec(resolution=0.5, x_range=(0.0, 5.0), y_range=(-2.5, 2.5))


class TestMaskToCells:
    def test_all_unknown_empty(self):
        mask = PathMask(np.zeros((SMALL_CAMERA.image_height, SMALL_CAMERA.image_width),
                                 dtype=np.uint8))
        cells, skipped = mask_to_cells(mask, SMALL_CAMERA, GridSpec())
        assert cells == set() and skipped == 0

    def test_single_pixel_maps_to_its_ground_cell(self):
        spec = GridSpec()
        classes = np.zeros((SMALL_CAMERA.image_height, SMALL_CAMERA.image_width),
                           dtype=np.uint8)
        u, v = 161, 120
        classes[v, u] = TRAVERSABLE
        g = pixel_to_ground((u, v), SMALL_CAMERA)
        expected = (
            int(np.floor((g.x - spec.x_range[0]) / spec.resolution)),
            int(np.floor((g.y - spec.y_range[0]) / spec.resolution)),
        )
        cells, skipped = mask_to_cells(PathMask(classes), SMALL_CAMERA, spec)
        assert cells == {expected} and skipped == 0

    def test_above_horizon_pixels_are_counted(self):
        classes = np.zeros((SMALL_CAMERA.image_height, SMALL_CAMERA.image_width),
                           dtype=np.uint8)
        classes[0, 10] = TRAVERSABLE  # above the horizon for a pitched camera
        cells, skipped = mask_to_cells(PathMask(classes), SMALL_CAMERA, GridSpec())
        assert cells == set() and skipped == 1

    def test_straight_strip_geometry(self):
        spec = GridSpec()
        mask = footprint_to_mask([Pose2D(x, 0.0) for x in range(0, 21)], 1.6,
                                 SMALL_CAMERA)
        cells, _ = mask_to_cells(mask, SMALL_CAMERA, spec)
        arr = np.array(sorted(cells))
        # every marked cell center lies within the strip (plus cell diagonal)
        xc = spec.x_range[0] + (arr[:, 0] + 0.5) * spec.resolution
        yc = spec.y_range[0] + (arr[:, 1] + 0.5) * spec.resolution
        assert np.all(np.abs(yc) <= 0.8 + spec.resolution * math.sqrt(2))
        assert xc.min() < 2.5 and xc.max() > 14.0
        # where pixel rows sample denser than the grid (near field), the strip
        # is contiguous along +x and about 1.6 m wide; beyond that the image
        # rows skip cells and gaps are expected
        dense_limit = math.sqrt(
            spec.resolution * SMALL_CAMERA.fy * SMALL_CAMERA.mount_height
        )
        xs = np.unique(arr[:, 0][xc <= dense_limit])
        assert len(xs) > 10
        assert np.all(np.diff(xs) == 1)
        for ix in xs[2:-2]:
            ys = yc[arr[:, 0] == ix]
            width = ys.max() - ys.min() + spec.resolution
            assert abs(width - 1.6) <= 2 * spec.resolution


class TestLaserToCells:
    PARAMS = KernelParams()

    def test_empty(self):
        cells, dropped = laser_to_cells(LaserScan(np.empty((0, 3))), self.PARAMS,
                                        GridSpec())
        assert cells == set() and dropped == 0

    def test_height_gate_is_closed_interval(self):
        eps = 1e-6
        z0, z1 = self.PARAMS.height_range
        pts = np.array([
            [5.0, 0.0, z0 - eps],
            [5.0, 0.0, z1 + eps],
            [5.0, 1.0, z0],
            [5.0, -1.0, z1],
        ])
        cells, dropped = laser_to_cells(LaserScan(pts), self.PARAMS, GridSpec())
        assert dropped == 2 and len(cells) == 2

    def test_matches_binning_oracle(self):
        rng = np.random.default_rng(17)
        spec = GridSpec()
        pts = np.column_stack([
            rng.uniform(0, 20, 100),
            rng.uniform(-10, 10, 100),
            rng.uniform(*self.PARAMS.height_range, 100),
        ])
        cells, dropped = laser_to_cells(LaserScan(pts), self.PARAMS, spec)
        expected = set()
        for x, y, _ in pts:
            ix = math.floor((x - spec.x_range[0]) / spec.resolution)
            iy = math.floor((y - spec.y_range[0]) / spec.resolution)
            if 0 <= ix < spec.nx and 0 <= iy < spec.ny:
                expected.add((ix, iy))
        assert cells == expected


class TestFuse:
    def test_single_path_cell_peak_and_isotropy(self):
        params = KernelParams()
        grid = fuse({(5, 5)}, set(), params, SPEC10)
        assert grid.plausibility[5, 5] == pytest.approx(params.amp_path)
        assert grid.path_field.argmax() == 5 * SPEC10.nx + 5
        # equidistant cells get identical values
        quad = [grid.plausibility[5 + dy, 5 + dx]
                for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2))]
        assert max(quad) - min(quad) < 1e-12
        # radially decreasing
        ring = [grid.plausibility[5, 5 + k] for k in range(0, 5)]
        assert all(b < a for a, b in zip(ring, ring[1:]))

    def test_exact_cancellation_hits_floor(self):
        params = KernelParams(amp_path=0.9, amp_obs=0.9)
        grid = fuse({(4, 4)}, {(4, 4)}, params, SPEC10)
        assert grid.plausibility[4, 4] == pytest.approx(params.floor_eps)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(23)
        spec = GridSpec(resolution=0.2, x_range=(0, 10), y_range=(-5, 5))
        params = KernelParams(sigma_path=0.8, sigma_obs=0.5)
        for _ in range(5):
            path = {(int(rng.integers(0, spec.nx)), int(rng.integers(0, spec.ny)))
                    for _ in range(5)}
            obs = {(int(rng.integers(0, spec.nx)), int(rng.integers(0, spec.ny)))
                   for _ in range(5)}
            grid = fuse(path, obs, params, spec)
            expected_path = brute_force_field(path, params.sigma_path,
                                              params.amp_path, spec)
            expected_obs = brute_force_field(obs, params.sigma_obs, params.amp_obs,
                                             spec)
            assert np.abs(grid.path_field - expected_path).max() < 1e-12
            assert np.abs(grid.obstacle_field - expected_obs).max() < 1e-12
            expected = np.clip(expected_path - expected_obs, params.floor_eps, 1.0)
            assert np.abs(grid.plausibility - expected).max() < 1e-12

    def test_translation_equivariance(self):
        params = KernelParams()
        spec = GridSpec(resolution=0.5, x_range=(0, 15), y_range=(-7.5, 7.5))
        cells = {(4, 6), (7, 9), (5, 5)}
        obs = {(10, 10)}
        shift = (6, 4)
        moved = {(x + shift[0], y + shift[1]) for x, y in cells}
        moved_obs = {(x + shift[0], y + shift[1]) for x, y in obs}
        a = fuse(cells, obs, params, spec).plausibility
        b = fuse(moved, moved_obs, params, spec).plausibility
        # compare on the overlap untouched by boundary truncation
        np.testing.assert_allclose(
            a[: spec.ny - shift[1], : spec.nx - shift[0]],
            b[shift[1]:, shift[0]:],
            atol=1e-12,
        )

    def test_monotonicity_in_cell_sets(self):
        params = KernelParams()
        base = fuse({(3, 3)}, {(9, 9)}, params, SPEC10)
        more_path = fuse({(3, 3), (6, 6)}, {(9, 9)}, params, SPEC10)
        more_obs = fuse({(3, 3)}, {(9, 9), (8, 4)}, params, SPEC10)
        assert (more_path.plausibility >= base.plausibility - 1e-15).all()
        assert (more_obs.plausibility <= base.plausibility + 1e-15).all()


class TestExtractLocalPath:
    def test_uniform_field_goes_straight_forward(self):
        spec = GridSpec(resolution=0.5, x_range=(0, 10), y_range=(-5, 5))
        grid = CostGrid(spec=spec, plausibility=np.ones((spec.ny, spec.nx)),
                        params=KernelParams())
        path = extract_local_path(grid, Pose2D(0.25, 0.25), 4.0)
        assert len(path) == 9  # 8 steps of 0.5 m
        ys = {p.y for p in path}
        assert ys == {path[0].y}
        assert path[-1].x - path[0].x == pytest.approx(4.0)
        assert all(p.yaw == 0.0 for p in path)

    def test_wall_with_gap(self):
        spec = GridSpec(resolution=0.5, x_range=(0, 10), y_range=(-5, 5))
        params = KernelParams()
        plaus = np.ones((spec.ny, spec.nx))
        wall_ix = 10
        plaus[:, wall_ix] = params.floor_eps
        gap_iy = 13
        plaus[gap_iy, wall_ix] = 1.0
        grid = CostGrid(spec=spec, plausibility=plaus, params=params)
        path = extract_local_path(grid, Pose2D(0.25, 0.25), 8.0)
        total, cells = path_cost_of(path, grid)
        # routes through the gap: never enters a low-plausibility cell
        for x, y in cells:
            assert plaus[y, x] >= 0.5
        assert any(x == wall_ix and y == gap_iy for x, y in cells)
        oracle = nx.dijkstra_path_length(
            grid_graph(grid.cost, spec.resolution),
            cells[0], cells[-1],
        )
        assert total == oracle

    def test_matches_networkx_on_random_grids(self):
        rng = np.random.default_rng(31)
        for _ in range(4):
            n = int(rng.integers(20, 41))
            spec = GridSpec(resolution=0.5, x_range=(0, n * 0.5),
                            y_range=(-n * 0.25, n * 0.25))
            plaus = rng.uniform(0.05, 1.0, (spec.ny, spec.nx))
            grid = CostGrid(spec=spec, plausibility=plaus, params=KernelParams())
            path = extract_local_path(grid, Pose2D(0.25, 0.25), n * 0.5 * 0.6)
            total, cells = path_cost_of(path, grid)
            oracle = nx.dijkstra_path_length(
                grid_graph(grid.cost, spec.resolution), cells[0], cells[-1]
            )
            assert total == oracle

    def test_blocked_horizon(self):
        spec = GridSpec(resolution=0.5, x_range=(0, 10), y_range=(-5, 5))
        params = KernelParams()
        plaus = np.full((spec.ny, spec.nx), params.floor_eps)
        plaus[9:12, 0:3] = 1.0  # only cells near the start are drivable
        grid = CostGrid(spec=spec, plausibility=plaus, params=params)
        with pytest.raises(NoReachableGoal):
            extract_local_path(grid, Pose2D(0.25, 0.25), 6.0)

    def test_start_outside(self):
        grid = CostGrid(spec=SPEC10, plausibility=np.ones((SPEC10.ny, SPEC10.nx)))
        with pytest.raises(ValueError):
            extract_local_path(grid, Pose2D(-1.0, 0.0), 2.0)


class TestCostGridFile:
    def test_round_trip(self, tmp_path):
        params = KernelParams(sigma_path=1.5, floor_eps=2e-3)
        rng = np.random.default_rng(3)
        spec = GridSpec(resolution=0.25, x_range=(0, 5), y_range=(-2, 2))
        plaus = np.clip(rng.uniform(0, 1, (spec.ny, spec.nx)), params.floor_eps, 1.0)
        grid = fuse(set(), set(), params, spec)
        grid = CostGrid(spec=spec, plausibility=plaus, params=params)
        path = tmp_path / "grid.navcost"
        write_costgrid(path, grid)
        back = read_costgrid(path)
        assert back.spec == spec
        np.testing.assert_array_equal(back.plausibility,
                                      plaus.astype("<f4").astype(float))
        assert back.params == params

    def test_header_is_ascii_with_comment(self, tmp_path):
        grid = CostGrid(spec=SPEC10, plausibility=np.ones((SPEC10.ny, SPEC10.nx)),
                        params=KernelParams())
        path = tmp_path / "grid.navcost"
        write_costgrid(path, grid)
        with open(path, "rb") as f:
            header = f.readline().decode()
            comment = f.readline().decode()
        assert header.startswith("NAVCOST v1 10 10 0.5 0.0 -2.5")
        assert comment.startswith("#") and "sigma_path" in comment


def test_cost_is_negative_log(tmp_path):
    grid = CostGrid(spec=SPEC10, plausibility=np.full((SPEC10.ny, SPEC10.nx), 0.5))
    assert np.allclose(grid.cost, -np.log(0.5))
    assert (grid.cost >= 0).all()
