"""navcost command line: simulate, align, dataset, costmap, plan, eval.

Every run writes a reproducibility stanza (run_manifest.json next to the
outputs) holding the resolved parameters, seeds, and input hashes; rerunning
a stanza reproduces the outputs byte for byte. Exit codes: 0 ok, 1 validation
or usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__, pgm
from .costmap import GridSpec, KernelParams, extract_local_path, read_costgrid, \
    write_costgrid
from .errors import IoError, NavcostError
from .evalkit import MetricReport
from .geometry import CameraModel, Pose2D
from .label_gen import export_dataset, label_frame
from .mask import PathMask
from .path_oracle import load_external_mask
from .pipeline import (
    FramePipeline,
    PipelineConfig,
    compare_masks,
    default_branch,
    render_camera_view,
)
from .route_map import RoutePolyline, TrajectorySeq, dtw_align
from .simworld import KIND_ARMS, ScanSpec, World, build_scenario


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("NAVCOST_SEED")
    return int(env) if env else 0


def _load_config(path: str | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if not path:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e
    overrides = {}
    if "camera" in data:
        overrides["camera"] = CameraModel.from_json(data.pop("camera"))
    if "grid" in data:
        g = data.pop("grid")
        overrides["grid"] = GridSpec(
            resolution=g.get("resolution", 0.1),
            x_range=tuple(g.get("x_range", (0.0, 20.0))),
            y_range=tuple(g.get("y_range", (-10.0, 10.0))),
        )
    if "kernels" in data:
        k = data.pop("kernels")
        if "height_range" in k:
            k["height_range"] = tuple(k["height_range"])
        overrides["kernels"] = KernelParams(**k)
    if "scan" in data:
        overrides["scan"] = ScanSpec(**data.pop("scan"))
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        overrides[key] = value
    return dataclasses.replace(cfg, **overrides)


def _config_json(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)
    return out


def _write_manifest(out_dir: Path, subcommand: str, params: dict,
                    inputs: list[Path], outputs: list[str]) -> None:
    stanza = {
        "tool": "navcost",
        "version": __version__,
        "subcommand": subcommand,
        "params": params,
        "input_hashes": {str(p): _sha256(p) for p in inputs if p.exists()},
        "outputs": sorted(outputs),
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as f:
        json.dump(stanza, f, indent=2, sort_keys=True)
        f.write("\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, naming the flag
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="navcost", description=__doc__)
    parser.add_argument("--version", action="version", version=f"navcost {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic world plus frame records")
    p.add_argument("--kind", required=True, choices=sorted(KIND_ARMS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--branch", default=None, help="exit branch (default picked per kind)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("align", help="DTW-align a trajectory to a route")
    p.add_argument("--route", required=True, help="route JSON file")
    p.add_argument("--traj", required=True, help="trajectory JSON file")
    p.add_argument("--spacing-m", type=float, default=2.0)
    p.add_argument("--out", default=None, help="directory for alignment artifacts")

    p = sub.add_parser("dataset", help="export (image, instruction, mask) training triples")
    p.add_argument("--world", required=True, help="directory written by simulate")
    p.add_argument("--out", required=True)
    p.add_argument("--offset-level", choices=["minor", "moderate", "hard"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", default=None)

    p = sub.add_parser("costmap", help="fuse per-frame navigation cost grids")
    p.add_argument("--world", required=True, help="directory written by simulate")
    p.add_argument("--out", required=True)
    p.add_argument("--masks", default=None,
                   help="directory of externally generated path masks (PGM)")
    p.add_argument("--offset-level", choices=["minor", "moderate", "hard"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--config", default=None)

    p = sub.add_parser("plan", help="extract a local path from a cost grid")
    p.add_argument("--grid", required=True, help=".navcost grid file")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--start", default="0.05,0", help="start x,y in meters")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate predicted masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True, help="CSV output path")
    p.add_argument("--camera", default=None, help="camera JSON (for heading metric)")
    p.add_argument("--fit-range", type=float, default=10.0)
    return parser


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    cfg = _load_config(args.config)
    branch = args.branch or default_branch(args.kind, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    world = build_scenario(args.kind, seed)
    pipe = FramePipeline(world, branch, args.frames, cfg)
    world.save(out / "world.json")
    pipe.route_px.save(out / "route.json")
    pgm.write_pgm(out / "map.pgm", pipe.map_raster)
    with open(out / "map_frame.json", "w", encoding="utf-8") as f:
        json.dump(pipe.map_frame.to_json(), f, indent=2)
        f.write("\n")

    frames = []
    for k in range(args.frames):
        rec = pipe.frame_record(k)
        frames.append(
            {
                "id": rec.image_id,
                "t": rec.timestamp,
                "pose": [rec.pose.x, rec.pose.y, rec.pose.yaw],
                "scan": rec.scan.points.tolist(),
            }
        )
        print(f"frame {rec.image_id}: t={rec.timestamp:.1f}s "
              f"pose=({rec.pose.x:.2f}, {rec.pose.y:.2f}, {rec.pose.yaw:.3f}) "
              f"scan={len(rec.scan)} pts")
    with open(out / "frames.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "kind": args.kind,
                "seed": seed,
                "branch": branch,
                "n_frames": args.frames,
                "frame_dt": cfg.frame_dt,
                "camera": cfg.camera.to_json(),
                "frames": frames,
            },
            f, indent=2,
        )
        f.write("\n")
    outputs = ["world.json", "route.json", "map.pgm", "map_frame.json", "frames.json"]
    _write_manifest(out, "simulate",
                    {"kind": args.kind, "seed": seed, "frames": args.frames,
                     "branch": branch, "config": _config_json(cfg)},
                    [Path(args.config)] if args.config else [], outputs)
    return 0


def _cmd_align(args) -> int:
    route = RoutePolyline.load(args.route)
    traj = TrajectorySeq.load(args.traj)
    from .route_map import discretize_route

    points = discretize_route(route, args.spacing_m)
    warp = dtw_align(traj, points)
    print(f"aligned {len(traj)} poses to {len(points)} route points: "
          f"K={warp.K} cost={warp.cost:.6f} accumulated={warp.total_distance:.6f}")
    for i, j in warp.pairs:
        print(f"  pose {i} -> route point {j}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "alignment.json", "w", encoding="utf-8") as f:
            json.dump(
                {
                    "pairs": warp.pairs.tolist(),
                    "K": warp.K,
                    "cost": warp.cost,
                    "total_distance": warp.total_distance,
                    "matched_route_indices": warp.matched_route_indices().tolist(),
                },
                f, indent=2,
            )
            f.write("\n")
        from .render import alignment_figure

        alignment_figure(traj.poses, points.points, warp.pairs, out / "alignment.png")
        _write_manifest(out, "align",
                        {"route": args.route, "traj": args.traj,
                         "spacing_m": args.spacing_m},
                        [Path(args.route), Path(args.traj)],
                        ["alignment.json", "alignment.png"])
    return 0


def _load_world_dir(world_dir: str) -> tuple[World, dict]:
    root = Path(world_dir)
    world = World.load(root / "world.json")
    frames_path = root / "frames.json"
    try:
        with open(frames_path, "r", encoding="utf-8") as f:
            frames_meta = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {frames_path}: {e}") from e
    return world, frames_meta


def _cmd_dataset(args) -> int:
    seed = _resolve_seed(args.seed)
    cfg = _load_config(args.config)
    world, meta = _load_world_dir(args.world)
    branch = meta["branch"]
    n_frames = meta["n_frames"]
    pipe = FramePipeline(world, branch, n_frames, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from .route_map import inject_offset

    def build(k: int):
        rec = pipe.frame_record(k)
        offset_px = (
            inject_offset(args.offset_level, cfg.out_px, seed * 100003 + k)
            if args.offset_level
            else 0.0
        )
        instruction = pipe.instruction_for(k, offset_px)
        image = render_camera_view(world.at_time(rec.timestamp), rec.pose, cfg.camera)
        future = pipe.future_demo(k, cfg.label_horizon_m)
        mask = label_frame(rec, future, cfg.camera, rec.scan, cfg.footprint_width_m,
                           height_range=cfg.kernels.height_range)
        return image, instruction.raster, mask, offset_px

    results = _parallel_map(build, range(n_frames), args.jobs)
    records = [(img, instr, m) for img, instr, m, _ in results]
    offsets = [off for _, _, _, off in results]
    ids = [f"{k:06d}" for k in range(n_frames)]
    export_dataset(
        records, out, ids=ids, camera=cfg.camera,
        params={
            "world": str(Path(args.world)),
            "branch": branch,
            "seed": seed,
            "offset_level": args.offset_level,
            "offsets_px": offsets,
            "label_horizon_m": cfg.label_horizon_m,
            "rescale_after_crop": True,
        },
    )
    for frame_id in ids:
        print(f"frame {frame_id}: wrote image/instruction/mask triple")
    _write_manifest(out, "dataset",
                    {"world": args.world, "seed": seed,
                     "offset_level": args.offset_level, "jobs": args.jobs,
                     "config": _config_json(cfg)},
                    [Path(args.world) / "world.json", Path(args.world) / "frames.json"],
                    [f"masks/{i}.pgm" for i in ids]
                    + [f"images/{i}.pgm" for i in ids]
                    + [f"instructions/{i}.pgm" for i in ids]
                    + ["manifest.json"])
    return 0


def _cmd_costmap(args) -> int:
    seed = _resolve_seed(args.seed)
    cfg = _load_config(args.config)
    world, meta = _load_world_dir(args.world)
    pipe = FramePipeline(world, meta["branch"], meta["n_frames"], cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from .costmap import fuse, laser_to_cells, mask_to_cells
    from .route_map import inject_offset
    from .simworld import simulate_laser

    def build(k: int):
        t = k * cfg.frame_dt
        world_t = world.at_time(t)
        pose = pipe.frame_poses[k]
        if args.masks:
            mask_path = Path(args.masks) / f"{k:06d}.pgm"
            pred, warnings = load_external_mask(
                mask_path, (cfg.camera.image_width, cfg.camera.image_height)
            )
        else:
            from .path_oracle import oracle_generate

            offset_px = (
                inject_offset(args.offset_level, cfg.out_px, seed * 100003 + k)
                if args.offset_level
                else 0.0
            )
            instruction = pipe.instruction_for(k, offset_px)
            pred = oracle_generate(world_t, pose, instruction, cfg.camera,
                                   cfg.path_horizon_m, cfg.footprint_width_m)
            warnings = 0
        scan = simulate_laser(world_t, pose, cfg.scan)
        path_cells = mask_to_cells(pred, cfg.camera, cfg.grid).cells | pipe.ego_cells
        obstacle_cells = laser_to_cells(scan, cfg.kernels, cfg.grid).cells
        grid = fuse(path_cells, obstacle_cells, cfg.kernels, cfg.grid)
        return grid, len(path_cells), len(obstacle_cells), warnings

    results = _parallel_map(build, range(meta["n_frames"]), args.jobs)
    outputs = []
    for k, (grid, n_path, n_obs, warnings) in enumerate(results):
        name = f"frame_{k:06d}.navcost"
        write_costgrid(out / name, grid)
        outputs.append(name)
        if not args.no_figures:
            from .render import costmap_figure

            costmap_figure(grid, out / f"frame_{k:06d}.png")
            outputs.append(f"frame_{k:06d}.png")
        note = f" snap_warnings={warnings}" if warnings else ""
        print(f"frame {k:06d}: path_cells={n_path} obstacle_cells={n_obs}{note}")
    _write_manifest(out, "costmap",
                    {"world": args.world, "seed": seed, "masks": args.masks,
                     "offset_level": args.offset_level, "jobs": args.jobs,
                     "figures": not args.no_figures, "config": _config_json(cfg)},
                    [Path(args.world) / "world.json", Path(args.world) / "frames.json"],
                    outputs)
    return 0


def _cmd_plan(args) -> int:
    grid = read_costgrid(args.grid)
    x, y = (float(v) for v in args.start.split(","))
    path = extract_local_path(grid, Pose2D(x, y), args.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "path.csv", "w", encoding="utf-8") as f:
        f.write("x,y,yaw\n")
        for p in path:
            f.write(f"{p.x:.4f},{p.y:.4f},{p.yaw:.6f}\n")
    from .render import costmap_figure

    costmap_figure(grid, out / "plan.png", plan=path)
    print(f"planned {len(path)} poses to ({path[-1].x:.2f}, {path[-1].y:.2f})")
    _write_manifest(out, "plan",
                    {"grid": args.grid, "horizon": args.horizon, "start": args.start},
                    [Path(args.grid)], ["path.csv", "plan.png"])
    return 0


def _cmd_eval(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    cam = CameraModel.load(args.camera) if args.camera else None
    pred_files = sorted(pred_dir.glob("*.pgm"))
    if not pred_files:
        raise IoError(f"no .pgm masks found in {pred_dir}")
    rows = []
    from .geometry import DEFAULT_CAMERA

    cam = cam or DEFAULT_CAMERA
    for pf in pred_files:
        gf = gt_dir / pf.name
        if not gf.exists():
            raise IoError(f"missing ground-truth mask: {gf}")
        pred = PathMask.load_pgm(pf)
        gt = PathMask.load_pgm(gf)
        row = compare_masks(pf.stem, pred, gt, cam, args.fit_range)
        rows.append(row)
        print(f"frame {pf.stem}: iou={row.iou:.4f} cover={row.cover_rate:.4f} "
              f"d_yaw={row.delta_yaw_deg:.2f} l1={row.patch_l1:.4f}")
    report = MetricReport(rows)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(report_path)
    print(report.format_table(label=pred_dir.name))
    from .render import metrics_figure

    figure_path = report_path.with_suffix(".png")
    metrics_figure(report, figure_path)
    _write_manifest(report_path.parent, "eval",
                    {"pred": args.pred, "gt": args.gt, "report": args.report,
                     "fit_range": args.fit_range,
                     "camera": args.camera},
                    pred_files[:3] + [gt_dir / pred_files[0].name],
                    [report_path.name, figure_path.name])
    return 0


def _parallel_map(fn, items, jobs: int) -> list:
    """Run fn over items, preserving input order regardless of scheduling."""
    items = list(items)
    if jobs <= 1:
        return [fn(k) for k in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


_COMMANDS = {
    "simulate": _cmd_simulate,
    "align": _cmd_align,
    "dataset": _cmd_dataset,
    "costmap": _cmd_costmap,
    "plan": _cmd_plan,
    "eval": _cmd_eval,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except IoError as e:
        print(f"navcost {args.subcommand}: I/O error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"navcost {args.subcommand}: I/O error: {e}", file=sys.stderr)
        return 2
    except (NavcostError, ValueError) as e:
        print(f"navcost {args.subcommand}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
