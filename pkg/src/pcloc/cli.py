"""Command line interface: ``pcloc <command> ...``.

Every command accepts ``--seed``, ``--config`` and ``--threads`` and writes a
``manifest.json`` beside its outputs. Exit codes: 0 success, 1 pipeline
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import dataset, synth
from .cloud import PointCloud, cloud_fingerprint, read_ply, write_ply
from .config import PipelineConfig, config_hash
from .errors import PclocError
from .geometry import Intrinsics, RigidPose, Trajectory, read_trajectory, write_trajectory

log = logging.getLogger("pcloc")

DEFAULTS = {
    "scene": "scene.json",
    "cloud": "cloud.ply",
    "frames": "frames",
    "db": "keyframes.db",
    "map": "landmarks.map",
    "out": "out",
}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared helpers


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.replace(ransac=_replace(cfg.ransac, seed=args.seed))
    return cfg


def _replace(obj, **kw):
    import dataclasses
    return dataclasses.replace(obj, **kw)


def _camera(args, frames_dir: Path | None = None) -> Intrinsics:
    if getattr(args, "intrinsics", None):
        return dataset.load_intrinsics(args.intrinsics)
    if frames_dir is not None:
        K = dataset.frame_intrinsics(frames_dir)
        if K is not None:
            return K
    return synth.default_camera()


def _roi(args, cloud: PointCloud):
    from .relocalizer import RegionOfInterest
    if getattr(args, "roi", None):
        return RegionOfInterest.from_dict(json.loads(Path(args.roi).read_text()))
    lo, hi = cloud.bounds()
    # default: the cloud's footprint shrunk by 1 m (or a quarter) per side
    inset = np.minimum(1.0, 0.25 * (hi[:2] - lo[:2]))
    return RegionOfInterest((lo[0] + inset[0], lo[1] + inset[1], lo[2]),
                            (hi[0] - inset[0], hi[1] - inset[1], hi[2]), args.grid_step)


def _write_manifest(directory: Path, args, cfg: PipelineConfig, outputs, cloud: PointCloud | None = None,
                    extra: dict | None = None) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    man = {
        "command": args.command + (f" {args.target}" if getattr(args, "target", None) else ""),
        "version": _version(),
        "seed": args.seed,
        "config_hash": config_hash(cfg).hex(),
        "cloud_fingerprint": None if cloud is None else f"{cloud_fingerprint(cloud):016x}",
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        man.update(extra)
    p = directory / "manifest.json"
    p.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return p


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        import numba
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def _parse_pose(text: str) -> RigidPose:
    p = Path(text)
    if p.exists():
        return read_trajectory(p).poses[0]
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 7:
        raise ValueError("pose must be 'tx ty tz qx qy qz qw' or a trajectory file")
    return RigidPose.from_quaternion(vals[:3], vals[3:])


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg):
    scene_path = Path(args.scene)
    outputs = []
    target = args.target
    if target in ("scene", "all"):
        scene = synth.default_scene(seed=args.seed if args.seed is not None else 7)
        scene.save(scene_path)
        outputs.append(scene_path)
        log.info("scene written to %s", scene_path)
    scene = synth.Scene.load(scene_path)
    cloud = None
    if target in ("scan", "all"):
        sc = synth.default_scan_config(resolution_deg=args.resolution)
        t = time.perf_counter()
        cloud = synth.simulate_lidar(scene, sc, seed=args.seed or 0)
        write_ply(args.cloud, cloud)
        outputs.append(Path(args.cloud))
        log.info("%d points scanned in %.1f s -> %s", len(cloud), time.perf_counter() - t, args.cloud)
    if target in ("frames", "all"):
        K = _camera(args)
        traj = synth.generate_trajectory(synth.loop_trajectory_spec())
        idx = list(range(0, len(traj), args.every))
        if args.max_frames:
            idx = idx[: args.max_frames]
        gt = traj.subset(idx)
        images = [synth.render_camera_frame(scene, p, K) for p in gt.poses]
        dataset.write_frames(args.frames, gt.timestamps, images, K, gt)
        outputs.append(Path(args.frames))
        log.info("%d frames written to %s", len(images), args.frames)
    out_dir = Path(args.frames) if target in ("frames", "all") else scene_path.parent
    _write_manifest(out_dir, args, cfg, outputs, cloud)
    return 0


def cmd_render(args, cfg):
    from .renderer import render, save_color_png, save_depth_png
    cloud = read_ply(args.cloud)
    K = _camera(args)
    pose = _parse_pose(args.pose)
    res = render(cloud, pose, K, cfg.render)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    color = out.with_suffix(".png")
    depth = out.with_name(out.stem + "_depth.png")
    save_color_png(color, res.rgb)
    save_depth_png(depth, np.where(res.valid, res.depth, 0.0))
    _write_manifest(out.parent, args, cfg, [color, depth], cloud)
    log.info("rendered %s and %s", color, depth)
    return 0


def cmd_build_db(args, cfg):
    from .relocalizer import build_database
    cloud = read_ply(args.cloud)
    roi = _roi(args, cloud)
    t = time.perf_counter()
    db = build_database(cloud, roi, cfg, threads=_threads(args))
    db.save(args.out)
    log.info("%d records, %d landmarks in %.1f s -> %s", len(db), sum(len(r) for r in db.records),
             time.perf_counter() - t, args.out)
    _write_manifest(Path(args.out).parent, args, cfg, [args.out], cloud, {"roi": roi.to_dict()})
    return 0


def cmd_build_map(args, cfg):
    from .mapping import build_map
    cloud = read_ply(args.cloud)
    roi = _roi(args, cloud)
    K = _camera(args, Path(args.frames) if args.frames else None)
    t = time.perf_counter()
    m = build_map(cloud, roi, K, cfg, threads=_threads(args))
    m.save(args.out)
    log.info("%d keyframes, %d landmarks in %.1f s -> %s", len(m.keyframes), len(m.landmarks),
             time.perf_counter() - t, args.out)
    _write_manifest(Path(args.out).parent, args, cfg, [args.out], cloud, {"roi": roi.to_dict()})
    return 0


def _report_figures(out: Path, res, gt: Trajectory | None):
    from . import plots
    from .evaluation import ape
    figs = [plots.plot_frame_report(out / "report.png", res.stats)]
    if res.trajectory is not None:
        figs.append(plots.plot_trajectory(out / "trajectory.png", res.trajectory, gt))
        if gt is not None and len(res.trajectory) >= 3:
            r = ape(res.trajectory, gt)
            figs.append(plots.plot_errors(out / "errors.png", r.pos_errors, r.ang_errors, r.gt_index))
    return figs


def cmd_track(args, cfg):
    from .mapping import SlamMap, localize_sequence
    frames_dir = Path(args.frames)
    K = _camera(args, frames_dir)
    frames = list(dataset.iter_frames(frames_dir))
    if not frames:
        raise PclocError(f"{frames_dir}: no frames")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cloud = None

    def progress(i, st):
        log.debug("frame %d: %s, %d inliers", i, st.status, st.inliers)

    if args.mode == "pl":
        m = SlamMap.load(args.map)
        res = localize_sequence(frames, K, m, cfg, on_frame=progress)
        extra = {"map": str(args.map)}
    else:
        from .relocalizer import KeyframeDatabase, build_database, relocalize
        from .tracker import run_sequence
        cloud = read_ply(args.cloud)
        if Path(args.db).exists():
            db = KeyframeDatabase.load(args.db)
            if not db.check_cloud(cloud):
                raise PclocError(f"{args.db} was built from a different cloud")
        else:
            log.info("no database at %s, building one", args.db)
            db = build_database(cloud, _roi(args, cloud), cfg, threads=_threads(args))
            db.save(args.db)

        def reloc(img):
            return relocalize(img, K, db, cloud, cfg)

        res = run_sequence(frames, K, cloud, reloc, cfg, on_frame=progress)
        extra = {"db": str(args.db)}
    report = out / "report.csv"
    res.write_report(report)
    traj_path = out / "trajectory.txt"
    if res.trajectory is not None:
        write_trajectory(traj_path, res.trajectory)
    else:
        traj_path.write_text("# timestamp tx ty tz qx qy qz qw\n")
    figs = _report_figures(out, res, dataset.frame_ground_truth(frames_dir))
    extra["mode"] = args.mode
    _write_manifest(out, args, cfg, [report, traj_path, *figs], cloud, extra)
    log.info("%d/%d frames localized -> %s", sum(s.status != "lost" for s in res.stats), len(res.stats), out)
    return 0 if res.trajectory is not None else 1


def cmd_reloc(args, cfg):
    from .relocalizer import KeyframeDatabase, relocalize_detailed
    cloud = read_ply(args.cloud)
    db = KeyframeDatabase.load(args.db)
    K = _camera(args)
    img = dataset.load_image(args.image)
    r = relocalize_detailed(img, K, db, cloud, cfg)
    p = r.estimate.pose
    result = {
        "translation": [float(v) for v in p.translation],
        "quaternion_xyzw": [float(v) for v in p.quaternion()],
        "inliers": r.estimate.n_inliers,
        "mean_reproj_px": r.estimate.mean_reproj_error,
        "record": r.record_index,
        "refined": r.refined,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=2) + "\n")
    _write_manifest(out.parent, args, cfg, [out], cloud)
    print(json.dumps(result))
    return 0


def cmd_eval(args, cfg):
    from . import evaluation as ev
    from . import plots
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cloud = None
    if args.target == "ape":
        est = read_trajectory(args.estimate)
        gt = read_trajectory(args.ground_truth)
        r = ev.ape(est, gt, args.mode)
        csv_path = out / "ape.csv"
        csv_path.write_text("mode,pos_rmse_m,ang_rmse_deg,n_matched,n_unmatched\n"
                            f"{args.mode},{r.pos_rmse:.6f},{r.ang_rmse:.6f},{r.n_matched},{r.n_unmatched}\n")
        figs = [plots.plot_errors(out / "ape_errors.png", r.pos_errors, r.ang_errors, r.gt_index),
                plots.plot_trajectory(out / "ape_trajectory.png", est.transformed(r.alignment), gt)]
        outputs = [csv_path, *figs]
        print(f"pos_rmse={r.pos_rmse:.4f} m ang_rmse={r.ang_rmse:.4f} deg n={r.n_matched}")
    elif args.target == "ssim":
        s = ev.ssim(dataset.load_image(args.a), dataset.load_image(args.b))
        csv_path = out / "ssim.csv"
        csv_path.write_text(f"a,b,ssim\n{args.a},{args.b},{s:.6f}\n")
        outputs = [csv_path]
        print(f"ssim={s:.6f}")
    elif args.target == "overlay":
        cam = dataset.load_image(args.camera)
        ren = dataset.load_image(args.render)
        valid = ren.any(axis=2) if args.mask_black else None
        img = ev.overlay(cam, ren, args.alpha, valid)
        path = out / "overlay.png"
        dataset.save_image(path, img)
        outputs = [path]
    else:
        frames_dir = Path(args.frames)
        frames = list(dataset.iter_frames(frames_dir))
        gt = dataset.frame_ground_truth(frames_dir)
        if gt is None:
            raise PclocError(f"{frames_dir}: ground truth is required for the study")
        K = _camera(args, frames_dir)
        cloud = read_ply(args.cloud)
        levels = [float(v) for v in args.levels.split(",")]
        arms = args.arms.split(",")
        init = gt.poses[0] if args.bootstrap == "ground-truth" else None
        roi = _roi(args, cloud)
        rows = ev.decimation_study(cloud, frames, gt, K, levels, args.method, cfg, arms, roi=roi,
                                   initial_pose=init, seed=args.seed or 0, threads=_threads(args))
        csv_path = out / "decimation.csv"
        ev.write_study_csv(rows, csv_path, timing=not args.no_timing)
        outputs = [csv_path, plots.plot_study(out / "decimation.png", rows)]
        for r in rows:
            print(",".join(r.values()))
    _write_manifest(out, args, cfg, outputs, cloud)
    return 0


def cmd_config(args, cfg):
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for scans, RANSAC and decimation")
    common.add_argument("--config", default=None, help="pipeline config JSON (see `pcloc config`)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="pcloc", description="Localize camera frames against a colored point cloud.")
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a scene, LiDAR scan and camera frames")
    s.add_argument("target", nargs="?", choices=["scene", "scan", "frames", "all"], default="all")
    s.add_argument("--scene", default=DEFAULTS["scene"])
    s.add_argument("--cloud", default=DEFAULTS["cloud"])
    s.add_argument("--frames", default=DEFAULTS["frames"])
    s.add_argument("--resolution", type=float, default=0.2, help="scan angular step, degrees")
    s.add_argument("--every", type=int, default=1, help="keep every n-th trajectory frame")
    s.add_argument("--max-frames", type=int, default=0)
    s.add_argument("--intrinsics", default=None)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("render", parents=[common], help="render the cloud from one pose")
    s.add_argument("--cloud", default=DEFAULTS["cloud"])
    s.add_argument("--pose", required=True, help="'tx ty tz qx qy qz qw' or a trajectory file (first pose)")
    s.add_argument("--intrinsics", default=None)
    s.add_argument("--out", default=str(Path(DEFAULTS["out"]) / "render"))
    s.set_defaults(func=cmd_render)

    for name, func, out_default in (("build-db", cmd_build_db, DEFAULTS["db"]),
                                    ("build-map", cmd_build_map, DEFAULTS["map"])):
        s = sub.add_parser(name, parents=[common], help=f"{name.split('-')[1]} from a cloud and roi")
        s.add_argument("--cloud", default=DEFAULTS["cloud"])
        s.add_argument("--roi", default=None, help="roi JSON {min, max, grid_step, height_levels}")
        s.add_argument("--grid-step", type=float, default=1.0)
        s.add_argument("--out", default=out_default)
        if name == "build-map":
            s.add_argument("--intrinsics", default=None)
            s.add_argument("--frames", default=DEFAULTS["frames"], help="take intrinsics from here if present")
        s.set_defaults(func=func)

    s = sub.add_parser("track", parents=[common], help="localize every frame of a directory")
    s.add_argument("--mode", choices=["rm", "pl"], default="pl")
    s.add_argument("--frames", default=DEFAULTS["frames"])
    s.add_argument("--cloud", default=DEFAULTS["cloud"])
    s.add_argument("--db", default=DEFAULTS["db"], help="R&M: built over the roi if missing")
    s.add_argument("--map", default=DEFAULTS["map"])
    s.add_argument("--roi", default=None)
    s.add_argument("--grid-step", type=float, default=1.0)
    s.add_argument("--intrinsics", default=None)
    s.add_argument("--out", default=DEFAULTS["out"])
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("reloc", parents=[common], help="global pose of one image")
    s.add_argument("--image", required=True)
    s.add_argument("--cloud", default=DEFAULTS["cloud"])
    s.add_argument("--db", default=DEFAULTS["db"])
    s.add_argument("--intrinsics", default=None)
    s.add_argument("--out", default=str(Path(DEFAULTS["out"]) / "reloc.json"))
    s.set_defaults(func=cmd_reloc)

    e = sub.add_parser("eval", help="metrics and the decimation study")
    esub = e.add_subparsers(dest="target", required=True, parser_class=_Parser)
    s = esub.add_parser("ape", parents=[common])
    s.add_argument("--estimate", default=str(Path(DEFAULTS["out"]) / "trajectory.txt"))
    s.add_argument("--ground-truth", default=str(Path(DEFAULTS["frames"]) / dataset.GROUND_TRUTH_NAME))
    s.add_argument("--mode", choices=["SE3", "Sim3"], default="SE3")
    s.add_argument("--out", default=DEFAULTS["out"])
    s = esub.add_parser("ssim", parents=[common])
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--out", default=DEFAULTS["out"])
    s = esub.add_parser("overlay", parents=[common])
    s.add_argument("--camera", required=True)
    s.add_argument("--render", required=True)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--mask-black", action="store_true", help="treat black render pixels as invalid")
    s.add_argument("--out", default=DEFAULTS["out"])
    s = esub.add_parser("decimation-study", parents=[common])
    s.add_argument("--cloud", default=DEFAULTS["cloud"])
    s.add_argument("--frames", default=DEFAULTS["frames"])
    s.add_argument("--levels", default="1.0,0.5,0.1")
    s.add_argument("--method", choices=["rm", "pl"], default="rm")
    s.add_argument("--arms", default="full,point_based")
    s.add_argument("--bootstrap", choices=["relocalize", "ground-truth"], default="relocalize",
                   help="R&M first pose: relocalization or the first ground-truth pose")
    s.add_argument("--roi", default=None)
    s.add_argument("--grid-step", type=float, default=1.0)
    s.add_argument("--intrinsics", default=None)
    s.add_argument("--no-timing", action="store_true", help="blank the fps/preprocess columns")
    s.add_argument("--out", default=DEFAULTS["out"])
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("config", parents=[common], help="print the (default or given) config as JSON")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.WARNING - 10 * min(args.verbose + 1, 2))
    _set_threads(args.threads)
    try:
        cfg = _load_config(args)
        return args.func(args, cfg)
    except (PclocError, OSError, ValueError, KeyError) as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
