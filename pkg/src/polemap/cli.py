"""Command-line entry points: annotate, extract-seg, evaluate, synth,
overlay and review-serve.

Options resolve as CLI flag > config file (TOML) > built-in default.  All
commands exit nonzero only when an error occurred; recoverable problems
(a missing cloud, an orphan prediction file) are warnings recorded in the
output instead.
"""

from __future__ import annotations

import argparse
import bisect
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import annotate as annotate_mod
from . import evaluate as evaluate_mod
from .annotate import (Annotation, AnnotationParams, AuditRecord, Decision,
                       annotate_frame, export_dataset, read_label_file,
                       subsample_frames)
from .frames import GeodeticPoint, Pose, load_calibration
from .ground import GroundSegmenterConfig, PolarGridPlaneSegmenter, load_point_cloud
from .map_store import load_map
from .seg_extract import ClassMergeSpec, load_mask, mask_to_annotations
from .synth import (LidarSpec, NoiseSpec, load_scene_spec, sample_drive,
                    write_synthetic_dataset, generate_scene, DriveFixture,
                    SensorRig, pitched_camera, level_lidar_mount)

logger = logging.getLogger("polemap")

_CONFIG_DEFAULTS = {
    # paths
    "map": None, "poses": None, "clouds": None, "frames": None,
    "calibration": None, "images_dir": None, "out": None,
    "origin_lat": None, "origin_lon": None,
    # annotation parameters
    "vehicle_height": None, "max_feature_distance": 150.0,
    "search_radius_px": 20.0, "depth_diff_threshold": 5.0,
    "box_width_px": 200.0, "box_height_px": 200.0,
    "keep_nodata": True, "depth_aggregate": "mean", "refine_max_2d": 5.0,
    # ground segmenter
    "ground_cell_size": 2.0, "ground_seed_quantile": 0.2,
    "ground_plane_threshold": 0.2, "ground_max_slope": 15.0,
    # subsampling and execution
    "min_pose_spacing": 0.0, "min_time_spacing": 0.0,
    "workers": 1, "seed": 0,
}


def _load_config_file(path) -> dict:
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    unknown = set(doc) - set(_CONFIG_DEFAULTS)
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    return doc


_PATH_KEYS = ("map", "poses", "clouds", "frames", "calibration",
              "images_dir", "out")


def _resolve_config(args) -> dict:
    cfg = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        base = Path(args.config).resolve().parent
        for key, value in file_cfg.items():
            if key in _PATH_KEYS and value is not None:
                value = str((base / value))
            cfg[key] = value
    for key in _CONFIG_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _annotation_params(cfg: dict) -> AnnotationParams:
    if cfg["vehicle_height"] is None:
        raise SystemExit("vehicle_height is required (flag or config file)")
    return AnnotationParams(
        vehicle_height_h=float(cfg["vehicle_height"]),
        max_feature_distance=float(cfg["max_feature_distance"]),
        search_radius_px=float(cfg["search_radius_px"]),
        depth_diff_threshold_m=float(cfg["depth_diff_threshold"]),
        box_width_px=float(cfg["box_width_px"]),
        box_height_px=float(cfg["box_height_px"]),
        keep_nodata=bool(cfg["keep_nodata"]),
        depth_aggregate=str(cfg["depth_aggregate"]),
        refine_max_2d_m=float(cfg["refine_max_2d"]),
    )


def _ground_config(cfg: dict) -> GroundSegmenterConfig:
    return GroundSegmenterConfig(
        cell_size_m=float(cfg["ground_cell_size"]),
        seed_quantile=float(cfg["ground_seed_quantile"]),
        plane_dist_threshold_m=float(cfg["ground_plane_threshold"]),
        max_slope_deg=float(cfg["ground_max_slope"]),
    )


def load_poses_csv(path) -> list[Pose]:
    poses = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for line in f:
            if not line.strip():
                continue
            parts = line.split(",")
            poses.append(Pose(float(parts[idx["x"]]), float(parts[idx["y"]]),
                              float(parts[idx["theta"]]),
                              timestamp=float(parts[idx["timestamp"]])))
    poses.sort(key=lambda p: p.timestamp)
    return poses


def load_frames_csv(path) -> list[tuple[str, float]]:
    rows = []
    with open(path) as f:
        f.readline()
        for line in f:
            if not line.strip():
                continue
            image_id, ts = line.strip().split(",")[:2]
            rows.append((image_id, float(ts)))
    rows.sort(key=lambda r: r[0])
    return rows


def interpolate_pose(poses: list[Pose], t: float) -> Pose:
    """Pose at time t: linear in x/y, shortest-arc in heading; clamped at
    the trajectory ends.  Recorded poses are denser than sensor frames, so
    interpolation between neighbors is accurate."""
    if not poses:
        raise ValueError("no poses to interpolate")
    times = [p.timestamp for p in poses]
    i = bisect.bisect_left(times, t)
    if i <= 0:
        return Pose(poses[0].x, poses[0].y, poses[0].theta, timestamp=t)
    if i >= len(poses):
        p = poses[-1]
        return Pose(p.x, p.y, p.theta, timestamp=t)
    a, b = poses[i - 1], poses[i]
    span = b.timestamp - a.timestamp
    w = 0.0 if span <= 0 else (t - a.timestamp) / span
    dth = math.remainder(b.theta - a.theta, 2.0 * math.pi)
    return Pose(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y),
                a.theta + w * dth, timestamp=t)


def cmd_annotate(cfg: dict) -> int:
    for key in ("map", "poses", "clouds", "frames", "calibration", "out"):
        if not cfg.get(key):
            raise SystemExit(f"annotate: --{key.replace('_', '-')} is required")
    cam, vehicle_to_lidar = load_calibration(cfg["calibration"])
    origin = None
    if cfg["origin_lat"] is not None and cfg["origin_lon"] is not None:
        origin = GeodeticPoint(float(cfg["origin_lat"]), float(cfg["origin_lon"]))
    map_set = load_map(cfg["map"], origin=origin)
    poses = load_poses_csv(cfg["poses"])
    frames = load_frames_csv(cfg["frames"])
    params = _annotation_params(cfg)
    segmenter = PolarGridPlaneSegmenter(_ground_config(cfg))
    clouds_dir = Path(cfg["clouds"])

    frame_poses = [interpolate_pose(poses, ts) for _, ts in frames]
    kept_idx = subsample_frames(frame_poses, float(cfg["min_pose_spacing"]),
                                float(cfg["min_time_spacing"]))
    skipped: list[str] = []
    jobs = []
    for i in kept_idx:
        image_id = frames[i][0]
        cloud_path = clouds_dir / f"{image_id}.bin"
        if not cloud_path.exists():
            cloud_path = clouds_dir / f"{image_id}.csv"
        if not cloud_path.exists():
            logger.warning("no cloud for %s; frame skipped", image_id)
            skipped.append(image_id)
            continue
        jobs.append((image_id, frame_poses[i], cloud_path))

    def run(job):
        image_id, pose, cloud_path = job
        cloud = load_point_cloud(cloud_path)
        return image_id, annotate_frame(pose, cloud, map_set, cam,
                                        vehicle_to_lidar, params,
                                        image_id=image_id, segmenter=segmenter)

    workers = max(1, int(cfg["workers"]))
    if workers == 1:
        results = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))

    results.sort(key=lambda r: r[0])
    frames_out = [(image_id, anns) for image_id, (anns, _) in results]
    audits = {image_id: recs for image_id, (_, recs) in results}
    meta = {
        "image_width": cam.width, "image_height": cam.height,
        "box_width_px": params.box_width_px,
        "box_height_px": params.box_height_px,
        "images_dir": str(cfg["images_dir"]) if cfg.get("images_dir") else None,
        "skipped_frames": sorted(skipped),
    }
    manifest = export_dataset(frames_out, cfg["out"], audits=audits, meta=meta)
    print(f"annotated {manifest['image_count']} frames, "
          f"{manifest['annotation_count']} annotations")
    for decision, count in manifest["decisions"].items():
        print(f"  {decision}: {count}")
    if skipped:
        print(f"  skipped frames: {len(skipped)}")
    return 0


def cmd_extract_seg(args) -> int:
    masks_dir = Path(args.masks)
    out_dir = Path(args.out)
    params = AnnotationParams(vehicle_height_h=1.0,  # unused by make_box
                              box_width_px=args.box_width_px,
                              box_height_px=args.box_height_px)
    spec = ClassMergeSpec()
    frames_out = []
    for mask_path in sorted(masks_dir.glob("*.png")):
        mask = load_mask(mask_path, args.class_table)
        anns = mask_to_annotations(mask, spec, args.min_width_px, params,
                                   image_id=mask_path.stem)
        frames_out.append((mask_path.stem, anns))
    manifest = export_dataset(frames_out, out_dir)
    print(f"extracted {manifest['annotation_count']} pole bases from "
          f"{manifest['image_count']} masks")
    return 0


def cmd_evaluate(args) -> int:
    gt_dir, pred_dir = Path(args.gt), Path(args.pred)
    gts_by_image: dict = {}
    preds_by_image: dict = {}
    for path in sorted(gt_dir.glob("*.txt")):
        gts_by_image[path.stem] = [row[1:5] for row in read_label_file(path)]
    for path in sorted(pred_dir.glob("*.txt")):
        if path.stem not in gts_by_image:
            logger.warning("prediction file %s has no ground-truth file; "
                           "counted as all false positives", path.name)
        preds_by_image[path.stem] = evaluate_mod.load_prediction_file(
            path, path.stem)
    report = evaluate_mod.evaluate_detections(
        preds_by_image, gts_by_image, image_width=args.image_width,
        iou_threshold=args.iou_threshold, conf_threshold=args.conf_threshold)
    out = Path(args.out) if args.out else None
    if out:
        evaluate_mod.save_report(report, out, pr_curve_csv=args.pr_csv)
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    if args.scene:
        scene = generate_scene(load_scene_spec(args.scene))
        drive = sample_drive(seed=args.seed, n_frames=args.frames,
                             frame_step_m=args.step)
        fixture = DriveFixture(scene, drive.poses, drive.rig,
                               drive.lidar_spec, drive.ground_config,
                               drive.params)
    else:
        fixture = sample_drive(seed=args.seed, n_frames=args.frames,
                               frame_step_m=args.step)
    noise = None
    if args.range_noise > 0:
        noise = NoiseSpec(range_sigma_m=args.range_noise)
    write_synthetic_dataset(fixture.scene, fixture.poses, fixture.rig,
                            fixture.lidar_spec, args.out,
                            make_images=not args.no_images, noise=noise)
    _write_pipeline_config(fixture, args.out)
    print(f"synthetic drive written to {args.out} "
          f"({len(fixture.poses)} frames, {len(fixture.scene.poles)} poles)")
    return 0


def _write_pipeline_config(fixture: DriveFixture, out_dir):
    from .synth import DATASET_ORIGIN

    g = fixture.ground_config
    p = fixture.params
    lines = [
        'map = "map.jsonl"',
        'poses = "poses.csv"',
        'clouds = "clouds"',
        'frames = "frames.csv"',
        'calibration = "calibration.json"',
        'images_dir = "images"',
        f"origin_lat = {DATASET_ORIGIN.latitude}",
        f"origin_lon = {DATASET_ORIGIN.longitude}",
        f"vehicle_height = {fixture.rig.vehicle_height}",
        f"max_feature_distance = {p.max_feature_distance}",
        f"search_radius_px = {p.search_radius_px}",
        f"depth_diff_threshold = {p.depth_diff_threshold_m}",
        f"box_width_px = {p.box_width_px}",
        f"box_height_px = {p.box_height_px}",
        f"ground_cell_size = {g.cell_size_m}",
        f"ground_seed_quantile = {g.seed_quantile}",
        f"ground_plane_threshold = {g.plane_dist_threshold_m}",
        f"ground_max_slope = {g.max_slope_deg}",
    ]
    with open(Path(out_dir) / "pipeline.toml", "w") as f:
        f.write("\n".join(lines) + "\n")


_OVERLAY_COLORS = {
    Decision.KEPT.value: (40, 200, 60),
    Decision.NO_GROUND.value: (230, 40, 40),
    Decision.OCCLUDED.value: (10, 10, 10),
    Decision.NO_DATA_DROPPED.value: (235, 200, 30),
}


def cmd_overlay(args) -> int:
    from PIL import Image, ImageDraw

    images_dir = Path(args.images)
    labels_dir = Path(args.labels)
    audit_dir = Path(args.audits) if args.audits else None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_done = 0
    for label_path in sorted(labels_dir.glob("*.txt")):
        image_id = label_path.stem
        image_path = images_dir / f"{image_id}.png"
        if not image_path.exists():
            image_path = images_dir / f"{image_id}.jpg"
        if not image_path.exists():
            logger.warning("no image for %s; skipped", image_id)
            continue
        try:
            img = Image.open(image_path).convert("RGB")
        except OSError:
            logger.warning("unreadable image %s; skipped", image_path)
            continue
        draw = ImageDraw.Draw(img)
        w, h = img.size
        for _, cx, cy, bw, bh in read_label_file(label_path):
            u, v = cx * w, cy * h
            draw.rectangle([u - bw * w / 2, v - bh * h / 2,
                            u + bw * w / 2, v + bh * h / 2],
                           outline=_OVERLAY_COLORS["kept"], width=2)
            _draw_cross(draw, u, v, _OVERLAY_COLORS["kept"])
        if audit_dir is not None:
            audit_path = audit_dir / f"{image_id}.jsonl"
            if audit_path.exists():
                with open(audit_path) as f:
                    for line in f:
                        rec = AuditRecord.from_json_dict(json.loads(line))
                        color = _OVERLAY_COLORS.get(rec.decision.value)
                        if color is None or rec.refined_pixel is None:
                            continue
                        if rec.decision == Decision.KEPT:
                            continue  # already drawn from the label file
                        u, v = rec.refined_pixel
                        if 0 <= u < w and 0 <= v < h:
                            _draw_cross(draw, u, v, color)
        img.save(out_dir / f"{image_id}.png")
        n_done += 1
    print(f"rendered {n_done} overlay images to {out_dir}")
    return 0


def _draw_cross(draw, u: float, v: float, color, size: int = 8):
    draw.line([u - size, v, u + size, v], fill=color, width=2)
    draw.line([u, v - size, u, v + size], fill=color, width=2)


def cmd_review_serve(args) -> int:
    import uvicorn

    from .review import create_app

    app = create_app(args.dataset, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_config_flags(sub):
    sub.add_argument("--config", help="TOML config file")
    sub.add_argument("--map")
    sub.add_argument("--poses")
    sub.add_argument("--clouds")
    sub.add_argument("--frames")
    sub.add_argument("--calibration")
    sub.add_argument("--images-dir", dest="images_dir")
    sub.add_argument("--out")
    sub.add_argument("--origin-lat", dest="origin_lat", type=float)
    sub.add_argument("--origin-lon", dest="origin_lon", type=float)
    sub.add_argument("--vehicle-height", dest="vehicle_height", type=float)
    sub.add_argument("--max-feature-distance", dest="max_feature_distance",
                     type=float)
    sub.add_argument("--search-radius-px", dest="search_radius_px", type=float)
    sub.add_argument("--depth-diff-threshold", dest="depth_diff_threshold",
                     type=float)
    sub.add_argument("--box-width-px", dest="box_width_px", type=float)
    sub.add_argument("--box-height-px", dest="box_height_px", type=float)
    sub.add_argument("--drop-nodata", dest="keep_nodata", action="store_false",
                     default=None)
    sub.add_argument("--depth-aggregate", dest="depth_aggregate",
                     choices=("mean", "median"))
    sub.add_argument("--refine-max-2d", dest="refine_max_2d", type=float)
    sub.add_argument("--ground-cell-size", dest="ground_cell_size", type=float)
    sub.add_argument("--ground-seed-quantile", dest="ground_seed_quantile",
                     type=float)
    sub.add_argument("--ground-plane-threshold", dest="ground_plane_threshold",
                     type=float)
    sub.add_argument("--ground-max-slope", dest="ground_max_slope", type=float)
    sub.add_argument("--min-pose-spacing", dest="min_pose_spacing", type=float)
    sub.add_argument("--min-time-spacing", dest="min_time_spacing", type=float)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polemap",
        description="Map-aided pole-base annotation pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("annotate", help="annotate a drive from map + lidar")
    _add_config_flags(s)

    s = subs.add_parser("extract-seg",
                        help="extract pole bases from segmentation masks")
    s.add_argument("--masks", required=True)
    s.add_argument("--class-table", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-width-px", type=int, default=3)
    s.add_argument("--box-width-px", type=float, default=200.0)
    s.add_argument("--box-height-px", type=float, default=200.0)

    s = subs.add_parser("evaluate", help="score predictions against labels")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--image-width", type=float, required=True)
    s.add_argument("--iou-threshold", type=float, default=0.5)
    s.add_argument("--conf-threshold", type=float, default=0.25)
    s.add_argument("--out")
    s.add_argument("--pr-csv")

    s = subs.add_parser("synth", help="generate a synthetic drive dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--scene", help="scene spec JSON (default: built-in drive)")
    s.add_argument("--frames", type=int, default=20)
    s.add_argument("--step", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--range-noise", type=float, default=0.0)
    s.add_argument("--no-images", action="store_true")

    s = subs.add_parser("overlay", help="draw annotations onto images")
    s.add_argument("--images", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--audits")
    s.add_argument("--out", required=True)

    s = subs.add_parser("review-serve", help="serve the review UI and API")
    s.add_argument("--dataset", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8008)
    s.add_argument("--ui", help="static directory with the built review UI")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "annotate":
            return cmd_annotate(_resolve_config(args))
        if args.command == "extract-seg":
            return cmd_extract_seg(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "overlay":
            return cmd_overlay(args)
        if args.command == "review-serve":
            return cmd_review_serve(args)
    except SystemExit:
        raise
    except Exception as exc:  # surfaced as exit status, per CLI contract
        logger.error("%s", exc)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
