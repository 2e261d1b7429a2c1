"""Per-frame annotation pipeline and dataset export.

Stage order: radius cull -> flat-ground height -> lidar ground refinement
(overriding the height) -> projection -> occlusion verdict -> box encode.
Every in-radius feature leaves exactly one audit record explaining where
the pipeline kept or dropped it.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .frames import (CameraModel, EnuPoint2, OutOfImage, Pixel, Point3, Pose,
                     RigidTransform, BehindCamera, assign_fixed_height,
                     map_to_vehicle, project_to_image, transform_point)
from .ground import (GroundSegmenter, PointCloud, PolarGridPlaneSegmenter,
                     refine_height)
from .map_store import MapSet
from .occlusion import (VisibilityState, build_depth_samples, visibility)

POLE_BASE_CLASS = "pole_base"
ANNOTATION_SOURCES = ("map", "segmentation", "manual")


class Decision(str, enum.Enum):
    """Pipeline outcome for one (frame, feature) pair.

    KEPT and NO_GROUND both produce an annotation; NO_GROUND flags that no
    plausible ground point was found and the flat-ground height was used
    instead.  The remaining values are drop reasons.  CULLED_RADIUS is part
    of the shared audit vocabulary for callers that audit the whole map;
    annotate_frame itself only records the in-radius features.
    """

    KEPT = "kept"
    CULLED_RADIUS = "culled_radius"
    BEHIND_CAMERA = "behind_camera"
    OUT_OF_IMAGE = "out_of_image"
    OCCLUDED = "occluded"
    NO_GROUND = "no_ground"
    NO_DATA_DROPPED = "no_data_dropped"


ANNOTATED_DECISIONS = (Decision.KEPT, Decision.NO_GROUND)


@dataclass(frozen=True, kw_only=True)
class AnnotationParams:
    """Pipeline parameters; the distance/radius/depth defaults follow the
    reference sensor setup (150 m cull, 20 px search radius, 5 m depth gap)."""

    vehicle_height_h: float
    max_feature_distance: float = 150.0
    search_radius_px: float = 20.0
    depth_diff_threshold_m: float = 5.0
    box_width_px: float = 200.0
    box_height_px: float = 200.0
    keep_nodata: bool = True
    depth_aggregate: str = "mean"
    refine_max_2d_m: float = 5.0

    def __post_init__(self):
        if self.vehicle_height_h <= 0:
            raise ValueError("vehicle_height_h must be positive")
        for name in ("max_feature_distance", "search_radius_px",
                     "depth_diff_threshold_m", "refine_max_2d_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.box_width_px < 2 or self.box_height_px < 2:
            raise ValueError("box sizes must be at least 2 px")
        if self.depth_aggregate not in ("mean", "median"):
            raise ValueError("depth_aggregate must be 'mean' or 'median'")


@dataclass(frozen=True)
class Annotation:
    image_id: str
    center: Pixel
    box: tuple  # normalized (cx, cy, w, h)
    source: str = "map"
    feature_id: str | None = None
    klass: str = POLE_BASE_CLASS

    def __post_init__(self):
        if self.source not in ANNOTATION_SOURCES:
            raise ValueError(f"unknown annotation source {self.source!r}")


@dataclass(frozen=True)
class AuditRecord:
    feature_id: str
    decision: Decision
    naive_pixel: tuple | None = None      # unclipped (u, v) of the flat-ground projection
    refined_pixel: tuple | None = None    # unclipped (u, v) after height refinement
    local_depth: float | None = None
    true_distance: float | None = None
    height_source: str | None = None      # "lidar" or "flat"

    def to_json_dict(self) -> dict:
        return {
            "feature_id": self.feature_id,
            "decision": self.decision.value,
            "naive_pixel": list(self.naive_pixel) if self.naive_pixel else None,
            "refined_pixel": list(self.refined_pixel) if self.refined_pixel else None,
            "local_depth": self.local_depth,
            "true_distance": self.true_distance,
            "height_source": self.height_source,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AuditRecord":
        return cls(
            feature_id=d["feature_id"],
            decision=Decision(d["decision"]),
            naive_pixel=tuple(d["naive_pixel"]) if d.get("naive_pixel") else None,
            refined_pixel=tuple(d["refined_pixel"]) if d.get("refined_pixel") else None,
            local_depth=d.get("local_depth"),
            true_distance=d.get("true_distance"),
            height_source=d.get("height_source"),
        )


def make_box(base: Pixel, params: AnnotationParams,
             image_w: int, image_h: int) -> tuple:
    """Encode a base point as a normalized fixed-size context box.

    cx, cy stay at the base point (the detection target).  At image borders
    the extent is clipped side by side, so w/h shrink while the stored
    center does not move.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    if not (0.0 <= base.u < image_w and 0.0 <= base.v < image_h):
        raise ValueError(f"base point ({base.u}, {base.v}) outside image")
    half_w = params.box_width_px / 2.0
    half_h = params.box_height_px / 2.0
    w = (min(half_w, base.u) + min(half_w, image_w - base.u)) / image_w
    h = (min(half_h, base.v) + min(half_h, image_h - base.v)) / image_h
    return (base.u / image_w, base.v / image_h, w, h)


def annotate_frame(pose: Pose, cloud: PointCloud, map_set: MapSet,
                   cam: CameraModel, vehicle_to_lidar: RigidTransform,
                   params: AnnotationParams, image_id: str = "",
                   segmenter: GroundSegmenter | None = None,
                   ) -> tuple[list[Annotation], list[AuditRecord]]:
    """Run the full pipeline for one frame.

    Returns (annotations, audit records), both ordered by feature id; there
    is one audit record per in-radius feature.  An empty cloud degrades to
    the naive flat-ground projection, with NoData verdicts handled per
    params.keep_nodata.
    """
    if cam.extrinsics is None:
        raise ValueError("camera model must carry vehicle->camera extrinsics")
    if (vehicle_to_lidar.from_frame, vehicle_to_lidar.to_frame) != ("vehicle", "lidar"):
        raise ValueError("vehicle_to_lidar must map 'vehicle' -> 'lidar'")
    if cloud.frame != "lidar":
        raise ValueError(f"cloud must be in the lidar frame, got '{cloud.frame}'")
    if segmenter is None:
        segmenter = PolarGridPlaneSegmenter()

    in_radius = map_set.query_radius(EnuPoint2(pose.x, pose.y),
                                     params.max_feature_distance)
    in_radius.sort(key=lambda f: f.id)

    lidar_to_camera = cam.extrinsics.compose(vehicle_to_lidar.inverse())
    labels = segmenter(cloud)
    samples = build_depth_samples(cloud, lidar_to_camera, cam)

    annotations: list[Annotation] = []
    audits: list[AuditRecord] = []
    for feat in in_radius:
        flat_v = assign_fixed_height(map_to_vehicle(feat.enu, pose),
                                     params.vehicle_height_h)
        naive_proj = project_to_image(transform_point(flat_v, cam.extrinsics), cam)
        naive_px = (None if isinstance(naive_proj, BehindCamera)
                    else (naive_proj.u, naive_proj.v))

        flat_l = transform_point(flat_v, vehicle_to_lidar)
        refined_l = refine_height(flat_l, cloud, labels, params.refine_max_2d_m)
        height_source = "flat" if refined_l is None else "lidar"
        base_l = flat_l if refined_l is None else refined_l
        base_c = transform_point(base_l, lidar_to_camera)
        proj = project_to_image(base_c, cam)

        if isinstance(proj, BehindCamera):
            audits.append(AuditRecord(feat.id, Decision.BEHIND_CAMERA,
                                      naive_pixel=naive_px,
                                      height_source=height_source))
            continue
        true_distance = math.sqrt(base_c.x ** 2 + base_c.y ** 2 + base_c.z ** 2)
        if isinstance(proj, OutOfImage):
            audits.append(AuditRecord(feat.id, Decision.OUT_OF_IMAGE,
                                      naive_pixel=naive_px,
                                      refined_pixel=(proj.u, proj.v),
                                      true_distance=true_distance,
                                      height_source=height_source))
            continue

        verdict = visibility(proj, true_distance, samples,
                             params.search_radius_px,
                             params.depth_diff_threshold_m,
                             params.depth_aggregate)
        common = dict(naive_pixel=naive_px, refined_pixel=(proj.u, proj.v),
                      local_depth=verdict.local_depth,
                      true_distance=true_distance, height_source=height_source)
        if verdict.state is VisibilityState.OCCLUDED:
            audits.append(AuditRecord(feat.id, Decision.OCCLUDED, **common))
            continue
        if verdict.state is VisibilityState.NO_DATA and not params.keep_nodata:
            audits.append(AuditRecord(feat.id, Decision.NO_DATA_DROPPED, **common))
            continue

        decision = (Decision.KEPT if height_source == "lidar"
                    else Decision.NO_GROUND)
        audits.append(AuditRecord(feat.id, decision, **common))
        annotations.append(Annotation(
            image_id=image_id, center=proj,
            box=make_box(proj, params, cam.width, cam.height),
            source="map", feature_id=feat.id))
    return annotations, audits


def subsample_frames(poses: Sequence[Pose], min_pose_spacing: float,
                     min_time_spacing: float) -> list[int]:
    """Greedy frame thinning; returns the kept indices.

    A frame is kept when it moved at least min_pose_spacing from the last
    kept frame or is at least min_time_spacing seconds later.
    """
    kept: list[int] = []
    for i, p in enumerate(poses):
        if not kept:
            kept.append(i)
            continue
        last = poses[kept[-1]]
        moved = math.hypot(p.x - last.x, p.y - last.y) >= min_pose_spacing
        waited = (p.timestamp - last.timestamp) >= min_time_spacing
        if moved or waited:
            kept.append(i)
    return kept


def write_label_file(annotations: Sequence[Annotation], path):
    """One line per annotation: `class_index cx cy w h`, 6-decimal fixed."""
    with open(path, "w") as f:
        for ann in annotations:
            cx, cy, w, h = ann.box
            f.write(f"0 {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}\n")


def read_label_file(path) -> list[tuple]:
    """Read normalized (class_index, cx, cy, w, h) rows."""
    rows = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            rows.append((int(parts[0]),) + tuple(float(p) for p in parts[1:5]))
    return rows


def export_dataset(frames, out_dir, audits: dict | None = None,
                   meta: dict | None = None) -> dict:
    """Write label files plus a manifest (and audit JSONL when given).

    frames is an iterable of (image_id, annotations).  Output is
    deterministic: identical input re-exports byte-identically.
    """
    out = Path(out_dir)
    labels_dir = out / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    frames = sorted(frames, key=lambda fr: fr[0])
    seen = set()
    for image_id, _ in frames:
        if image_id in seen:
            raise ValueError(f"duplicate image id: {image_id!r}")
        seen.add(image_id)

    decision_counts: dict[str, int] = {}
    images = []
    for image_id, annotations in frames:
        write_label_file(annotations, labels_dir / f"{image_id}.txt")
        images.append({"image_id": image_id, "annotations": len(annotations)})

    if audits is not None:
        audit_dir = out / "audits"
        audit_dir.mkdir(parents=True, exist_ok=True)
        for image_id, _ in frames:
            records = audits.get(image_id, [])
            with open(audit_dir / f"{image_id}.jsonl", "w") as f:
                for rec in records:
                    f.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
                    key = rec.decision.value
                    decision_counts[key] = decision_counts.get(key, 0) + 1

    manifest = {
        "images": images,
        "image_count": len(images),
        "annotation_count": sum(i["annotations"] for i in images),
        "decisions": dict(sorted(decision_counts.items())),
    }
    if meta:
        manifest["meta"] = meta
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
