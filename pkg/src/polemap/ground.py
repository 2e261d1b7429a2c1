"""Ground segmentation of lidar scans and nearest-ground height refinement.

The built-in segmenter is a deterministic polar-grid plane fit: points are
binned into (ring, sector) cells, each cell seeds a plane from its lowest
height quantile, refits on inliers, and labels points within a distance
threshold of the plane as ground.  Any callable with the same
(PointCloud) -> labels signature can be plugged in instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .frames import Point3

# labels are a per-point bool array, True = ground
GroundLabels = np.ndarray

GroundSegmenter = Callable[["PointCloud"], GroundLabels]


@dataclass
class PointCloud:
    """Lidar scan: (N, 3) float64 points plus optional per-point intensity."""

    points: np.ndarray
    intensity: np.ndarray | None = None
    frame: str = "lidar"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise ValueError("point cloud contains non-finite coordinates")
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if len(self.intensity) != len(self.points):
                raise ValueError("intensity length does not match point count")

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class GroundSegmenterConfig:
    cell_size_m: float = 2.0
    seed_quantile: float = 0.2
    plane_dist_threshold_m: float = 0.2
    max_slope_deg: float = 15.0

    def __post_init__(self):
        if min(self.cell_size_m, self.plane_dist_threshold_m,
               self.max_slope_deg) <= 0:
            raise ValueError("segmenter config values must be positive")
        if not (0.0 < self.seed_quantile < 1.0):
            raise ValueError("seed quantile must be in (0, 1)")


class PolarGridPlaneSegmenter:
    """Deterministic per-cell plane fit on a polar grid."""

    def __init__(self, config: GroundSegmenterConfig | None = None):
        self.config = config or GroundSegmenterConfig()

    def __call__(self, cloud: PointCloud) -> GroundLabels:
        cfg = self.config
        pts = cloud.points
        n = len(pts)
        labels = np.zeros(n, dtype=bool)
        if n == 0:
            return labels

        radius = np.hypot(pts[:, 0], pts[:, 1])
        azimuth = np.arctan2(pts[:, 1], pts[:, 0])
        ring = np.floor(radius / cfg.cell_size_m).astype(np.int64)
        # sector count grows with the ring so cells stay ~cell_size wide
        n_sec = np.maximum(8, np.rint(2.0 * np.pi * (ring + 0.5)).astype(np.int64))
        sector = np.floor((azimuth + np.pi) / (2.0 * np.pi) * n_sec).astype(np.int64)
        sector = np.clip(sector, 0, n_sec - 1)

        order = np.lexsort((sector, ring))
        ring_s, sec_s = ring[order], sector[order]
        breaks = np.flatnonzero((np.diff(ring_s) != 0) | (np.diff(sec_s) != 0)) + 1
        starts = np.concatenate(([0], breaks))
        stops = np.concatenate((breaks, [len(order)]))

        cos_max_slope = math.cos(math.radians(cfg.max_slope_deg))
        thr = cfg.plane_dist_threshold_m
        for a, b in zip(starts, stops):
            idx = order[a:b]
            cell = pts[idx]
            z = cell[:, 2]
            if len(idx) < 3:
                cut = np.quantile(z, cfg.seed_quantile) + thr
                labels[idx] = z <= cut
                continue
            normal, offset = self._fit_cell_plane(cell, z, cfg)
            if normal is None or normal[2] < cos_max_slope:
                # no credible ground plane in this cell
                continue
            dist = cell @ normal - offset
            labels[idx] = np.abs(dist) <= thr
        return labels

    @staticmethod
    def _fit_cell_plane(cell, z, cfg):
        n_seed = max(3, int(math.ceil(len(cell) * cfg.seed_quantile)))
        seed_idx = np.argpartition(z, n_seed - 1)[:n_seed]
        sel = cell[seed_idx]
        normal = offset = None
        for _ in range(3):
            centroid = sel.mean(axis=0)
            cov = (sel - centroid).T @ (sel - centroid)
            w, v = np.linalg.eigh(cov)
            normal = v[:, 0]
            if normal[2] < 0:
                normal = -normal
            offset = float(normal @ centroid)
            dist = np.abs(cell @ normal - offset)
            inliers = dist <= cfg.plane_dist_threshold_m
            if inliers.sum() < 3:
                break
            sel = cell[inliers]
        return normal, offset


def segment_ground(cloud: PointCloud,
                   cfg: GroundSegmenterConfig | None = None) -> GroundLabels:
    """Partition a scan into ground / non-ground points."""
    return PolarGridPlaneSegmenter(cfg)(cloud)


def refine_height(feature: Point3, cloud: PointCloud, labels: GroundLabels,
                  max_2d_distance: float = 5.0) -> Point3 | None:
    """Set the feature height from the nearest ground point (2D distance).

    z := z_k with k the ground point minimizing the x-y Euclidean distance
    to the feature; ties go to the lowest point index.  Returns None when
    there is no ground point within max_2d_distance (caller falls back to
    the flat-ground height).
    """
    if feature.frame != cloud.frame:
        raise ValueError(f"feature frame '{feature.frame}' does not match "
                         f"cloud frame '{cloud.frame}'")
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != (len(cloud),):
        raise ValueError("labels length does not match point count")
    if not labels.any():
        return None
    g = cloud.points[labels]
    d2 = (g[:, 0] - feature.x) ** 2 + (g[:, 1] - feature.y) ** 2
    k = int(np.argmin(d2))
    if d2[k] > max_2d_distance * max_2d_distance:
        return None
    return Point3(feature.x, feature.y, float(g[k, 2]), feature.frame)


def load_point_cloud(path) -> PointCloud:
    """Read a per-frame scan: velodyne-style .bin (float32 x,y,z,intensity
    quadruples, little-endian) or CSV with an x,y,z,intensity header."""
    path = Path(path)
    if path.suffix == ".bin":
        raw = np.fromfile(path, dtype="<f4")
        if len(raw) % 4 != 0:
            raise ValueError(f"{path}: not a multiple of 4 floats")
        raw = raw.reshape(-1, 4)
        return PointCloud(raw[:, :3].astype(np.float64),
                          raw[:, 3].astype(np.float64))
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = [(float(r["x"]), float(r["y"]), float(r["z"]),
                 float(r.get("intensity", 0.0) or 0.0)) for r in reader]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return PointCloud(arr[:, :3], arr[:, 3])


def save_point_cloud(cloud: PointCloud, path):
    path = Path(path)
    inten = (cloud.intensity if cloud.intensity is not None
             else np.zeros(len(cloud)))
    raw = np.column_stack([cloud.points, inten]).astype("<f4")
    if path.suffix == ".bin":
        raw.tofile(path)
        return
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "z", "intensity"])
        writer.writerows(raw.tolist())
