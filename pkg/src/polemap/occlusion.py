"""Visibility checks for map features using projected lidar depths.

All lidar points are projected into the image once per frame; each feature
is then compared against the average depth of the samples surrounding its
pixel.  A feature whose true camera distance exceeds that local depth by
more than a threshold is occluded by whatever the lidar hit in front of it.

Sample depths are Euclidean ranges from the camera optical center (the
same quantity as the feature's true distance), not optical-axis z, so the
comparison stays consistent away from the image center.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .frames import CameraModel, Pixel, RigidTransform, project_points
from .ground import PointCloud


class VisibilityState(str, enum.Enum):
    VISIBLE = "visible"
    OCCLUDED = "occluded"
    NO_DATA = "no_data"


@dataclass(frozen=True)
class VisibilityVerdict:
    state: VisibilityState
    local_depth: float | None
    true_distance: float


@dataclass
class DepthSampleMap:
    """In-image lidar samples: (N, 2) pixel coordinates and (N,) ranges."""

    pixels: np.ndarray
    depths: np.ndarray

    def __len__(self):
        return len(self.depths)


def build_depth_samples(cloud: PointCloud, lidar_to_camera: RigidTransform,
                        cam: CameraModel) -> DepthSampleMap:
    """Project a scan into the image and keep the in-image samples.

    Exactly the points with positive camera-frame depth and in-bounds pixel
    coordinates are kept; each sample stores the Euclidean distance from
    the camera center to the point.
    """
    if lidar_to_camera.from_frame != cloud.frame:
        raise ValueError(f"transform expects '{lidar_to_camera.from_frame}' "
                         f"points, cloud is in '{cloud.frame}'")
    if lidar_to_camera.to_frame != "camera":
        raise ValueError("transform must map into the camera frame")
    pts_c = lidar_to_camera.apply_array(cloud.points)
    uv, _, in_image = project_points(pts_c, cam)
    ranges = np.linalg.norm(pts_c[in_image], axis=1)
    return DepthSampleMap(uv[in_image], ranges)


def local_depth(samples: DepthSampleMap, at: Pixel, radius_px: float,
                aggregate: str = "mean") -> float | None:
    """Aggregate depth of samples within radius_px of a pixel; None if empty.

    aggregate is "mean" (the default) or "median"; the median resists
    mixed foreground/background samples at object borders.
    """
    if radius_px <= 0:
        raise ValueError("radius_px must be positive")
    if len(samples) == 0:
        return None
    du = samples.pixels[:, 0] - at.u
    dv = samples.pixels[:, 1] - at.v
    near = du * du + dv * dv <= radius_px * radius_px
    if not near.any():
        return None
    if aggregate == "mean":
        return float(samples.depths[near].mean())
    if aggregate == "median":
        return float(np.median(samples.depths[near]))
    raise ValueError(f"unknown aggregate {aggregate!r}")


def visibility(feature_pixel: Pixel, feature_distance: float,
               samples: DepthSampleMap, radius_px: float,
               depth_diff_threshold: float,
               aggregate: str = "mean") -> VisibilityVerdict:
    """Occluded iff the local lidar depth is shorter than the feature's
    distance by more than the threshold; NoData when no samples are near."""
    if feature_distance <= 0:
        raise ValueError("feature_distance must be positive")
    depth = local_depth(samples, feature_pixel, radius_px, aggregate)
    if depth is None:
        return VisibilityVerdict(VisibilityState.NO_DATA, None, feature_distance)
    if feature_distance - depth > depth_diff_threshold:
        state = VisibilityState.OCCLUDED
    else:
        state = VisibilityState.VISIBLE
    return VisibilityVerdict(state, depth, feature_distance)
