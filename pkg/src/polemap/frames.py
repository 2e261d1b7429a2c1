"""Coordinate frames, rigid transforms and pinhole projection.

Frame conventions used throughout the package:

  map (ENU):  x = East, y = North, z = Up, anchored at a geodetic origin.
  vehicle:    x forward, y left, z up; origin at height h above the ground,
              pose given as planar (x, y, theta) in the map frame with
              theta counterclockwise from East.
  lidar:      sensor frame of the point clouds.
  camera:     z forward (optical axis), x right, y down.
  image:      u right, v down, in pixels; (0, 0) is the top-left corner.

All single-point operations are pure functions over small immutable value
types; batched array helpers are provided for per-cloud work.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# WGS-84 ellipsoid
_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_WGS84_E2 = _WGS84_F * (2.0 - _WGS84_F)

ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class GeodeticPoint:
    """WGS-84 latitude/longitude in degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError(f"latitude out of range [-90, 90]: {self.latitude}")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"longitude out of range [-180, 180]: {self.longitude}")


@dataclass(frozen=True)
class EnuPoint2:
    """2D point in the local East-North plane, meters."""

    east: float
    north: float

    def __post_init__(self):
        if not (math.isfinite(self.east) and math.isfinite(self.north)):
            raise ValueError("non-finite ENU coordinates")


def _normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    """Planar vehicle pose: position in the map frame plus heading.

    theta is counterclockwise from East, normalized to (-pi, pi].
    """

    x: float
    y: float
    theta: float
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", _normalize_angle(self.theta))


@dataclass(frozen=True)
class Point3:
    """3D point tagged with the frame it is expressed in."""

    x: float
    y: float
    z: float
    frame: str

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


class RigidTransform:
    """Rotation + translation mapping points from `from_frame` to `to_frame`.

    p_to = rotation @ p_from + translation.  The rotation must be orthonormal
    with determinant +1 (checked to 1e-9 on construction).
    """

    __slots__ = ("rotation", "translation", "from_frame", "to_frame")

    def __init__(self, rotation, translation, from_frame: str, to_frame: str):
        R = np.asarray(rotation, dtype=float).reshape(3, 3)
        t = np.asarray(translation, dtype=float).reshape(3)
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err >= ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (|R'R - I| = {err:.3g})")
        if np.linalg.det(R) < 0.0:
            raise ValueError("rotation has determinant -1 (reflection)")
        R.setflags(write=False)
        t.setflags(write=False)
        self.rotation = R
        self.translation = t
        self.from_frame = from_frame
        self.to_frame = to_frame

    @classmethod
    def identity(cls, frame: str) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), frame, frame)

    @classmethod
    def from_matrix(cls, mat, from_frame: str, to_frame: str) -> "RigidTransform":
        """Build from a 4x4 row-major homogeneous matrix."""
        m = np.asarray(mat, dtype=float).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3], from_frame, to_frame)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        R_inv = self.rotation.T
        return RigidTransform(R_inv, -R_inv @ self.translation,
                              self.to_frame, self.from_frame)

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """self  after `inner`: maps inner.from_frame to self.to_frame."""
        if inner.to_frame != self.from_frame:
            raise ValueError(
                f"cannot compose: inner maps to '{inner.to_frame}' "
                f"but outer expects '{self.from_frame}'")
        return RigidTransform(self.rotation @ inner.rotation,
                              self.rotation @ inner.translation + self.translation,
                              inner.from_frame, self.to_frame)

    def apply_array(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def __repr__(self):
        return (f"RigidTransform({self.from_frame!r} -> {self.to_frame!r}, "
                f"t={self.translation.tolist()})")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera intrinsics with optional plumb-bob distortion.

    fx, fy are focal lengths in pixels, (cx, cy) is the principal point and
    distortion holds (k1, k2, p1, p2, k3); an all-zero vector is the exact
    undistorted pinhole.  extrinsics, when set, maps vehicle-frame points
    into the camera frame.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    extrinsics: RigidTransform | None = None

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if len(self.distortion) != 5:
            raise ValueError("distortion must be (k1, k2, p1, p2, k3)")

    @property
    def has_distortion(self) -> bool:
        return any(d != 0.0 for d in self.distortion)


@dataclass(frozen=True)
class Pixel:
    """Image coordinates; depth is meters along the camera optical axis.

    depth is None for pixels that do not come from a 3D projection
    (e.g. bases extracted from segmentation masks).
    """

    u: float
    v: float
    depth: float | None = None


@dataclass(frozen=True)
class BehindCamera:
    """Projection outcome for points with non-positive camera-frame depth."""


@dataclass(frozen=True)
class OutOfImage:
    """Projection outcome for points outside image bounds; carries the
    unclipped pixel coordinates."""

    u: float
    v: float
    depth: float


def _geodetic_to_ecef(p: GeodeticPoint) -> np.ndarray:
    lat = math.radians(p.latitude)
    lon = math.radians(p.longitude)
    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    n = _WGS84_A / math.sqrt(1.0 - _WGS84_E2 * sin_lat * sin_lat)
    return np.array([
        n * cos_lat * math.cos(lon),
        n * cos_lat * math.sin(lon),
        n * (1.0 - _WGS84_E2) * sin_lat,
    ])


def geodetic_to_enu(p: GeodeticPoint, origin: GeodeticPoint) -> EnuPoint2:
    """Convert geodetic coordinates to the East-North plane about `origin`.

    Uses the WGS-84 ECEF -> local-tangent-plane formulation, exact at city
    scale; the Up component is dropped.  Callers should keep points within
    ~100 km of the origin.
    """
    d = _geodetic_to_ecef(p) - _geodetic_to_ecef(origin)
    lat0 = math.radians(origin.latitude)
    lon0 = math.radians(origin.longitude)
    sin_lat, cos_lat = math.sin(lat0), math.cos(lat0)
    sin_lon, cos_lon = math.sin(lon0), math.cos(lon0)
    east = -sin_lon * d[0] + cos_lon * d[1]
    north = -sin_lat * cos_lon * d[0] - sin_lat * sin_lon * d[1] + cos_lat * d[2]
    return EnuPoint2(east, north)


def enu_to_geodetic(p: EnuPoint2, origin: GeodeticPoint) -> GeodeticPoint:
    """Invert geodetic_to_enu by Newton refinement (sub-micron at city scale)."""
    lat0 = math.radians(origin.latitude)
    sin_lat = math.sin(lat0)
    w = math.sqrt(1.0 - _WGS84_E2 * sin_lat * sin_lat)
    # local meridian / prime-vertical curvature radii as the initial Jacobian
    m_rad = _WGS84_A * (1.0 - _WGS84_E2) / w ** 3
    n_rad = _WGS84_A / w
    lat = origin.latitude + math.degrees(p.north / m_rad)
    lon = origin.longitude + math.degrees(p.east / (n_rad * math.cos(lat0)))
    for _ in range(2):
        guess = geodetic_to_enu(GeodeticPoint(lat, lon), origin)
        lat += math.degrees((p.north - guess.north) / m_rad)
        lon += math.degrees((p.east - guess.east) / (n_rad * math.cos(lat0)))
    return GeodeticPoint(lat, lon)


def map_to_vehicle(p: EnuPoint2, pose: Pose) -> Point3:
    """Express a map-frame 2D point in the vehicle frame.

    [vx, vy] = [[cos t, sin t], [-sin t, cos t]] @ [mx - x, my - y].
    z is left at 0 until a height is assigned.
    """
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx, dy = p.east - pose.x, p.north - pose.y
    return Point3(c * dx + s * dy, -s * dx + c * dy, 0.0, "vehicle")


def vehicle_to_map(p: Point3, pose: Pose) -> EnuPoint2:
    """Inverse of map_to_vehicle (x-y only)."""
    if p.frame != "vehicle":
        raise ValueError(f"expected a vehicle-frame point, got '{p.frame}'")
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return EnuPoint2(c * p.x - s * p.y + pose.x, s * p.x + c * p.y + pose.y)


def assign_fixed_height(p: Point3, h: float) -> Point3:
    """Place a vehicle-frame point at ground level: z := -h.

    h is the height of the vehicle-frame x-y plane above the ground.
    Idempotent: z is overwritten, not accumulated.
    """
    if p.frame != "vehicle":
        raise ValueError(f"expected a vehicle-frame point, got '{p.frame}'")
    return Point3(p.x, p.y, -h, "vehicle")


def transform_point(p: Point3, t: RigidTransform) -> Point3:
    if p.frame != t.from_frame:
        raise ValueError(
            f"frame mismatch: point is in '{p.frame}', transform expects "
            f"'{t.from_frame}'")
    r = t.rotation
    x = r[0, 0] * p.x + r[0, 1] * p.y + r[0, 2] * p.z + t.translation[0]
    y = r[1, 0] * p.x + r[1, 1] * p.y + r[1, 2] * p.z + t.translation[1]
    z = r[2, 0] * p.x + r[2, 1] * p.y + r[2, 2] * p.z + t.translation[2]
    return Point3(x, y, z, t.to_frame)


def _distort(x: np.ndarray, y: np.ndarray, dist) -> tuple:
    k1, k2, p1, p2, k3 = dist
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd


def project_to_image(p: Point3, cam: CameraModel):
    """Project a camera-frame point through the pinhole model.

    Returns a Pixel for valid in-image projections, BehindCamera when
    z <= 0, or OutOfImage (with the unclipped coordinates) otherwise.
    """
    if p.frame != "camera":
        raise ValueError(f"expected a camera-frame point, got '{p.frame}'")
    if p.z <= 0.0:
        return BehindCamera()
    x, y = p.x / p.z, p.y / p.z
    if cam.has_distortion:
        x, y = _distort(np.float64(x), np.float64(y), cam.distortion)
    u = cam.cx + cam.fx * x
    v = cam.cy + cam.fy * y
    if 0.0 <= u < cam.width and 0.0 <= v < cam.height:
        return Pixel(float(u), float(v), p.z)
    return OutOfImage(float(u), float(v), p.z)


def project_points(points: np.ndarray, cam: CameraModel):
    """Vectorized pinhole projection of (N, 3) camera-frame points.

    Returns (uv, depth, in_image): uv is (N, 2) with NaN where z <= 0,
    depth is the camera-frame z, and in_image marks points with positive
    depth landing inside the image bounds.
    """
    pts = np.asarray(points, dtype=float)
    z = pts[:, 2]
    front = z > 0.0
    uv = np.full((len(pts), 2), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(front, pts[:, 0] / z, np.nan)
        y = np.where(front, pts[:, 1] / z, np.nan)
    if cam.has_distortion:
        x, y = _distort(x, y, cam.distortion)
    uv[:, 0] = cam.cx + cam.fx * x
    uv[:, 1] = cam.cy + cam.fy * y
    in_image = (front & (uv[:, 0] >= 0.0) & (uv[:, 0] < cam.width)
                & (uv[:, 1] >= 0.0) & (uv[:, 1] < cam.height))
    return uv, z, in_image


def load_calibration(path) -> tuple[CameraModel, RigidTransform]:
    """Read the calibration JSON file.

    Expected keys: `intrinsics` {fx, fy, cx, cy, width, height, distortion}
    plus `vehicle_to_camera` and `vehicle_to_lidar`, each a 4x4 row-major
    homogeneous matrix.  Returns (camera, vehicle_to_lidar).
    """
    with open(path) as f:
        raw = json.load(f)
    intr = raw["intrinsics"]
    cam_extr = RigidTransform.from_matrix(raw["vehicle_to_camera"],
                                          "vehicle", "camera")
    cam = CameraModel(
        fx=float(intr["fx"]), fy=float(intr["fy"]),
        cx=float(intr["cx"]), cy=float(intr["cy"]),
        width=int(intr["width"]), height=int(intr["height"]),
        distortion=tuple(float(d) for d in intr.get("distortion", (0,) * 5)),
        extrinsics=cam_extr,
    )
    lidar_extr = RigidTransform.from_matrix(raw["vehicle_to_lidar"],
                                            "vehicle", "lidar")
    return cam, lidar_extr


def save_calibration(cam: CameraModel, vehicle_to_lidar: RigidTransform, path):
    if cam.extrinsics is None:
        raise ValueError("camera model has no vehicle_to_camera extrinsics")
    doc = {
        "intrinsics": {
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height,
            "distortion": list(cam.distortion),
        },
        "vehicle_to_camera": cam.extrinsics.as_matrix().tolist(),
        "vehicle_to_lidar": vehicle_to_lidar.as_matrix().tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
