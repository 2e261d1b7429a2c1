"""Vector map of pole-like landmarks: loading, indexing, radius queries.

The map file is JSON Lines, one object per feature:
    {"id": "...", "lat": 49.0, "lon": 2.8, "class": "street_light"}
Unknown class strings map to `other_pole` with a warning.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

from .frames import EnuPoint2, GeodeticPoint, enu_to_geodetic, geodetic_to_enu

logger = logging.getLogger(__name__)

FEATURE_CLASSES = ("traffic_sign", "traffic_light", "street_light",
                   "bollard", "other_pole")


class MapLoadError(Exception):
    """Raised for malformed or inconsistent map files."""


@dataclass(frozen=True)
class MapFeature:
    id: str
    position: GeodeticPoint
    enu: EnuPoint2
    klass: str = "other_pole"


class MapSet:
    """Immutable set of map features with a uniform-grid spatial index.

    The grid cell size defaults to the usual query radius; queries at any
    radius remain exact (the index only prunes candidate cells, the final
    distance test is explicit).
    """

    def __init__(self, origin: GeodeticPoint, features, cell_size: float = 150.0):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        feats = list(features)
        ids = set()
        for f in feats:
            if f.id in ids:
                raise MapLoadError(f"duplicate feature id: {f.id!r}")
            ids.add(f.id)
        self.origin = origin
        self.features = tuple(feats)
        self._cell = cell_size
        self._grid: dict[tuple[int, int], list[int]] = {}
        for i, f in enumerate(feats):
            key = (math.floor(f.enu.east / cell_size),
                   math.floor(f.enu.north / cell_size))
            self._grid.setdefault(key, []).append(i)

    def __len__(self):
        return len(self.features)

    def query_radius(self, center: EnuPoint2, r: float) -> list[MapFeature]:
        """All features with ||enu - center|| <= r (closed boundary).

        Results are ordered by ascending distance, ties broken by id.
        """
        if r <= 0:
            raise ValueError("query radius must be positive")
        cell = self._cell
        i0 = math.floor((center.east - r) / cell)
        i1 = math.floor((center.east + r) / cell)
        j0 = math.floor((center.north - r) / cell)
        j1 = math.floor((center.north + r) / cell)
        r2 = r * r
        hits = []
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for k in self._grid.get((i, j), ()):
                    f = self.features[k]
                    d2 = ((f.enu.east - center.east) ** 2
                          + (f.enu.north - center.north) ** 2)
                    if d2 <= r2:
                        hits.append((d2, f.id, f))
        hits.sort(key=lambda h: (h[0], h[1]))
        return [f for _, _, f in hits]


def query_radius(mapset: MapSet, center: EnuPoint2, r: float) -> list[MapFeature]:
    return mapset.query_radius(center, r)


def _parse_feature_line(line: str, lineno: int) -> tuple[str, float, float, str]:
    try:
        obj = json.loads(line)
        fid = str(obj["id"])
        lat = float(obj["lat"])
        lon = float(obj["lon"])
        klass = str(obj.get("class", "other_pole"))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MapLoadError(f"malformed map record at line {lineno}: {exc}") from exc
    return fid, lat, lon, klass


def load_map(path, origin: GeodeticPoint | None = None,
             cell_size: float = 150.0) -> MapSet:
    """Load a JSON Lines map file and convert all features to ENU.

    With origin=None the ENU anchor is the centroid of all features
    (an empty file anchors at lat/lon 0).  Malformed records and duplicate
    ids raise MapLoadError naming the offending line.
    """
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fid, lat, lon, klass = _parse_feature_line(line, lineno)
            try:
                pos = GeodeticPoint(lat, lon)
            except ValueError as exc:
                raise MapLoadError(
                    f"malformed map record at line {lineno}: {exc}") from exc
            if klass not in FEATURE_CLASSES:
                logger.warning("line %d: unknown feature class %r mapped to "
                               "'other_pole'", lineno, klass)
                klass = "other_pole"
            records.append((fid, pos, klass))

    if origin is None:
        if records:
            origin = GeodeticPoint(
                sum(p.latitude for _, p, _ in records) / len(records),
                sum(p.longitude for _, p, _ in records) / len(records),
            )
        else:
            origin = GeodeticPoint(0.0, 0.0)

    features = [MapFeature(fid, pos, geodetic_to_enu(pos, origin), klass)
                for fid, pos, klass in records]
    return MapSet(origin, features, cell_size=cell_size)


def save_map(mapset: MapSet, path):
    """Write the map back as JSON Lines (round-trips with load_map)."""
    with open(path, "w") as f:
        for feat in mapset.features:
            f.write(json.dumps({
                "id": feat.id,
                "lat": feat.position.latitude,
                "lon": feat.position.longitude,
                "class": feat.klass,
            }) + "\n")


def mapset_from_enu(points, origin: GeodeticPoint,
                    cell_size: float = 150.0) -> MapSet:
    """Build a MapSet directly from (id, east, north[, class]) tuples.

    Convenience for synthetic worlds that live in the ENU plane; geodetic
    positions are back-computed so the set still serializes normally.
    """
    features = []
    for rec in points:
        fid, east, north = rec[0], float(rec[1]), float(rec[2])
        klass = rec[3] if len(rec) > 3 else "other_pole"
        enu = EnuPoint2(east, north)
        features.append(MapFeature(str(fid), enu_to_geodetic(enu, origin),
                                   enu, klass))
    return MapSet(origin, features, cell_size=cell_size)
