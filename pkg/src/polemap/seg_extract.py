"""Pole-base point extraction from semantic segmentation masks.

Pole-like classes (pole, traffic sign, traffic light by default) are merged
into one binary mask, clustered with 4-connectivity, and each cluster's
bottom-row run yields a candidate base point.  A base is accepted only when
it rests on ground classes (road, sidewalk, terrain) and the run is wide
enough to rule out far-away slivers.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .annotate import Annotation, AnnotationParams, make_box
from .frames import Pixel

logger = logging.getLogger(__name__)

DEFAULT_POLE_CLASSES = frozenset({"pole", "traffic sign", "traffic light"})
DEFAULT_GROUND_CLASSES = frozenset({"road", "sidewalk", "terrain"})

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class ClassMergeSpec:
    pole_classes: frozenset = DEFAULT_POLE_CLASSES
    ground_classes: frozenset = DEFAULT_GROUND_CLASSES

    def __post_init__(self):
        if self.pole_classes & self.ground_classes:
            raise ValueError("pole and ground class sets must be disjoint")


class SegMask:
    """Per-pixel class ids plus the {class_name: id} table."""

    def __init__(self, class_ids: np.ndarray, class_table: dict[str, int]):
        ids = np.asarray(class_ids)
        if ids.ndim != 2:
            raise ValueError("class_ids must be a 2D array")
        self.class_ids = ids
        self.class_table = dict(class_table)
        known = set(self.class_table.values())
        present = set(np.unique(ids).tolist())
        if not present <= known:
            raise ValueError(f"mask contains class ids missing from the "
                             f"table: {sorted(present - known)}")

    @property
    def height(self) -> int:
        return self.class_ids.shape[0]

    @property
    def width(self) -> int:
        return self.class_ids.shape[1]


class RejectionReason(str, enum.Enum):
    OCCLUDED_BASE = "occluded_base"
    TOO_NARROW = "too_narrow"
    IMAGE_EDGE = "image_edge"


@dataclass(frozen=True)
class Rejected:
    reason: RejectionReason


@dataclass(frozen=True)
class PixelCluster:
    """One 4-connected component of the pole mask.

    rows/cols hold every member pixel; the bottom run is the widest
    contiguous run in the cluster's lowest row (leftmost on ties).
    """

    rows: np.ndarray
    cols: np.ndarray
    row_min: int
    row_max: int
    col_min: int
    col_max: int
    bottom_row: int
    run_col_start: int
    run_col_end: int  # inclusive

    @property
    def bottom_run_width(self) -> int:
        return self.run_col_end - self.run_col_start + 1

    def __len__(self):
        return len(self.rows)


def merge_classes(mask: SegMask, spec: ClassMergeSpec | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Binary (pole_mask, ground_mask) from class-name membership.

    Class names missing from the mask's table are warned about and treated
    as absent; the two outputs are pixel-disjoint by construction.
    """
    spec = spec or ClassMergeSpec()

    def ids_for(names, role):
        found = []
        for name in sorted(names):
            if name in mask.class_table:
                found.append(mask.class_table[name])
            else:
                logger.warning("%s class %r not in mask table; ignored",
                               role, name)
        return found

    pole_ids = ids_for(spec.pole_classes, "pole")
    ground_ids = ids_for(spec.ground_classes, "ground")
    pole_mask = np.isin(mask.class_ids, pole_ids)
    ground_mask = np.isin(mask.class_ids, ground_ids)
    return pole_mask, ground_mask


def _bottom_run(rows: np.ndarray, cols: np.ndarray) -> tuple[int, int, int]:
    bottom = int(rows.max())
    run_cols = np.sort(cols[rows == bottom])
    # split into contiguous runs, keep the longest (leftmost on ties)
    breaks = np.flatnonzero(np.diff(run_cols) > 1) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [len(run_cols)]))
    lengths = stops - starts
    best = int(np.argmax(lengths))
    return bottom, int(run_cols[starts[best]]), int(run_cols[stops[best] - 1])


def find_clusters(pole_mask: np.ndarray) -> list[PixelCluster]:
    """Maximal 4-connected components, ordered by their top-left pixel."""
    labeled, count = ndimage.label(pole_mask, structure=_FOUR_CONNECTED)
    clusters = []
    for label, window in enumerate(ndimage.find_objects(labeled), start=1):
        if window is None:
            continue
        rows, cols = np.nonzero(labeled[window] == label)
        rows = rows + window[0].start
        cols = cols + window[1].start
        bottom, c0, c1 = _bottom_run(rows, cols)
        clusters.append(PixelCluster(
            rows=rows, cols=cols,
            row_min=int(rows.min()), row_max=int(rows.max()),
            col_min=int(cols.min()), col_max=int(cols.max()),
            bottom_row=bottom, run_col_start=c0, run_col_end=c1))
    clusters.sort(key=lambda c: (c.row_min, c.col_min))
    return clusters


def extract_pole_base(cluster: PixelCluster, ground_mask: np.ndarray,
                      min_width_px: int = 3) -> Pixel | Rejected:
    """Base point of one cluster, or the reason it was rejected.

    The base is the horizontal midpoint of the bottom run.  It must not
    touch the image's bottom edge, at least half of the pixels one row
    below the run must be ground, and the run must be at least
    min_width_px wide.
    """
    h = ground_mask.shape[0]
    if cluster.bottom_row >= h - 1:
        return Rejected(RejectionReason.IMAGE_EDGE)
    below = ground_mask[cluster.bottom_row + 1,
                        cluster.run_col_start:cluster.run_col_end + 1]
    if below.sum() * 2 < len(below):
        return Rejected(RejectionReason.OCCLUDED_BASE)
    if cluster.bottom_run_width < min_width_px:
        return Rejected(RejectionReason.TOO_NARROW)
    u = (cluster.run_col_start + cluster.run_col_end) / 2.0
    return Pixel(u, float(cluster.bottom_row))


def mask_to_annotations(mask: SegMask, spec: ClassMergeSpec | None,
                        min_width_px: int, params: AnnotationParams,
                        image_id: str = "") -> list[Annotation]:
    """Full mask pipeline: merge, cluster, extract, box-encode."""
    pole_mask, ground_mask = merge_classes(mask, spec)
    annotations = []
    for cluster in find_clusters(pole_mask):
        base = extract_pole_base(cluster, ground_mask, min_width_px)
        if isinstance(base, Rejected):
            continue
        annotations.append(Annotation(
            image_id=image_id, center=base,
            box=make_box(base, params, mask.width, mask.height),
            source="segmentation"))
    return annotations


def load_mask(image_path, table_path) -> SegMask:
    """8-bit single-channel mask image + sidecar JSON class table."""
    from PIL import Image

    with open(table_path) as f:
        table = {str(k): int(v) for k, v in json.load(f).items()}
    with Image.open(image_path) as img:
        ids = np.asarray(img.convert("L"), dtype=np.int64)
    return SegMask(ids, table)
