"""Detection evaluation: IoU matching, precision/recall, AP, mAP and MAE.

Matching is greedy: predictions are processed in descending confidence and
each one takes the still-unmatched ground truth of highest IoU at or above
the threshold.  AP uses 101-point interpolation over recall and mAP
averages AP over IoU thresholds 0.50:0.05:0.95.  Undefined metrics (no
ground truths, no predictions, no true positives) are flagged, never
silently zeroed.

Boxes are normalized center format (cx, cy, w, h) in [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

IOU_THRESHOLDS_50_95 = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

Box = tuple  # (cx, cy, w, h)


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    box: Box
    confidence: float

    def __post_init__(self):
        if not math.isfinite(self.confidence):
            raise ValueError("confidence must be finite")


def iou(box_a: Box, box_b: Box) -> float:
    """Intersection over union of two center-format boxes; 0 for zero-area."""
    ax0, ay0 = box_a[0] - box_a[2] / 2.0, box_a[1] - box_a[3] / 2.0
    ax1, ay1 = box_a[0] + box_a[2] / 2.0, box_a[1] + box_a[3] / 2.0
    bx0, by0 = box_b[0] - box_b[2] / 2.0, box_b[1] - box_b[3] / 2.0
    bx1, by1 = box_b[0] + box_b[2] / 2.0, box_b[1] + box_b[3] / 2.0
    area_a = max(0.0, ax1 - ax0) * max(0.0, ay1 - ay0)
    area_b = max(0.0, bx1 - bx0) * max(0.0, by1 - by0)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


@dataclass
class MatchResult:
    """One image's matching: gt index (or None) per prediction, in input
    order, plus the matched IoUs and the per-gt matched flags."""

    pred_match: list
    pred_iou: list
    gt_matched: list

    @property
    def tp(self) -> int:
        return sum(1 for m in self.pred_match if m is not None)

    @property
    def fp(self) -> int:
        return sum(1 for m in self.pred_match if m is None)

    @property
    def fn(self) -> int:
        return sum(1 for m in self.gt_matched if not m)


def match_detections(preds: Sequence[PredictionRecord], gts: Sequence[Box],
                     iou_threshold: float) -> MatchResult:
    """Greedy one-to-one matching, deterministic.

    Confidence ties keep input order; IoU ties go to the lowest gt index.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    pred_match: list = [None] * len(preds)
    pred_iou: list = [None] * len(preds)
    gt_matched = [False] * len(gts)
    for i in order:
        best_j = None
        best_iou = iou_threshold
        for j, gt in enumerate(gts):
            if gt_matched[j]:
                continue
            v = iou(preds[i].box, gt)
            if v > best_iou or (best_j is None and v == best_iou):
                best_j, best_iou = j, v
        if best_j is not None:
            pred_match[i] = best_j
            pred_iou[i] = best_iou
            gt_matched[best_j] = True
    return MatchResult(pred_match, pred_iou, gt_matched)


def _sorted_image_ids(preds_by_image: Mapping, gts_by_image: Mapping):
    return sorted(set(preds_by_image) | set(gts_by_image))


def _match_images(preds_by_image, gts_by_image, iou_threshold,
                  conf_threshold) -> dict:
    matches = {}
    for image_id in _sorted_image_ids(preds_by_image, gts_by_image):
        preds = [p for p in preds_by_image.get(image_id, ())
                 if p.confidence >= conf_threshold]
        matches[image_id] = (preds, match_detections(
            preds, gts_by_image.get(image_id, ()), iou_threshold))
    return matches


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    precision_defined: bool
    recall_defined: bool


def precision_recall(preds_by_image: Mapping, gts_by_image: Mapping,
                     iou_threshold: float = 0.5,
                     conf_threshold: float = 0.25) -> PrecisionRecall:
    """Micro-averaged precision/recall after confidence filtering.

    With zero kept predictions the precision is vacuous and reported as 1.0
    with precision_defined=False; likewise recall with zero ground truths.
    """
    tp = fp = fn = 0
    for _, match in _match_images(preds_by_image, gts_by_image,
                                  iou_threshold, conf_threshold).values():
        tp += match.tp
        fp += match.fp
        fn += match.fn
    p_def = (tp + fp) > 0
    r_def = (tp + fn) > 0
    return PrecisionRecall(
        precision=tp / (tp + fp) if p_def else 1.0,
        recall=tp / (tp + fn) if r_def else 1.0,
        tp=tp, fp=fp, fn=fn,
        precision_defined=p_def, recall_defined=r_def)


def _flat_detection_curve(preds_by_image, gts_by_image, iou_threshold):
    """Cumulative (confidence, tp, fp, n_gt) sweep across all images."""
    confs = []
    is_tp = []
    n_gt = 0
    for image_id in _sorted_image_ids(preds_by_image, gts_by_image):
        gts = gts_by_image.get(image_id, ())
        n_gt += len(gts)
        preds = list(preds_by_image.get(image_id, ()))
        match = match_detections(preds, gts, iou_threshold)
        for i, p in enumerate(preds):
            confs.append(p.confidence)
            is_tp.append(match.pred_match[i] is not None)
    confs = np.asarray(confs, dtype=float)
    is_tp = np.asarray(is_tp, dtype=bool)
    order = np.argsort(-confs, kind="stable")
    return confs[order], is_tp[order], n_gt


@dataclass(frozen=True)
class ApValue:
    value: float | None
    defined: bool


def average_precision(preds_by_image: Mapping, gts_by_image: Mapping,
                      iou_threshold: float) -> ApValue:
    """AP by 101-point interpolation over the confidence sweep.

    Undefined (and excluded from mAP averaging) when there are no ground
    truths at all.
    """
    confs, is_tp, n_gt = _flat_detection_curve(preds_by_image, gts_by_image,
                                               iou_threshold)
    if n_gt == 0:
        return ApValue(None, False)
    if len(confs) == 0:
        return ApValue(0.0, True)
    cum_tp = np.cumsum(is_tp)
    cum_fp = np.cumsum(~is_tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # precision envelope (non-increasing from the right)
    env = np.maximum.accumulate(precision[::-1])[::-1]
    points = np.linspace(0.0, 1.0, 101)
    idx = np.searchsorted(recall, points, side="left")
    interp = np.where(idx < len(recall), env[np.minimum(idx, len(recall) - 1)], 0.0)
    return ApValue(float(interp.mean()), True)


@dataclass(frozen=True)
class MapResult:
    value: float | None
    defined: bool
    ap_per_threshold: dict


def map_50_95(preds_by_image: Mapping, gts_by_image: Mapping) -> MapResult:
    """Mean AP over IoU in {0.50, 0.55, ..., 0.95}."""
    per_thr = {thr: average_precision(preds_by_image, gts_by_image, thr)
               for thr in IOU_THRESHOLDS_50_95}
    values = [ap.value for ap in per_thr.values() if ap.defined]
    if not values:
        return MapResult(None, False, per_thr)
    return MapResult(sum(values) / len(values), True, per_thr)


@dataclass(frozen=True)
class MaeResult:
    value: float | None
    defined: bool
    n_tp: int


def horizontal_mae(preds_by_image: Mapping, gts_by_image: Mapping,
                   image_width: float, iou_threshold: float = 0.5,
                   conf_threshold: float = 0.25, euclidean: bool = False,
                   image_height: float | None = None) -> MaeResult:
    """Mean absolute center error over true positives, in pixels.

    Horizontal |u| error by default; euclidean=True switches to the 2D
    center distance (image_height then required).
    """
    if euclidean and image_height is None:
        raise ValueError("euclidean MAE needs image_height")
    errors = []
    for image_id, (preds, match) in _match_images(
            preds_by_image, gts_by_image, iou_threshold,
            conf_threshold).items():
        gts = gts_by_image.get(image_id, ())
        for i, j in enumerate(match.pred_match):
            if j is None:
                continue
            du = (preds[i].box[0] - gts[j][0]) * image_width
            if euclidean:
                dv = (preds[i].box[1] - gts[j][1]) * image_height
                errors.append(math.hypot(du, dv))
            else:
                errors.append(abs(du))
    if not errors:
        return MaeResult(None, False, 0)
    return MaeResult(sum(errors) / len(errors), True, len(errors))


def pr_curve(preds_by_image: Mapping, gts_by_image: Mapping,
             iou_threshold: float = 0.5) -> list[tuple]:
    """(recall, precision) samples, one per distinct confidence cut,
    swept in descending confidence."""
    confs, is_tp, n_gt = _flat_detection_curve(preds_by_image, gts_by_image,
                                               iou_threshold)
    if len(confs) == 0:
        return []
    cum_tp = np.cumsum(is_tp)
    cum_fp = np.cumsum(~is_tp)
    # last index of each distinct confidence = full effect of that cut
    last = np.flatnonzero(np.diff(confs) != 0.0)
    cut_idx = np.concatenate((last, [len(confs) - 1]))
    samples = []
    for k in cut_idx:
        tp, fp = int(cum_tp[k]), int(cum_fp[k])
        recall = tp / n_gt if n_gt else 0.0
        samples.append((recall, tp / (tp + fp)))
    return samples


def nms(preds: Sequence[PredictionRecord],
        iou_threshold: float = 0.5) -> list[PredictionRecord]:
    """Optional non-maximum suppression for raw detector outputs."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    kept: list[int] = []
    for i in order:
        if all(iou(preds[i].box, preds[j].box) < iou_threshold for j in kept):
            kept.append(i)
    return [preds[i] for i in sorted(kept)]


@dataclass
class EvalReport:
    precision: float
    recall: float
    precision_defined: bool
    recall_defined: bool
    tp: int
    fp: int
    fn: int
    ap_per_iou: dict
    map_50_95: float | None
    map_defined: bool
    mae_px: float | None
    mae_defined: bool
    mae_n_tp: int
    pr_curve: list
    conf_threshold: float
    iou_threshold: float
    image_width: float

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
            "ap_per_iou": {f"{thr:.2f}": ap.value
                           for thr, ap in self.ap_per_iou.items()},
            "map_50_95": self.map_50_95,
            "map_defined": self.map_defined,
            "mae_px": self.mae_px,
            "mae_defined": self.mae_defined,
            "mae_n_tp": self.mae_n_tp,
            "pr_curve": [[r, p] for r, p in self.pr_curve],
            "params": {"conf_threshold": self.conf_threshold,
                       "iou_threshold": self.iou_threshold,
                       "image_width": self.image_width},
        }


def evaluate_detections(preds_by_image: Mapping, gts_by_image: Mapping,
                        image_width: float, iou_threshold: float = 0.5,
                        conf_threshold: float = 0.25,
                        euclidean_mae: bool = False,
                        image_height: float | None = None) -> EvalReport:
    """Full report: P/R at the confidence threshold, AP sweep, mAP, MAE."""
    pr = precision_recall(preds_by_image, gts_by_image, iou_threshold,
                          conf_threshold)
    m = map_50_95(preds_by_image, gts_by_image)
    mae = horizontal_mae(preds_by_image, gts_by_image, image_width,
                         iou_threshold, conf_threshold, euclidean_mae,
                         image_height)
    return EvalReport(
        precision=pr.precision, recall=pr.recall,
        precision_defined=pr.precision_defined,
        recall_defined=pr.recall_defined,
        tp=pr.tp, fp=pr.fp, fn=pr.fn,
        ap_per_iou=m.ap_per_threshold,
        map_50_95=m.value, map_defined=m.defined,
        mae_px=mae.value, mae_defined=mae.defined, mae_n_tp=mae.n_tp,
        pr_curve=pr_curve(preds_by_image, gts_by_image, iou_threshold),
        conf_threshold=conf_threshold, iou_threshold=iou_threshold,
        image_width=image_width)


def load_prediction_file(path, image_id: str) -> list[PredictionRecord]:
    """Lines `class_index cx cy w h [confidence]`; missing confidence
    defaults to 1.0.  Centers are clamped into [0, 1]."""
    records = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            cx, cy, w, h = (float(v) for v in parts[1:5])
            conf = float(parts[5]) if len(parts) > 5 else 1.0
            box = (min(max(cx, 0.0), 1.0), min(max(cy, 0.0), 1.0),
                   min(max(w, 0.0), 1.0), min(max(h, 0.0), 1.0))
            records.append(PredictionRecord(image_id, box, conf))
    return records


def save_report(report: EvalReport, path, pr_curve_csv=None):
    with open(path, "w") as f:
        json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    if pr_curve_csv:
        with open(pr_curve_csv, "w") as f:
            f.write("recall,precision\n")
            for r, p in report.pr_curve:
                f.write(f"{r:.9f},{p:.9f}\n")
