import math

import numpy as np
import pytest

from polemap.evaluate import (PredictionRecord, average_precision,
                              evaluate_detections, horizontal_mae, iou,
                              map_50_95, match_detections, nms,
                              pr_curve, precision_recall,
                              load_prediction_file)

from oracles import (ap_by_threshold_enumeration, greedy_match_counts,
                     iou_center, max_bipartite_tp)


def pred(box, conf, image="im0"):
    return PredictionRecord(image, tuple(box), conf)


def corner_to_center(x0, y0, w, h):
    return (x0 + w / 2.0, y0 + h / 2.0, w, h)


def random_instance(rng, max_boxes=10, scale=1.0):
    n_gt = int(rng.integers(0, max_boxes + 1))
    n_pred = int(rng.integers(0, max_boxes + 1))
    gts = [tuple(rng.uniform(0.1, 0.9, 2)) + tuple(rng.uniform(0.05, 0.3, 2))
           for _ in range(n_gt)]
    preds = []
    for _ in range(n_pred):
        if gts and rng.random() < 0.6:
            base = gts[int(rng.integers(0, len(gts)))]
            jitter = rng.normal(0, 0.03 * scale, 4)
            box = tuple(np.clip(np.array(base) + jitter, 0.01, 1.0))
        else:
            box = tuple(rng.uniform(0.1, 0.9, 2)) + tuple(
                rng.uniform(0.05, 0.3, 2))
        preds.append(pred(box, float(rng.random())))
    return preds, gts


class TestIou:
    def test_identical(self):
        b = (0.5, 0.5, 0.2, 0.4)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou((0.2, 0.2, 0.1, 0.1), (0.8, 0.8, 0.1, 0.1)) == 0.0

    def test_corner_example(self):
        # corner boxes (0,0,2,2) and (1,0,2,2): IoU = 2/6
        a = corner_to_center(0, 0, 2, 2)
        b = corner_to_center(1, 0, 2, 2)
        assert iou(a, b) == pytest.approx(2.0 / 6.0)

    def test_zero_area(self):
        assert iou((0.5, 0.5, 0.0, 0.2), (0.5, 0.5, 0.2, 0.2)) == 0.0

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(157)
        for _ in range(300):
            a = tuple(rng.uniform(0, 1, 2)) + tuple(rng.uniform(0.01, 0.5, 2))
            b = tuple(rng.uniform(0, 1, 2)) + tuple(rng.uniform(0.01, 0.5, 2))
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(iou_center(a, b))


class TestMatchDetections:
    def test_perfect_single(self):
        gt = [(0.5, 0.5, 0.2, 0.2)]
        m = match_detections([pred(gt[0], 0.9)], gt, 0.5)
        assert (m.tp, m.fp, m.fn) == (1, 0, 0)
        assert m.pred_iou[0] == 1.0

    def test_unmatched_prediction(self):
        m = match_detections([pred((0.5, 0.5, 0.2, 0.2), 0.9)], [], 0.5)
        assert (m.tp, m.fp, m.fn) == (0, 1, 0)

    def test_counts_match_loop_oracle_and_never_beat_optimal(self):
        rng = np.random.default_rng(163)
        agree = 0
        n = 400
        for _ in range(n):
            preds, gts = random_instance(rng)
            m = match_detections(preds, gts, 0.5)
            tp, fp, fn, _ = greedy_match_counts(
                [p.box for p in preds], [p.confidence for p in preds],
                gts, 0.5)
            assert (m.tp, m.fp, m.fn) == (tp, fp, fn)
            optimal = max_bipartite_tp([p.box for p in preds], gts, 0.5)
            assert m.tp <= optimal
            agree += (m.tp == optimal)
        assert agree / n >= 0.95

    def test_confidence_tie_keeps_input_order(self):
        gt = [(0.5, 0.5, 0.2, 0.2)]
        a = pred((0.5, 0.5, 0.2, 0.2), 0.7)
        b = pred((0.52, 0.5, 0.2, 0.2), 0.7)
        m = match_detections([a, b], gt, 0.5)
        assert m.pred_match[0] == 0 and m.pred_match[1] is None

    def test_one_to_one(self):
        rng = np.random.default_rng(167)
        for _ in range(100):
            preds, gts = random_instance(rng)
            m = match_detections(preds, gts, 0.5)
            used = [j for j in m.pred_match if j is not None]
            assert len(used) == len(set(used))
            assert m.tp + m.fn == len(gts)
            assert m.tp + m.fp == len(preds)


class TestPrecisionRecall:
    def test_all_matched(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        pr = precision_recall(preds, gts)
        assert (pr.precision, pr.recall) == (1.0, 1.0)
        assert pr.precision_defined and pr.recall_defined

    def test_no_predictions_flagged(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        pr = precision_recall({}, gts)
        assert pr.precision == 1.0 and not pr.precision_defined
        assert pr.recall == 0.0 and pr.recall_defined

    def test_no_gts_flagged(self):
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        pr = precision_recall(preds, {})
        assert not pr.recall_defined
        assert pr.precision == 0.0

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(173)
        for _ in range(100):
            preds_by, gts_by = {}, {}
            tp = fp = fn = 0
            for k in range(int(rng.integers(1, 4))):
                preds, gts = random_instance(rng, max_boxes=6)
                kept = [p for p in preds if p.confidence >= 0.25]
                t, f, n, _ = greedy_match_counts(
                    [p.box for p in kept], [p.confidence for p in kept],
                    gts, 0.5)
                tp, fp, fn = tp + t, fp + f, fn + n
                preds_by[f"im{k}"] = preds
                gts_by[f"im{k}"] = gts
            pr = precision_recall(preds_by, gts_by)
            assert (pr.tp, pr.fp, pr.fn) == (tp, fp, fn)
            if pr.precision_defined:
                assert pr.precision == tp / (tp + fp)
            if pr.recall_defined:
                assert pr.recall == tp / (tp + fn)

    def test_lower_threshold_never_lowers_recall(self):
        rng = np.random.default_rng(179)
        for _ in range(50):
            preds, gts = random_instance(rng)
            preds_by, gts_by = {"a": preds}, {"a": gts}
            if not gts:
                continue
            r_hi = precision_recall(preds_by, gts_by, conf_threshold=0.6).recall
            r_lo = precision_recall(preds_by, gts_by, conf_threshold=0.1).recall
            assert r_lo >= r_hi


class TestAveragePrecision:
    def test_single_correct(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        assert average_precision(preds, gts, 0.5).value == pytest.approx(1.0)

    def test_wrong_then_correct(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.9, 0.9, 0.05, 0.05), 0.9, "a"),
                       pred((0.5, 0.5, 0.2, 0.2), 0.5, "a")]}
        assert average_precision(preds, gts, 0.5).value == pytest.approx(0.5)

    def test_no_gts_undefined(self):
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        ap = average_precision(preds, {}, 0.5)
        assert not ap.defined and ap.value is None

    def test_matches_threshold_enumeration_oracle(self):
        rng = np.random.default_rng(181)
        for _ in range(200):
            preds, gts = random_instance(rng, max_boxes=8)
            if not gts:
                continue
            m = match_detections(preds, gts, 0.5)
            records = [(p.confidence, m.pred_match[i] is not None)
                       for i, p in enumerate(preds)]
            expect = ap_by_threshold_enumeration(records, len(gts))
            got = average_precision({"a": preds}, {"a": gts}, 0.5)
            assert got.value == pytest.approx(expect, abs=1e-9)

    def test_invariant_under_monotonic_rescale(self):
        rng = np.random.default_rng(191)
        for _ in range(50):
            preds, gts = random_instance(rng)
            if not gts:
                continue
            scaled = [PredictionRecord(p.image_id, p.box,
                                       0.1 + 0.5 * p.confidence ** 3)
                      for p in preds]
            a = average_precision({"a": preds}, {"a": gts}, 0.5).value
            b = average_precision({"a": scaled}, {"a": gts}, 0.5).value
            assert a == pytest.approx(b, abs=1e-12)


class TestMap5095:
    def test_perfect(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        assert map_50_95(preds, gts).value == pytest.approx(1.0)

    def test_zero_predictions(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        out = map_50_95({}, gts)
        assert out.value == 0.0 and out.defined

    def test_equals_mean_of_aps(self):
        rng = np.random.default_rng(193)
        for _ in range(20):
            preds, gts = random_instance(rng)
            if not gts:
                continue
            out = map_50_95({"a": preds}, {"a": gts})
            aps = [average_precision({"a": preds}, {"a": gts}, t).value
                   for t in out.ap_per_threshold]
            assert out.value == pytest.approx(sum(aps) / len(aps))

    def test_no_gts_propagates_flag(self):
        out = map_50_95({"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}, {})
        assert not out.defined and out.value is None


class TestHorizontalMae:
    def test_two_errors(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2), (0.2, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5 + 2 / 100, 0.5, 0.2, 0.2), 0.9, "a"),
                       pred((0.2 + 4 / 100, 0.5, 0.2, 0.2), 0.8, "a")]}
        out = horizontal_mae(preds, gts, image_width=100.0)
        assert out.value == pytest.approx(3.0)
        assert out.n_tp == 2

    def test_exact_centers(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        assert horizontal_mae(preds, gts, 640.0).value == 0.0

    def test_zero_tp_flagged(self):
        out = horizontal_mae({}, {"a": [(0.5, 0.5, 0.2, 0.2)]}, 640.0)
        assert not out.defined and out.value is None

    def test_matches_recomputation(self):
        rng = np.random.default_rng(197)
        for _ in range(100):
            preds, gts = random_instance(rng)
            kept = [p for p in preds if p.confidence >= 0.25]
            m = match_detections(kept, gts, 0.5)
            errs = [abs(kept[i].box[0] - gts[j][0]) * 1280.0
                    for i, j in enumerate(m.pred_match) if j is not None]
            out = horizontal_mae({"a": preds}, {"a": gts}, 1280.0)
            if not errs:
                assert not out.defined
            else:
                assert out.value == pytest.approx(sum(errs) / len(errs),
                                                  abs=1e-12)

    def test_euclidean_variant(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5 + 3 / 100, 0.5 + 4 / 100, 0.2, 0.2),
                            0.9, "a")]}
        out = horizontal_mae(preds, gts, image_width=100.0, euclidean=True,
                             image_height=100.0)
        assert out.value == pytest.approx(5.0)


class TestPrCurve:
    def test_single_correct(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        assert pr_curve(preds, gts, 0.5) == [(1.0, 1.0)]

    def test_empty(self):
        assert pr_curve({}, {"a": [(0.5, 0.5, 0.2, 0.2)]}, 0.5) == []

    def test_samples_consistent_with_precision_recall(self):
        rng = np.random.default_rng(199)
        for _ in range(40):
            preds, gts = random_instance(rng)
            if not gts:
                continue
            curve = pr_curve({"a": preds}, {"a": gts}, 0.5)
            recalls = [r for r, _ in curve]
            assert recalls == sorted(recalls)
            for (r, p), cut in zip(curve, sorted(
                    {x.confidence for x in preds}, reverse=True)):
                check = precision_recall({"a": preds}, {"a": gts},
                                         conf_threshold=cut)
                assert r == pytest.approx(check.recall)
                assert p == pytest.approx(check.precision)


class TestNms:
    def test_suppresses_overlaps(self):
        a = pred((0.5, 0.5, 0.2, 0.2), 0.9)
        b = pred((0.51, 0.5, 0.2, 0.2), 0.7)
        c = pred((0.9, 0.9, 0.1, 0.1), 0.8)
        kept = nms([a, b, c], 0.5)
        assert a in kept and c in kept and b not in kept


class TestPredictionFile:
    def test_load_with_and_without_confidence(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("0 0.5 0.5 0.2 0.2 0.8\n0 0.4 0.4 0.1 0.1\n")
        recs = load_prediction_file(p, "x")
        assert recs[0].confidence == 0.8
        assert recs[1].confidence == 1.0

    def test_centers_clamped(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("0 1.5 -0.2 0.2 0.2 0.8\n")
        (rec,) = load_prediction_file(p, "x")
        assert rec.box[0] == 1.0 and rec.box[1] == 0.0


class TestReport:
    def test_full_report_fields(self):
        gts = {"a": [(0.5, 0.5, 0.2, 0.2)]}
        preds = {"a": [pred((0.5, 0.5, 0.2, 0.2), 0.9, "a")]}
        rep = evaluate_detections(preds, gts, image_width=1280.0)
        d = rep.to_json_dict()
        assert d["precision"] == 1.0 and d["recall"] == 1.0
        assert d["map_50_95"] == pytest.approx(1.0)
        assert d["mae_px"] == 0.0
        assert d["counts"] == {"tp": 1, "fp": 0, "fn": 0}
        assert len(d["ap_per_iou"]) == 10
