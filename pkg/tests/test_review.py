import json
import threading
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from polemap.annotate import (Annotation, AnnotationParams, AuditRecord,
                              Decision, export_dataset, make_box,
                              read_label_file)
from polemap.frames import Pixel
from polemap.review import ReviewStore, create_app

PARAMS = AnnotationParams(vehicle_height_h=1.0, box_width_px=100.0,
                          box_height_px=100.0)
W, H = 1280, 720


def make_dataset(tmp_path, n_frames=3, n_annotations=2) -> Path:
    rng = np.random.default_rng(7)
    frames = []
    audits = {}
    for k in range(n_frames):
        image_id = f"frame_{k:03d}"
        anns = []
        recs = []
        for i in range(n_annotations):
            pix = Pixel(float(rng.uniform(100, W - 100)),
                        float(rng.uniform(100, H - 100)))
            anns.append(Annotation(image_id, pix,
                                   make_box(pix, PARAMS, W, H),
                                   feature_id=f"p{i}"))
            recs.append(AuditRecord(f"p{i}", Decision.KEPT,
                                    refined_pixel=(pix.u, pix.v),
                                    true_distance=20.0))
        frames.append((image_id, anns))
        audits[image_id] = recs
    out = tmp_path / "dataset"
    export_dataset(frames, out, audits=audits,
                   meta={"image_width": W, "image_height": H,
                         "box_width_px": 100.0, "box_height_px": 100.0})
    return out


@pytest.fixture()
def dataset(tmp_path):
    return make_dataset(tmp_path)


@pytest.fixture()
def client(dataset):
    return TestClient(create_app(dataset))


class TestListFrames:
    def test_fresh_dataset_unreviewed(self, client):
        body = client.get("/frames").json()
        assert body["total"] == 3
        assert all(f["state"] == "unreviewed" for f in body["frames"])

    def test_reject_all_makes_reviewed(self, client):
        for i in range(2):
            r = client.post("/decisions", json={
                "image_id": "frame_000", "annotation_index": i,
                "verdict": "reject"})
            assert r.status_code == 200
        rows = client.get("/frames", params={"state": "reviewed"}).json()
        assert [f["image_id"] for f in rows["frames"]] == ["frame_000"]

    def test_unknown_filter_rejected(self, client):
        assert client.get("/frames", params={"state": "bogus"}).status_code == 400

    def test_counters_equal_log_replay(self, dataset, client):
        rng = np.random.default_rng(23)
        for _ in range(40):
            k = int(rng.integers(0, 3))
            i = int(rng.integers(0, 2))
            verdict = ("accept", "reject")[int(rng.integers(0, 2))]
            client.post("/decisions", json={
                "image_id": f"frame_{k:03d}", "annotation_index": i,
                "verdict": verdict})
        # replay the log independently
        state = {}
        with open(dataset / "review_log.jsonl") as f:
            for line in f:
                d = json.loads(line)
                state[(d["image_id"], d["annotation_index"])] = d["verdict"]
        body = client.get("/frames").json()
        for row in body["frames"]:
            decided = sum(1 for i in range(2)
                          if (row["image_id"], i) in state)
            expect = ("unreviewed" if decided == 0
                      else "reviewed" if decided == 2 else "partial")
            assert row["state"] == expect


class TestGetFrame:
    def test_detail_matches_label_file(self, dataset, client):
        body = client.get("/frames/frame_001").json()
        rows = read_label_file(dataset / "labels" / "frame_001.txt")
        assert len(body["annotations"]) == len(rows)
        for ann, row in zip(body["annotations"], rows):
            assert ann["box"] == pytest.approx(list(row[1:5]), abs=1e-9)
            assert ann["audit"]["decision"] == "kept"

    def test_unknown_id_404(self, client):
        assert client.get("/frames/nope").status_code == 404

    def test_empty_frame(self, tmp_path):
        out = tmp_path / "ds"
        export_dataset([("empty", [])], out,
                       meta={"image_width": W, "image_height": H})
        c = TestClient(create_app(out))
        body = c.get("/frames/empty").json()
        assert body["annotations"] == []
        assert body["state"] == "reviewed"


class TestPostDecision:
    def test_latest_wins(self, client):
        client.post("/decisions", json={"image_id": "frame_000",
                                        "annotation_index": 0,
                                        "verdict": "accept"})
        client.post("/decisions", json={"image_id": "frame_000",
                                        "annotation_index": 0,
                                        "verdict": "reject"})
        body = client.get("/frames/frame_000").json()
        assert body["annotations"][0]["decision"]["verdict"] == "reject"

    def test_adjust_stored_and_echoed(self, client):
        r = client.post("/decisions", json={
            "image_id": "frame_000", "annotation_index": 1,
            "verdict": "adjust", "adjusted_center": [0.5, 0.9]})
        assert r.status_code == 200
        assert r.json()["decision"]["adjusted_center"] == [0.5, 0.9]
        body = client.get("/frames/frame_000").json()
        assert body["annotations"][1]["decision"]["adjusted_center"] == [0.5, 0.9]

    def test_adjust_outside_image_rejected(self, client):
        r = client.post("/decisions", json={
            "image_id": "frame_000", "annotation_index": 0,
            "verdict": "adjust", "adjusted_center": [1.2, 0.5]})
        assert r.status_code == 422

    def test_unknown_annotation_404(self, client):
        r = client.post("/decisions", json={
            "image_id": "frame_000", "annotation_index": 99,
            "verdict": "accept"})
        assert r.status_code == 404

    def test_concurrent_decisions_all_logged(self, tmp_path):
        dataset = make_dataset(tmp_path, n_frames=10, n_annotations=10)
        client = TestClient(create_app(dataset))
        errors = []

        def worker(k):
            for i in range(10):
                r = client.post("/decisions", json={
                    "image_id": f"frame_{k:03d}", "annotation_index": i,
                    "verdict": "accept", "reviewer": f"t{k}"})
                if r.status_code != 200:
                    errors.append(r.status_code)

        threads = [threading.Thread(target=worker, args=(k,))
                   for k in range(10)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        with open(dataset / "review_log.jsonl") as f:
            lines = [line for line in f if line.strip()]
        assert len(lines) == 100
        keys = {(json.loads(l)["image_id"], json.loads(l)["annotation_index"])
                for l in lines}
        assert len(keys) == 100

    def test_restart_preserves_decisions(self, dataset):
        c1 = TestClient(create_app(dataset))
        c1.post("/decisions", json={"image_id": "frame_002",
                                    "annotation_index": 0,
                                    "verdict": "adjust",
                                    "adjusted_center": [0.25, 0.75]})
        # new app over the same directory = restart
        c2 = TestClient(create_app(dataset))
        body = c2.get("/frames/frame_002").json()
        assert body["annotations"][0]["decision"]["adjusted_center"] == [0.25, 0.75]


class TestExportCurated:
    def test_default_mode_no_decisions_passthrough(self, dataset, client,
                                                   tmp_path):
        out = tmp_path / "curated"
        r = client.post("/export", json={"out_dir": str(out)})
        assert r.status_code == 200
        for label in (dataset / "labels").glob("*.txt"):
            assert (out / "labels" / label.name).read_bytes() == \
                label.read_bytes()

    def test_everything_rejected_empty_labels(self, dataset, client,
                                              tmp_path):
        for k in range(3):
            for i in range(2):
                client.post("/decisions", json={
                    "image_id": f"frame_{k:03d}", "annotation_index": i,
                    "verdict": "reject"})
        out = tmp_path / "curated"
        client.post("/export", json={"out_dir": str(out)})
        for label in (out / "labels").glob("*.txt"):
            assert label.read_text() == ""

    def test_mixed_fixture_matches_hand_computation(self, dataset, client,
                                                    tmp_path):
        # frame_000: ann0 accepted, ann1 rejected
        # frame_001: ann0 adjusted to (0.5, 0.5); ann1 unreviewed
        client.post("/decisions", json={"image_id": "frame_000",
                                        "annotation_index": 0,
                                        "verdict": "accept"})
        client.post("/decisions", json={"image_id": "frame_000",
                                        "annotation_index": 1,
                                        "verdict": "reject"})
        client.post("/decisions", json={"image_id": "frame_001",
                                        "annotation_index": 0,
                                        "verdict": "adjust",
                                        "adjusted_center": [0.5, 0.5]})
        out = tmp_path / "strict"
        r = client.post("/export", json={"out_dir": str(out),
                                         "strict": True})
        manifest = r.json()["manifest"]
        # strict: only accepted + adjusted survive
        assert manifest["annotation_count"] == 2
        rows0 = read_label_file(out / "labels" / "frame_000.txt")
        rows1 = read_label_file(out / "labels" / "frame_001.txt")
        rows2 = read_label_file(out / "labels" / "frame_002.txt")
        assert len(rows0) == 1 and len(rows1) == 1 and len(rows2) == 0
        # the adjusted annotation was re-boxed around the new center
        assert rows1[0][1] == pytest.approx(0.5, abs=1e-6)
        assert rows1[0][2] == pytest.approx(0.5, abs=1e-6)
        assert rows1[0][3] == pytest.approx(100.0 / W, abs=1e-6)
        review = manifest["meta"]["review"]
        assert review == {"mode": "strict", "accepted": 1, "rejected": 1,
                          "adjusted": 1, "unreviewed": 3}

    def test_strict_subset_of_input(self, dataset, client, tmp_path):
        client.post("/decisions", json={"image_id": "frame_000",
                                        "annotation_index": 0,
                                        "verdict": "accept"})
        out = tmp_path / "strict"
        client.post("/export", json={"out_dir": str(out), "strict": True})
        source = set()
        for label in (dataset / "labels").glob("*.txt"):
            for row in read_label_file(label):
                source.add((label.stem,) + row)
        exported = set()
        for label in (out / "labels").glob("*.txt"):
            for row in read_label_file(label):
                exported.add((label.stem,) + row)
        assert exported <= source  # no adjusted entries here, pure subset
