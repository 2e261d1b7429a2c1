"""HTTP review service for curating generated annotations.

The service wraps an annotated dataset directory (labels/, audits/,
manifest.json).  Reviewer decisions are appended to a JSON Lines log next
to the dataset, fsynced before they are acknowledged, and replayed on
startup, so a restart never loses an acknowledged decision.  The current
state is a pure fold over the log with latest-wins per annotation.

Endpoints (all JSON): GET /frames, GET /frames/{id},
GET /frames/{id}/image, POST /decisions, POST /export.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .annotate import (Annotation, AnnotationParams, AuditRecord,
                       export_dataset, make_box, read_label_file)
from .frames import Pixel

VERDICTS = ("accept", "reject", "adjust")
FRAME_STATES = ("unreviewed", "partial", "reviewed")

LOG_NAME = "review_log.jsonl"


class DecisionIn(BaseModel):
    image_id: str
    annotation_index: int = Field(ge=0)
    verdict: str
    adjusted_center: list[float] | None = None  # normalized (cx, cy)
    reviewer: str = "anonymous"


@dataclass
class _FrameData:
    image_id: str
    boxes: list          # (cx, cy, w, h) per annotation
    audits: list         # dict per annotation-bearing audit record, or None


class ReviewStore:
    """Dataset + append-only decision log, safe for concurrent writers."""

    def __init__(self, dataset_dir):
        self.root = Path(dataset_dir)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"not an annotated dataset: {self.root}")
        with open(manifest_path) as f:
            self.manifest = json.load(f)
        meta = self.manifest.get("meta") or {}
        self.image_width = int(meta.get("image_width", 1280))
        self.image_height = int(meta.get("image_height", 720))
        self.box_width_px = float(meta.get("box_width_px", 200.0))
        self.box_height_px = float(meta.get("box_height_px", 200.0))
        self.images_dir = meta.get("images_dir")

        self.frames: dict[str, _FrameData] = {}
        for entry in self.manifest["images"]:
            image_id = entry["image_id"]
            boxes = [row[1:5] for row in
                     read_label_file(self.root / "labels" / f"{image_id}.txt")]
            audits = self._annotation_audits(image_id, len(boxes))
            self.frames[image_id] = _FrameData(image_id, boxes, audits)

        self.log_path = self.root / LOG_NAME
        self.decisions: dict[tuple[str, int], dict] = {}
        self._replay_log()
        self._lock = threading.Lock()

    def _annotation_audits(self, image_id: str, n_boxes: int):
        path = self.root / "audits" / f"{image_id}.jsonl"
        if not path.exists():
            return [None] * n_boxes
        kept = []
        with open(path) as f:
            for line in f:
                rec = json.loads(line)
                if rec.get("decision") in ("kept", "no_ground"):
                    kept.append(rec)
        if len(kept) != n_boxes:  # audits and labels disagree; do not guess
            return [None] * n_boxes
        return kept

    def _replay_log(self):
        if not self.log_path.exists():
            return
        with open(self.log_path) as f:
            for line in f:
                if line.strip():
                    d = json.loads(line)
                    self.decisions[(d["image_id"], d["annotation_index"])] = d

    def frame_state(self, image_id: str) -> str:
        frame = self.frames[image_id]
        if not frame.boxes:
            return "reviewed"
        decided = sum(1 for i in range(len(frame.boxes))
                      if (image_id, i) in self.decisions)
        if decided == 0:
            return "unreviewed"
        return "reviewed" if decided == len(frame.boxes) else "partial"

    def list_frames(self, state: str = "all") -> list[dict]:
        if state not in FRAME_STATES + ("all",):
            raise ValueError(f"unknown state filter {state!r}")
        rows = []
        for image_id in sorted(self.frames):
            fs = self.frame_state(image_id)
            if state != "all" and fs != state:
                continue
            rows.append({"image_id": image_id,
                         "annotations": len(self.frames[image_id].boxes),
                         "state": fs})
        return rows

    def frame_detail(self, image_id: str) -> dict:
        if image_id not in self.frames:
            raise KeyError(image_id)
        frame = self.frames[image_id]
        annotations = []
        for i, box in enumerate(frame.boxes):
            annotations.append({
                "index": i,
                "box": list(box),
                "center": [box[0], box[1]],
                "audit": frame.audits[i],
                "decision": self.decisions.get((image_id, i)),
            })
        return {
            "image_id": image_id,
            "width": self.image_width,
            "height": self.image_height,
            "state": self.frame_state(image_id),
            "annotations": annotations,
        }

    def image_path(self, image_id: str) -> Path | None:
        if not self.images_dir:
            return None
        base = Path(self.images_dir)
        if not base.is_absolute():
            base = self.root / base
        for suffix in (".png", ".jpg", ".jpeg"):
            p = base / f"{image_id}{suffix}"
            if p.exists():
                return p
        return None

    def add_decision(self, d: DecisionIn) -> dict:
        if d.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {d.verdict!r}")
        frame = self.frames.get(d.image_id)
        if frame is None:
            raise KeyError(d.image_id)
        if not (0 <= d.annotation_index < len(frame.boxes)):
            raise KeyError(f"annotation {d.annotation_index} of {d.image_id}")
        record = {
            "image_id": d.image_id,
            "annotation_index": d.annotation_index,
            "verdict": d.verdict,
            "reviewer": d.reviewer,
            "timestamp": time.time(),
        }
        if d.verdict == "adjust":
            if (d.adjusted_center is None or len(d.adjusted_center) != 2
                    or not all(0.0 <= c <= 1.0 for c in d.adjusted_center)):
                raise ValueError("adjust requires a normalized center inside "
                                 "the image")
            record["adjusted_center"] = [float(c) for c in d.adjusted_center]
        # serialize append + fsync; acknowledge only after the write is durable
        with self._lock:
            with open(self.log_path, "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self.decisions[(d.image_id, d.annotation_index)] = record
        return record

    def export_curated(self, out_dir, strict: bool = False) -> dict:
        """Write the reviewed dataset: rejected annotations dropped,
        adjusted ones re-boxed around their new center.  Unreviewed
        annotations pass through unless strict, which keeps only
        accepted/adjusted ones."""
        params = AnnotationParams(vehicle_height_h=1.0,
                                  box_width_px=self.box_width_px,
                                  box_height_px=self.box_height_px)
        frames_out = []
        counts = {"accepted": 0, "rejected": 0, "adjusted": 0, "unreviewed": 0}
        for image_id in sorted(self.frames):
            frame = self.frames[image_id]
            kept: list[Annotation] = []
            for i, box in enumerate(frame.boxes):
                decision = self.decisions.get((image_id, i))
                verdict = decision["verdict"] if decision else None
                if verdict is None:
                    counts["unreviewed"] += 1
                    if strict:
                        continue
                    center = Pixel(box[0] * self.image_width,
                                   box[1] * self.image_height)
                    kept.append(Annotation(image_id, center, tuple(box),
                                           source="map"))
                elif verdict == "reject":
                    counts["rejected"] += 1
                elif verdict == "accept":
                    counts["accepted"] += 1
                    center = Pixel(box[0] * self.image_width,
                                   box[1] * self.image_height)
                    kept.append(Annotation(image_id, center, tuple(box),
                                           source="map"))
                else:
                    counts["adjusted"] += 1
                    cu, cv = decision["adjusted_center"]
                    center = Pixel(cu * self.image_width,
                                   cv * self.image_height)
                    kept.append(Annotation(
                        image_id, center,
                        make_box(center, params, self.image_width,
                                 self.image_height),
                        source="manual"))
            frames_out.append((image_id, kept))
        meta = {
            "image_width": self.image_width,
            "image_height": self.image_height,
            "box_width_px": self.box_width_px,
            "box_height_px": self.box_height_px,
            "review": {"mode": "strict" if strict else "default", **counts},
        }
        return export_dataset(frames_out, out_dir, meta=meta)


class ExportIn(BaseModel):
    out_dir: str
    strict: bool = False


def create_app(dataset_dir, ui_dir=None) -> FastAPI:
    store = ReviewStore(dataset_dir)
    app = FastAPI(title="polemap review")
    app.state.store = store

    @app.get("/frames")
    def frames(state: str = "all", page: int = 0, page_size: int = 200):
        try:
            rows = store.list_frames(state)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        start = page * page_size
        return {"total": len(rows), "page": page,
                "frames": rows[start:start + page_size]}

    @app.get("/frames/{image_id}")
    def frame(image_id: str):
        try:
            return store.frame_detail(image_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown frame {image_id!r}")

    @app.get("/frames/{image_id}/image")
    def frame_image(image_id: str):
        if image_id not in store.frames:
            raise HTTPException(status_code=404,
                                detail=f"unknown frame {image_id!r}")
        path = store.image_path(image_id)
        if path is None:
            raise HTTPException(status_code=404, detail="no image available")
        return FileResponse(path)

    @app.post("/decisions")
    def post_decision(d: DecisionIn):
        try:
            record = store.add_decision(d)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"ok": True, "decision": record,
                "frame_state": store.frame_state(d.image_id)}

    @app.post("/export")
    def export(body: ExportIn):
        manifest = store.export_curated(body.out_dir, strict=body.strict)
        return {"ok": True, "manifest": manifest}

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
