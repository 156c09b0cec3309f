"""Local HTTP service backing the browser review tool.

Endpoints (JSON over HTTP, versioned under /v1):

  GET  /v1/proposals        queue listing with reviewed flags, no points
  GET  /v1/proposals/{rank} one packet: proposal, point crop, nearby GT
  POST /v1/verdicts         record a verdict {rank, decision, kind, reviewer}
  GET  /v1/summary          errors/reviewed counts per method and class

The service never mutates anything except the verdict ledger, whose
writes are serialized behind a lock.  Point crops are capped at 50k
points by deterministic stride downsampling.  When a ui_dir is given,
its files are served at / for convenience.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .audit import AuditProposal, Verdict, read_ledger, record_verdict, summarize
from .dataio import (
    DatasetManifest,
    GroundTruthBox,
    ValidationError,
    read_ground_truth,
    read_point_cloud,
)

MAX_CROP_POINTS = 50_000


@dataclass
class ReviewState:
    proposals: list[AuditProposal]
    manifest: DatasetManifest
    ledger_path: Path
    ui_dir: Path | None = None

    def __post_init__(self) -> None:
        self.ledger_lock = threading.Lock()
        self.by_rank = {p.rank: p for p in self.proposals}
        self._gt_by_frame: dict[str, list[GroundTruthBox]] | None = None
        self._cloud_cache: dict[str, np.ndarray] = {}

    def gt_for_frame(self, frame_id: str):
        if self._gt_by_frame is None:
            grouped: dict[str, list] = {}
            records = read_ground_truth(
                self.manifest.path(self.manifest.ground_truth), self.manifest.class_count
            )
            for rec in records:
                grouped.setdefault(rec.frame_id, []).append(rec)
            self._gt_by_frame = grouped
        return self._gt_by_frame.get(frame_id, [])

    def cloud_points(self, frame_id: str) -> np.ndarray:
        if frame_id not in self._cloud_cache:
            entry = next(f for f in self.manifest.frames if f.frame_id == frame_id)
            cloud, _ = read_point_cloud(self.manifest.path(entry.cloud), frame_id)
            if len(self._cloud_cache) > 8:
                self._cloud_cache.clear()
            self._cloud_cache[frame_id] = cloud.points
        return self._cloud_cache[frame_id]


def _box_payload(box) -> dict:
    return {
        "cx": box.cx, "cy": box.cy, "cz": box.cz,
        "l": box.l, "w": box.w, "h": box.h, "yaw": box.yaw,
    }


def _proposal_listing(state: ReviewState) -> dict:
    reviewed = {
        (v.method, v.rank)
        for v in read_ledger(state.ledger_path)
        if (v.method, v.rank) in {(p.method, p.rank) for p in state.proposals}
    }
    items = [
        {
            "rank": p.rank,
            "method": p.method,
            "frame_id": p.frame_id,
            "box_id": p.box_id,
            "key": p.key,
            "iou": p.iou,
            "cls": p.cls,
            "class_name": state.manifest.class_names[p.cls]
            if 0 <= p.cls < state.manifest.class_count
            else str(p.cls),
            "reviewed": (p.method, p.rank) in reviewed,
        }
        for p in state.proposals
    ]
    return {"count": len(items), "proposals": items}


def _proposal_packet(state: ReviewState, rank: int) -> dict:
    p = state.by_rank[rank]
    pts = state.cloud_points(p.frame_id)
    dx = pts[:, 0] - p.box.cx
    dy = pts[:, 1] - p.box.cy
    mask = dx * dx + dy * dy <= p.crop_radius**2
    crop = pts[mask]
    if len(crop) > MAX_CROP_POINTS:
        stride = int(np.ceil(len(crop) / MAX_CROP_POINTS))
        crop = crop[::stride]
    gt_boxes = []
    for rec in state.gt_for_frame(p.frame_id):
        circum = 0.5 * float(np.hypot(rec.box.l, rec.box.w))
        dist = float(np.hypot(rec.box.cx - p.box.cx, rec.box.cy - p.box.cy))
        if dist <= p.crop_radius + circum:
            gt_boxes.append(
                {
                    "ann_id": rec.ann_id,
                    "cls": rec.cls,
                    "class_name": state.manifest.class_names[rec.cls],
                    **_box_payload(rec.box),
                }
            )
    return {
        "rank": p.rank,
        "method": p.method,
        "frame_id": p.frame_id,
        "box_id": p.box_id,
        "key": p.key,
        "iou": p.iou,
        "cls": p.cls,
        "class_name": state.manifest.class_names[p.cls]
        if 0 <= p.cls < state.manifest.class_count
        else str(p.cls),
        "box": _box_payload(p.box),
        "crop_center": [p.box.cx, p.box.cy],
        "crop_radius": p.crop_radius,
        "points": crop.tolist(),
        "ground_truth": gt_boxes,
        "camera_image": p.camera_image,
    }


def _summary_payload(state: ReviewState) -> dict:
    summary = summarize(read_ledger(state.ledger_path), state.proposals)
    return {
        "methods": {
            method: {
                "overall": counts,
                "per_class": {
                    str(cls): c for cls, c in summary.per_class.get(method, {}).items()
                },
            }
            for method, counts in summary.overall.items()
        }
    }


class ReviewHandler(BaseHTTPRequestHandler):
    state: ReviewState  # injected by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, payload, status=200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.end_headers()

    def do_GET(self) -> None:
        path = self.path.split("?", 1)[0].rstrip("/") or "/"
        if path == "/v1/proposals":
            self._send_json(_proposal_listing(self.state))
        elif path.startswith("/v1/proposals/"):
            tail = path.rsplit("/", 1)[1]
            try:
                rank = int(tail)
            except ValueError:
                self._send_json({"error": f"bad rank {tail!r}"}, 400)
                return
            if rank not in self.state.by_rank:
                self._send_json({"error": f"no proposal with rank {rank}"}, 404)
                return
            self._send_json(_proposal_packet(self.state, rank))
        elif path == "/v1/summary":
            self._send_json(_summary_payload(self.state))
        elif self.state.ui_dir is not None:
            self._serve_static(path)
        else:
            self._send_json({"error": f"unknown endpoint {path}"}, 404)

    def _serve_static(self, path: str) -> None:
        rel = "index.html" if path == "/" else path.lstrip("/")
        target = (self.state.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.state.ui_dir.resolve())) or not target.is_file():
            self._send_json({"error": f"not found: {path}"}, 404)
            return
        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:
        if self.path.rstrip("/") != "/v1/verdicts":
            self._send_json({"error": f"unknown endpoint {self.path}"}, 404)
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
            verdict = Verdict(
                method=str(payload.get("method", self.state.proposals[0].method if self.state.proposals else "lmd")),
                rank=int(payload["rank"]),
                decision=str(payload["decision"]),
                kind=str(payload.get("kind", "none")),
                reviewer=str(payload.get("reviewer", "default")),
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            self._send_json({"error": f"malformed verdict: {exc}"}, 400)
            return
        except ValidationError as exc:
            self._send_json({"error": str(exc)}, 400)
            return
        try:
            with self.state.ledger_lock:
                record_verdict(self.state.ledger_path, verdict, self.state.proposals)
        except ValidationError as exc:
            self._send_json({"error": str(exc)}, 404)
            return
        self._send_json({"ok": True, "rank": verdict.rank, "decision": verdict.decision})


def make_server(
    state: ReviewState, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    handler = type("BoundReviewHandler", (ReviewHandler,), {"state": state})
    return ThreadingHTTPServer((host, port), handler)
