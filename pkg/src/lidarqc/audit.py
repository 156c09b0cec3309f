"""Annotation-error proposal building, verdict ledger, and summaries.

A proposal is a false positive (overlap with current ground truth below
0.5) that a meta model still rates highly, suggesting the annotation
rather than the detection is wrong.  Proposals carry a scene-excerpt
reference (frame id, crop center, radius) instead of copied bytes; the
serving layer materializes the crop on demand.

The verdict ledger is an append-only line-delimited record file; the
last verdict per (proposal, reviewer) wins.  An unsure verdict counts
toward the reviewed denominator but never the error numerator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataio import FeatureTable, FormatError, GroundTruthBox, ValidationError, fmt9
from .geometry import OrientedBox3D, iou_bev
from .nms import TP_IOU_THRESHOLD

RANKING_METHODS = ("lmd", "score", "random")
DECISIONS = ("annotation_error", "not_error", "unsure")
ERROR_KINDS = ("missing_label", "wrong_class", "misaligned", "other", "none")

DEFAULT_CROP_RADIUS = 15.0

_GEOMETRY_FEATURES = ("x", "y", "z", "l", "w", "h", "yaw", "score", "cls")


@dataclass
class AuditProposal:
    rank: int
    method: str
    frame_id: str
    box_id: int
    key: float  # estimated overlap, detector score, or draw index
    box: OrientedBox3D
    cls: int
    iou: float  # against current ground truth
    crop_radius: float = DEFAULT_CROP_RADIUS
    camera_image: str | None = None

    @property
    def crop_center(self) -> tuple[float, float]:
        return (self.box.cx, self.box.cy)


@dataclass(frozen=True)
class Verdict:
    method: str
    rank: int
    decision: str
    kind: str = "none"
    reviewer: str = "default"
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.decision not in DECISIONS:
            raise ValidationError(f"unknown decision {self.decision!r}")
        if self.kind not in ERROR_KINDS:
            raise ValidationError(f"unknown error kind {self.kind!r}")
        if self.decision == "annotation_error" and self.kind == "none":
            raise ValidationError("annotation_error verdicts need an error kind")


def build_proposals(
    table: FeatureTable,
    predictions: np.ndarray | None,
    method: str,
    k: int,
    seed: int = 0,
    crop_radius: float = DEFAULT_CROP_RADIUS,
) -> list[AuditProposal]:
    """Rank the table's false positives and keep the top k.

    lmd sorts by the supplied per-row estimates descending (ties by
    detector score, then frame id, then box id); score sorts by the
    detector score; random draws uniformly without replacement under the
    seed, the draw position serving as the ranking key.
    """
    if method not in RANKING_METHODS:
        raise ValidationError(f"unknown ranking method {method!r}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    missing = [n for n in _GEOMETRY_FEATURES if n not in table.feature_names]
    if missing:
        raise ValidationError(f"feature table lacks geometry columns {missing!r}")
    if method == "lmd":
        if predictions is None:
            raise ValidationError("lmd ranking needs per-row predictions")
        predictions = np.asarray(predictions, dtype=float)
        if predictions.shape != (len(table),):
            raise ValidationError(
                f"predictions shape {predictions.shape} does not match {len(table)} rows"
            )

    fp_idx = np.flatnonzero(table.iou < TP_IOU_THRESHOLD)
    scores = table.column("score")
    if method == "lmd":
        order = sorted(
            fp_idx,
            key=lambda i: (-predictions[i], -scores[i], table.frame_ids[i], table.box_ids[i]),
        )
        keys = {i: float(predictions[i]) for i in fp_idx}
    elif method == "score":
        order = sorted(
            fp_idx, key=lambda i: (-scores[i], table.frame_ids[i], table.box_ids[i])
        )
        keys = {i: float(scores[i]) for i in fp_idx}
    else:
        rng = np.random.default_rng(seed)
        order = list(fp_idx[rng.permutation(len(fp_idx))])
        keys = {i: float(pos + 1) for pos, i in enumerate(order)}

    proposals = []
    for rank, i in enumerate(order[:k], start=1):
        row = {name: table.column(name)[i] for name in _GEOMETRY_FEATURES}
        proposals.append(
            AuditProposal(
                rank=rank,
                method=method,
                frame_id=table.frame_ids[i],
                box_id=int(table.box_ids[i]),
                key=keys[i],
                box=OrientedBox3D(
                    row["x"], row["y"], row["z"], row["l"], row["w"], row["h"], row["yaw"]
                ),
                cls=int(row["cls"]),
                iou=float(table.iou[i]),
                crop_radius=crop_radius,
            )
        )
    return proposals


def write_proposals(proposals: Sequence[AuditProposal], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in proposals:
            rec = {
                "rank": p.rank,
                "method": p.method,
                "frame_id": p.frame_id,
                "box_id": p.box_id,
                "key": fmt9(p.key),
                "cx": fmt9(p.box.cx),
                "cy": fmt9(p.box.cy),
                "cz": fmt9(p.box.cz),
                "l": fmt9(p.box.l),
                "w": fmt9(p.box.w),
                "h": fmt9(p.box.h),
                "yaw": fmt9(p.box.yaw),
                "cls": p.cls,
                "iou": fmt9(p.iou),
                "crop_radius": fmt9(p.crop_radius),
                "camera_image": p.camera_image,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_proposals(path) -> list[AuditProposal]:
    from .dataio import _iter_jsonl

    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            out.append(
                AuditProposal(
                    rank=int(obj["rank"]),
                    method=str(obj["method"]),
                    frame_id=str(obj["frame_id"]),
                    box_id=int(obj["box_id"]),
                    key=float(obj["key"]),
                    box=OrientedBox3D(
                        *(float(obj[k]) for k in ("cx", "cy", "cz", "l", "w", "h", "yaw"))
                    ),
                    cls=int(obj["cls"]),
                    iou=float(obj["iou"]),
                    crop_radius=float(obj["crop_radius"]),
                    camera_image=obj.get("camera_image"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: malformed proposal ({exc!r})") from exc
    return out


# ---------------------------------------------------------------------------
# verdict ledger
# ---------------------------------------------------------------------------


def record_verdict(ledger_path, verdict: Verdict, proposals: Sequence[AuditProposal]) -> None:
    """Append one verdict; the proposal it references must exist."""
    known = {(p.method, p.rank) for p in proposals}
    if (verdict.method, verdict.rank) not in known:
        raise ValidationError(
            f"verdict references unknown proposal {verdict.method}/{verdict.rank}"
        )
    rec = {
        "method": verdict.method,
        "rank": verdict.rank,
        "decision": verdict.decision,
        "kind": verdict.kind,
        "reviewer": verdict.reviewer,
        "timestamp": verdict.timestamp,
    }
    with open(ledger_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_ledger(ledger_path) -> list[Verdict]:
    from .dataio import _iter_jsonl

    path = Path(ledger_path)
    if not path.exists():
        return []
    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            out.append(
                Verdict(
                    method=str(obj["method"]),
                    rank=int(obj["rank"]),
                    decision=str(obj["decision"]),
                    kind=str(obj.get("kind", "none")),
                    reviewer=str(obj.get("reviewer", "default")),
                    timestamp=str(obj.get("timestamp", "")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: malformed verdict ({exc!r})") from exc
    return out


@dataclass
class AuditSummary:
    """errors / reviewed counts, overall and per class, keyed by method."""

    overall: dict = field(default_factory=dict)
    per_class: dict = field(default_factory=dict)


def summarize(
    verdicts: Iterable[Verdict], proposals: Sequence[AuditProposal]
) -> AuditSummary:
    by_key = {(p.method, p.rank): p for p in proposals}
    latest: dict[tuple, Verdict] = {}
    for v in verdicts:
        if (v.method, v.rank) in by_key:
            latest[(v.method, v.rank, v.reviewer)] = v

    summary = AuditSummary()
    for (method, rank, _), verdict in latest.items():
        proposal = by_key[(method, rank)]
        err = 1 if verdict.decision == "annotation_error" else 0
        o = summary.overall.setdefault(method, {"errors": 0, "reviewed": 0})
        o["errors"] += err
        o["reviewed"] += 1
        c = summary.per_class.setdefault(method, {}).setdefault(
            proposal.cls, {"errors": 0, "reviewed": 0}
        )
        c["errors"] += err
        c["reviewed"] += 1
    return summary


def planted_deletion_recall(
    proposals: Sequence[AuditProposal],
    deletions: Sequence[GroundTruthBox],
    k: int,
) -> float:
    """Fraction of planted deletions matched by a top-k proposal.

    A deletion counts as found when some top-k proposal in its frame
    overlaps the deleted box with footprint IoU >= 0.5.
    """
    if not deletions:
        return 0.0
    by_frame: dict[str, list[GroundTruthBox]] = {}
    for d in deletions:
        by_frame.setdefault(d.frame_id, []).append(d)
    found: set[tuple[str, int]] = set()
    for p in proposals[:k]:
        for d in by_frame.get(p.frame_id, []):
            if iou_bev(p.box, d.box) >= TP_IOU_THRESHOLD:
                found.add((d.frame_id, d.ann_id))
    return len(found) / len(deletions)
