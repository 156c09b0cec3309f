"""Greedy NMS replay and ground-truth association.

Replaying the detector's NMS recovers, for every surviving box, the set
of raw proposals it suppressed (its pre-image).  Survivors are then
matched against annotations to obtain the overlap target and the
true/false-positive label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .dataio import GroundTruthBox, RawDetection
from .geometry import iou_3d, iou_bev

TP_IOU_THRESHOLD = 0.5

OVERLAP_METRICS = ("bev", "3d")


@dataclass
class NmsResult:
    """Survivor indices plus the ownership partition of above-floor boxes.

    ``owner[i]`` is the detection-list index of the survivor that owns
    detection ``i`` (survivors own themselves), or -1 for boxes discarded
    by the score floor, which own nothing and belong to no pre-image.
    """

    survivors: list[int]
    owner: list[int]

    def prop_members(self, survivor: int) -> list[int]:
        return [i for i, o in enumerate(self.owner) if o == survivor]


def greedy_nms(
    detections: Sequence[RawDetection],
    overlap_metric: str = "bev",
    threshold: float = 0.5,
    score_floor: float = 0.1,
    class_aware: bool = False,
) -> NmsResult:
    """Standard greedy sweep over one frame's detections.

    Boxes below the score floor are discarded up front.  The rest are
    visited in order of descending score (ties by ascending input index);
    each unsuppressed box becomes a survivor and suppresses every
    remaining box whose overlap with it reaches the threshold.  A
    suppressed box is owned by the survivor that suppressed it.  With
    class_aware=True only boxes sharing the argmax class suppress each
    other.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"overlap threshold must be in (0, 1), got {threshold}")
    if overlap_metric not in OVERLAP_METRICS:
        raise ValueError(f"unknown overlap metric {overlap_metric!r}")
    overlap = iou_bev if overlap_metric == "bev" else iou_3d

    owner = [-1] * len(detections)
    alive = [i for i, det in enumerate(detections) if det.score >= score_floor]
    alive.sort(key=lambda i: (-detections[i].score, i))
    survivors: list[int] = []
    suppressed = set()
    for pos, i in enumerate(alive):
        if i in suppressed:
            continue
        survivors.append(i)
        owner[i] = i
        det_i = detections[i]
        for j in alive[pos + 1 :]:
            if j in suppressed:
                continue
            det_j = detections[j]
            if class_aware and det_i.pred_class != det_j.pred_class:
                continue
            if overlap(det_i.box, det_j.box) >= threshold:
                suppressed.add(j)
                owner[j] = i
    return NmsResult(survivors=survivors, owner=owner)


@dataclass(frozen=True)
class MatchRecord:
    """Association of one survivor with the annotations of its frame."""

    box_id: int
    iou: float
    matched_gt: int | None
    tp: bool


def match_to_gt(
    survivors: Sequence[RawDetection],
    ground_truth: Sequence[GroundTruthBox],
    class_aware: bool = True,
) -> list[MatchRecord]:
    """Non-exclusive best-overlap matching of survivors to annotations.

    The overlap target is the maximum footprint IoU over eligible
    annotations (same argmax class when class_aware, all otherwise), 0
    when none exist.  Ties go to the lowest annotation id.  Several
    survivors may share one annotation.  A survivor is a true positive
    iff its target reaches 0.5.
    """
    records = []
    for det in survivors:
        best_iou = 0.0
        best_id: int | None = None
        for gt in sorted(ground_truth, key=lambda g: g.ann_id):
            if class_aware and gt.cls != det.pred_class:
                continue
            value = iou_bev(det.box, gt.box)
            if value > best_iou:
                best_iou = value
                best_id = gt.ann_id
        records.append(
            MatchRecord(
                box_id=det.box_id,
                iou=best_iou,
                matched_gt=best_id,
                tp=best_iou >= TP_IOU_THRESHOLD,
            )
        )
    return records
