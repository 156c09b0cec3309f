"""Box-wise uncertainty features for NMS survivors.

For each survivor the canonical 90-entry vector is, in order:

  (a) the predicted box itself: x, y, z, l, w, h, yaw, score, cls
      (cls is the argmax class encoded as its integer index)      9
  (b) geometry and cloud statistics of the survivor: volume,
      surface_area, relative_size, point_count, point_fraction,
      refl_max, refl_mean, refl_std                               8
  (c) prop_count: the size of the survivor's NMS pre-image         1
  (d) min/max/mean/std over the pre-image of each quantity in
      (a) minus cls plus (b), 16 quantities in all                64
  (e) min/max/mean/std of the 3D and BEV overlaps between the
      survivor and every pre-image member                          8

Aggregates use the population standard deviation (a singleton
pre-image has std 0).  A survivor containing no returns reports
point_count 0, point_fraction 0 and zero reflectance statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import FeatureRow, FrameBundle
from .geometry import (
    iou_3d,
    iou_bev,
    points_in_box,
    relative_size,
    surface_area,
    volume,
)
from .nms import MatchRecord, NmsResult

BOX_FEATURES = ("x", "y", "z", "l", "w", "h", "yaw", "score", "cls")
GEOM_CLOUD_FEATURES = (
    "volume",
    "surface_area",
    "relative_size",
    "point_count",
    "point_fraction",
    "refl_max",
    "refl_mean",
    "refl_std",
)
# Quantities aggregated over the pre-image: the box features minus the
# categorical class index, plus the geometry/cloud statistics.
PROP_QUANTITIES = BOX_FEATURES[:-1] + GEOM_CLOUD_FEATURES
AGG_STATS = ("min", "max", "mean", "std")
PROP_OVERLAPS = ("iou3d", "ioubev")

LMD_FEATURES: tuple[str, ...] = (
    BOX_FEATURES
    + GEOM_CLOUD_FEATURES
    + ("prop_count",)
    + tuple(f"prop_{stat}_{q}" for q in PROP_QUANTITIES for stat in AGG_STATS)
    + tuple(f"prop_{stat}_{m}" for m in PROP_OVERLAPS for stat in AGG_STATS)
)
assert len(LMD_FEATURES) == 90


@dataclass(frozen=True)
class FeatureSetSpec:
    """A named, ordered subset of the canonical registry."""

    name: str
    feature_names: tuple[str, ...]


def spec_score() -> FeatureSetSpec:
    return FeatureSetSpec("score", ("score",))


def spec_box() -> FeatureSetSpec:
    return FeatureSetSpec("box", BOX_FEATURES)


def spec_lmd() -> FeatureSetSpec:
    return FeatureSetSpec("lmd", LMD_FEATURES)


def spec_custom(names: Sequence[str]) -> FeatureSetSpec:
    unknown = [n for n in names if n not in LMD_FEATURES]
    if unknown:
        raise KeyError(f"unknown feature {unknown[0]!r}")
    return FeatureSetSpec("custom", tuple(names))


def feature_set(name: str) -> FeatureSetSpec:
    try:
        return {"score": spec_score, "box": spec_box, "lmd": spec_lmd}[name]()
    except KeyError:
        raise KeyError(f"unknown feature set {name!r}") from None


def _population_std(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean((values - np.mean(values)) ** 2)))


def _agg(values: np.ndarray) -> tuple[float, float, float, float]:
    lo = float(np.min(values))
    hi = float(np.max(values))
    # Pairwise summation can push the mean past the extremes by 1 ulp.
    mean = min(max(float(np.mean(values)), lo), hi)
    return lo, hi, mean, _population_std(values)


def _detection_quantities(det, cloud_points: np.ndarray, total_points: int) -> np.ndarray:
    """The 16 per-box quantities aggregated over pre-images."""
    box = det.box
    inside = points_in_box(box, cloud_points) if total_points else np.zeros(0, bool)
    count = int(np.count_nonzero(inside))
    if count:
        refl = cloud_points[inside, 3]
        r_max = float(np.max(refl))
        r_mean = float(np.mean(refl))
        r_std = _population_std(refl)
    else:
        r_max = r_mean = r_std = 0.0
    return np.array(
        [
            box.cx,
            box.cy,
            box.cz,
            box.l,
            box.w,
            box.h,
            box.yaw,
            det.score,
            volume(box),
            surface_area(box),
            relative_size(box),
            float(count),
            count / total_points if total_points else 0.0,
            r_max,
            r_mean,
            r_std,
        ]
    )


def compute_features(
    frame: FrameBundle,
    nms: NmsResult,
    matches: Sequence[MatchRecord] | None = None,
    exclude_self_from_prop_stats: bool = False,
) -> list[FeatureRow]:
    """One canonical feature row per NMS survivor, in survivor order.

    matches, when given, must align with nms.survivors and supplies the
    overlap target and TP label; otherwise targets are left unset.  With
    exclude_self_from_prop_stats the survivor itself is dropped from the
    aggregate statistics (d) and (e); a singleton pre-image falls back to
    including the survivor so every aggregate stays defined.
    """
    if matches is not None and len(matches) != len(nms.survivors):
        raise ValueError(
            f"{len(matches)} match records for {len(nms.survivors)} survivors"
        )
    pts = frame.cloud.points
    total = len(frame.cloud)

    needed = sorted(i for i, o in enumerate(nms.owner) if o >= 0)
    quantities: dict[int, np.ndarray] = {
        i: _detection_quantities(frame.detections[i], pts, total) for i in needed
    }

    rows = []
    for rank, surv_idx in enumerate(nms.survivors):
        det = frame.detections[surv_idx]
        members = nms.prop_members(surv_idx)
        if exclude_self_from_prop_stats and len(members) > 1:
            agg_members = [i for i in members if i != surv_idx]
        else:
            agg_members = members

        values: dict[str, float] = {}
        own = quantities[surv_idx]
        for name, value in zip(BOX_FEATURES[:-1], own[:8]):
            values[name] = float(value)
        values["cls"] = float(det.pred_class)
        for name, value in zip(GEOM_CLOUD_FEATURES, own[8:]):
            values[name] = float(value)
        values["prop_count"] = float(len(members))

        member_matrix = np.stack([quantities[i] for i in agg_members])
        for qi, q in enumerate(PROP_QUANTITIES):
            mn, mx, mean, std = _agg(member_matrix[:, qi])
            values[f"prop_min_{q}"] = mn
            values[f"prop_max_{q}"] = mx
            values[f"prop_mean_{q}"] = mean
            values[f"prop_std_{q}"] = std

        overlaps_3d = np.array(
            [iou_3d(det.box, frame.detections[i].box) for i in agg_members]
        )
        overlaps_bev = np.array(
            [iou_bev(det.box, frame.detections[i].box) for i in agg_members]
        )
        for metric, overlaps in (("iou3d", overlaps_3d), ("ioubev", overlaps_bev)):
            mn, mx, mean, std = _agg(overlaps)
            values[f"prop_min_{metric}"] = mn
            values[f"prop_max_{metric}"] = mx
            values[f"prop_mean_{metric}"] = mean
            values[f"prop_std_{metric}"] = std

        if matches is not None:
            match = matches[rank]
            row = FeatureRow(frame.frame_id, det.box_id, values, match.iou, int(match.tp))
        else:
            row = FeatureRow(frame.frame_id, det.box_id, values, math.nan, -1)
        rows.append(row)
    return rows


def select_columns(rows: Sequence[FeatureRow], spec: FeatureSetSpec) -> list[FeatureRow]:
    """Project rows onto the named feature subset, preserving row order."""
    out = []
    for row in rows:
        try:
            values = {name: row.values[name] for name in spec.feature_names}
        except KeyError as exc:
            raise KeyError(f"unknown feature {exc.args[0]!r}") from exc
        out.append(FeatureRow(row.frame_id, row.box_id, values, row.iou, row.tp))
    return out
