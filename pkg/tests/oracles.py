"""Independent reference implementations used to check the library.

Everything here is deliberately written from first principles (axis
projections, rejection sampling) and never calls into the code paths it
verifies.
"""

from __future__ import annotations

import numpy as np


def box_axes(yaw: float) -> np.ndarray:
    """Rows are the box's unit axes in world coordinates (x-axis, y-axis)."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, s], [-s, c]])


def point_inside_box(params, pts: np.ndarray) -> np.ndarray:
    """Closed-face containment via axis projections.

    params: (cx, cy, cz, l, w, h, yaw); pts: (N, 3).
    """
    cx, cy, cz, l, w, h, yaw = params
    axes = box_axes(yaw)
    rel = pts[:, :2] - np.array([cx, cy])
    proj = rel @ axes.T
    return (
        (np.abs(proj[:, 0]) <= l / 2.0)
        & (np.abs(proj[:, 1]) <= w / 2.0)
        & (np.abs(pts[:, 2] - cz) <= h / 2.0)
    )


def footprint_inside(params, pts_xy: np.ndarray) -> np.ndarray:
    cx, cy, cz, l, w, h, yaw = params
    axes = box_axes(yaw)
    rel = pts_xy - np.array([cx, cy])
    proj = rel @ axes.T
    return (np.abs(proj[:, 0]) <= l / 2.0) & (np.abs(proj[:, 1]) <= w / 2.0)


def _footprint_bounds(params):
    cx, cy, cz, l, w, h, yaw = params
    # Extent of a rotated rectangle along world axes.
    ex = abs(l / 2.0 * np.cos(yaw)) + abs(w / 2.0 * np.sin(yaw))
    ey = abs(l / 2.0 * np.sin(yaw)) + abs(w / 2.0 * np.cos(yaw))
    return cx - ex, cx + ex, cy - ey, cy + ey


def mc_iou_bev(params_a, params_b, n_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo BEV IoU over the union's bounding rectangle."""
    ax0, ax1, ay0, ay1 = _footprint_bounds(params_a)
    bx0, bx1, by0, by1 = _footprint_bounds(params_b)
    x0, x1 = min(ax0, bx0), max(ax1, bx1)
    y0, y1 = min(ay0, by0), max(ay1, by1)
    pts = rng.uniform([x0, y0], [x1, y1], size=(n_samples, 2))
    in_a = footprint_inside(params_a, pts)
    in_b = footprint_inside(params_b, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def mc_iou_3d(params_a, params_b, n_samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo 3D IoU over the union's bounding volume."""
    ax0, ax1, ay0, ay1 = _footprint_bounds(params_a)
    bx0, bx1, by0, by1 = _footprint_bounds(params_b)
    az0, az1 = params_a[2] - params_a[5] / 2.0, params_a[2] + params_a[5] / 2.0
    bz0, bz1 = params_b[2] - params_b[5] / 2.0, params_b[2] + params_b[5] / 2.0
    lo = [min(ax0, bx0), min(ay0, by0), min(az0, bz0)]
    hi = [max(ax1, bx1), max(ay1, by1), max(az1, bz1)]
    pts = rng.uniform(lo, hi, size=(n_samples, 3))
    in_a = point_inside_box(params_a, pts)
    in_b = point_inside_box(params_b, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def random_box_params(rng: np.random.Generator, spread: float = 2.5):
    """A random plausible box (cx, cy, cz, l, w, h, yaw)."""
    return (
        rng.uniform(-spread, spread),
        rng.uniform(-spread, spread),
        rng.uniform(-1.0, 1.0),
        rng.uniform(0.4, 4.0),
        rng.uniform(0.4, 4.0),
        rng.uniform(0.4, 3.0),
        rng.uniform(-np.pi, np.pi),
    )


def brute_force_auroc(scores, labels) -> float:
    """O(n^2) pairwise AUROC: P(s+ > s-) + 0.5 P(s+ = s-)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        wins += np.count_nonzero(p > neg) + 0.5 * np.count_nonzero(p == neg)
    return wins / (len(pos) * len(neg))
