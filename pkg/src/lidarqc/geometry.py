"""Exact geometry for yaw-rotated 3D boxes.

Boxes rotate about the vertical (z) axis only, so every footprint is a
convex quadrilateral and 3D overlap factorizes into footprint overlap
times vertical-extent overlap.  All arithmetic is 64-bit float: overlap
ratios near decision thresholds must not flip due to precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Footprint intersections below this area (m^2) count as empty contact.
DEGENERATE_AREA = 1e-12


def normalize_yaw(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class OrientedBox3D:
    """Box center (cx, cy, cz), extents (l, w, h), yaw about z in radians.

    Extents must be strictly positive; yaw is normalized to [-pi, pi) on
    construction.
    """

    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float

    def __post_init__(self) -> None:
        if not (self.l > 0.0 and self.w > 0.0 and self.h > 0.0):
            raise ValueError(
                f"box extents must be positive, got l={self.l}, w={self.w}, h={self.h}"
            )
        if not all(
            math.isfinite(v)
            for v in (self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw)
        ):
            raise ValueError("box parameters must be finite")
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def z_bottom(self) -> float:
        return self.cz - self.h / 2.0

    @property
    def z_top(self) -> float:
        return self.cz + self.h / 2.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw], dtype=float
        )


@dataclass(frozen=True)
class LidarPoint:
    """Single lidar return: position in meters, reflectance in [0, 1]."""

    x: float
    y: float
    z: float
    r: float = 0.0


@dataclass
class PointCloud:
    """One frame's returns as an (N, 4) float array of x, y, z, r."""

    frame_id: str
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"point cloud must be (N, 4), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite values")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]


def volume(box: OrientedBox3D) -> float:
    """l * w * h in cubic meters."""
    return box.l * box.w * box.h


def surface_area(box: OrientedBox3D) -> float:
    """2 (lw + lh + wh) in square meters."""
    return 2.0 * (box.l * box.w + box.l * box.h + box.w * box.h)


def relative_size(box: OrientedBox3D) -> float:
    """volume / surface_area, a length scale in meters."""
    return volume(box) / surface_area(box)


def bev_polygon(box: OrientedBox3D) -> np.ndarray:
    """Footprint corners under yaw rotation, (4, 2), counter-clockwise."""
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    dx = box.l / 2.0
    dy = box.w / 2.0
    local = ((dx, dy), (-dx, dy), (-dx, -dy), (dx, -dy))
    return np.array(
        [[box.cx + c * px - s * py, box.cy + s * px + c * py] for px, py in local]
    )


def polygon_area(vertices) -> float:
    """Shoelace area of a counter-clockwise simple polygon."""
    n = len(vertices)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return max(0.5 * acc, 0.0)


def _clip_convex(subject, clip) -> list:
    """Sutherland-Hodgman clip of a convex CCW subject by a convex CCW polygon.

    Points exactly on a clip edge count as inside, so clipping a polygon
    by itself returns its own vertex list unchanged.
    """
    output = [(float(p[0]), float(p[1])) for p in subject]
    m = len(clip)
    for i in range(m):
        if len(output) < 3:
            return []
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % m]
        ex = bx - ax
        ey = by - ay
        pts = output
        sides = [ex * (py - ay) - ey * (px - ax) for px, py in pts]
        output = []
        n = len(pts)
        for j in range(n):
            k = (j + 1) % n
            sj = sides[j]
            sk = sides[k]
            if sj >= 0.0:
                output.append(pts[j])
            if sj * sk < 0.0:
                t = sj / (sj - sk)
                px, py = pts[j]
                qx, qy = pts[k]
                output.append((px + t * (qx - px), py + t * (qy - py)))
    return output if len(output) >= 3 else []


def intersection_area_bev(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Footprint intersection area via convex polygon clipping."""
    ra = 0.5 * math.hypot(a.l, a.w)
    rb = 0.5 * math.hypot(b.l, b.w)
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb:
        return 0.0
    poly = _clip_convex(bev_polygon(a), bev_polygon(b))
    if not poly:
        return 0.0
    area = polygon_area(poly)
    return 0.0 if area < DEGENERATE_AREA else area


def iou_bev(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Bird's-eye-view intersection over union of the two footprints."""
    inter = intersection_area_bev(a, b)
    if inter == 0.0:
        return 0.0
    # Union terms use the same shoelace pipeline as the intersection so
    # iou_bev(a, a) is exactly 1.0.
    area_a = polygon_area(bev_polygon(a))
    area_b = polygon_area(bev_polygon(b))
    return inter / (area_a + area_b - inter)


def iou_3d(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """3D intersection over union; footprint overlap times z-extent overlap."""
    inter_area = intersection_area_bev(a, b)
    if inter_area == 0.0:
        return 0.0
    dz = min(a.z_top, b.z_top) - max(a.z_bottom, b.z_bottom)
    if dz <= 0.0:
        return 0.0
    inter = inter_area * dz
    # Union terms reuse the footprint-shoelace and z_top - z_bottom
    # pipelines so iou_3d(a, a) is exactly 1.0.
    vol_a = polygon_area(bev_polygon(a)) * (a.z_top - a.z_bottom)
    vol_b = polygon_area(bev_polygon(b)) * (b.z_top - b.z_bottom)
    return inter / (vol_a + vol_b - inter)


def contains_point(box: OrientedBox3D, p) -> bool:
    """Whether p lies inside the box, boundary included.

    Accepts a LidarPoint or any (x, y, z, ...) sequence.  The point is
    expressed in the box frame (translate by -center, rotate by -yaw) and
    tested against the closed faces.
    """
    if isinstance(p, LidarPoint):
        px, py, pz = p.x, p.y, p.z
    else:
        px, py, pz = float(p[0]), float(p[1]), float(p[2])
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    dx = px - box.cx
    dy = py - box.cy
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    return (
        abs(local_x) <= box.l / 2.0
        and abs(local_y) <= box.w / 2.0
        and abs(pz - box.cz) <= box.h / 2.0
    )


def points_in_box(box: OrientedBox3D, points: np.ndarray) -> np.ndarray:
    """Vectorized containment mask for an (N, >=3) array of points."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros(0, dtype=bool)
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    dx = pts[:, 0] - box.cx
    dy = pts[:, 1] - box.cy
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    return (
        (np.abs(local_x) <= box.l / 2.0)
        & (np.abs(local_y) <= box.w / 2.0)
        & (np.abs(pts[:, 2] - box.cz) <= box.h / 2.0)
    )
