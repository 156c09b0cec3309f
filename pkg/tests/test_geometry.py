import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarqc.geometry import (
    LidarPoint,
    OrientedBox3D,
    PointCloud,
    bev_polygon,
    contains_point,
    intersection_area_bev,
    iou_3d,
    iou_bev,
    normalize_yaw,
    points_in_box,
    polygon_area,
    relative_size,
    surface_area,
    volume,
)
from oracles import mc_iou_3d, mc_iou_bev, point_inside_box, random_box_params


def box(*params) -> OrientedBox3D:
    return OrientedBox3D(*params)


finite_boxes = st.builds(
    OrientedBox3D,
    cx=st.floats(-50, 50),
    cy=st.floats(-50, 50),
    cz=st.floats(-5, 5),
    l=st.floats(0.1, 20),
    w=st.floats(0.1, 20),
    h=st.floats(0.1, 10),
    yaw=st.floats(-10, 10),
)


class TestBoxType:
    def test_rejects_non_positive_extents(self):
        with pytest.raises(ValueError):
            box(0, 0, 0, 0.0, 1, 1, 0)
        with pytest.raises(ValueError):
            box(0, 0, 0, 1, -1, 1, 0)

    def test_yaw_normalized_to_half_open_interval(self):
        assert box(0, 0, 0, 1, 1, 1, math.pi).yaw == pytest.approx(-math.pi)
        assert box(0, 0, 0, 1, 1, 1, 3 * math.pi / 2).yaw == pytest.approx(-math.pi / 2)
        b = box(0, 0, 0, 1, 1, 1, -math.pi)
        assert -math.pi <= b.yaw < math.pi

    @given(theta=st.floats(-100, 100))
    def test_normalize_yaw_range(self, theta):
        assert -math.pi <= normalize_yaw(theta) < math.pi

    def test_point_cloud_shape_checks(self):
        with pytest.raises(ValueError):
            PointCloud("f", np.zeros((3, 3)))
        with pytest.raises(ValueError):
            PointCloud("f", np.array([[0.0, 0.0, np.nan, 0.0]]))
        assert len(PointCloud("f")) == 0


class TestBevPolygon:
    def test_axis_aligned_square(self):
        verts = bev_polygon(box(0, 0, 0, 2, 2, 2, 0))
        got = {(round(x, 12), round(y, 12)) for x, y in verts}
        assert got == {(1, 1), (-1, 1), (-1, -1), (1, -1)}

    def test_quarter_turn_square_same_vertex_set(self):
        verts = bev_polygon(box(0, 0, 0, 2, 2, 2, math.pi / 2))
        got = {(round(x, 9), round(y, 9)) for x, y in verts}
        assert got == {(1, 1), (-1, 1), (-1, -1), (1, -1)}

    def test_rotation_preserves_area(self):
        verts = bev_polygon(box(1, 1, 0, 2, 1, 1, math.pi / 4))
        assert polygon_area(verts) == pytest.approx(2.0, abs=1e-12)

    @given(b=finite_boxes)
    @settings(max_examples=200)
    def test_area_matches_extents(self, b):
        assert polygon_area(bev_polygon(b)) == pytest.approx(b.l * b.w, rel=1e-9)


class TestIouBev:
    def test_identity_is_exactly_one(self):
        b = box(1.3, -2.0, 0.4, 3.7, 1.6, 1.5, 0.83)
        assert iou_bev(b, b) == 1.0

    def test_disjoint_is_zero(self):
        a = box(0, 0, 0, 2, 2, 2, 0.3)
        b = box(10, 10, 0, 2, 2, 2, -0.7)
        assert iou_bev(a, b) == 0.0

    def test_offset_unit_squares(self):
        # Overlap 0.5, union 1.5 in closed form.
        a = box(0, 0, 0, 1, 1, 1, 0)
        b = box(0.5, 0, 0, 1, 1, 1, 0)
        assert iou_bev(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_touching_edges_count_as_zero(self):
        a = box(0, 0, 0, 2, 2, 2, 0)
        b = box(2, 0, 0, 2, 2, 2, 0)
        assert iou_bev(a, b) == 0.0

    def test_monte_carlo_spot_check(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pa = random_box_params(rng)
            pb = random_box_params(rng)
            a, b = box(*pa), box(*pb)
            estimate = mc_iou_bev(pa, pb, 200_000, rng)
            assert iou_bev(a, b) == pytest.approx(estimate, abs=2e-2)


class TestIou3d:
    def test_identity_is_exactly_one(self):
        b = box(0.2, 0.4, -1.0, 2.2, 0.9, 1.4, -2.1)
        assert iou_3d(b, b) == 1.0

    def test_stacked_boxes_touching_in_z(self):
        a = box(0, 0, 0.5, 2, 2, 1, 0.5)
        b = box(0, 0, 1.5, 2, 2, 1, 0.5)
        assert iou_3d(a, b) == 0.0

    def test_offset_unit_cubes(self):
        a = box(0, 0, 0, 1, 1, 1, 0)
        b = box(0.5, 0, 0, 1, 1, 1, 0)
        assert iou_3d(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_monte_carlo_spot_check(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pa = random_box_params(rng)
            pb = random_box_params(rng)
            a, b = box(*pa), box(*pb)
            estimate = mc_iou_3d(pa, pb, 200_000, rng)
            assert iou_3d(a, b) == pytest.approx(estimate, abs=2e-2)


class TestInvariants:
    @given(a=finite_boxes, b=finite_boxes)
    @settings(max_examples=200)
    def test_symmetry_and_bounds(self, a, b):
        ab = iou_bev(a, b)
        ba = iou_bev(b, a)
        assert abs(ab - ba) <= 1e-12
        assert 0.0 <= ab <= 1.0
        ab3 = iou_3d(a, b)
        assert abs(ab3 - iou_3d(b, a)) <= 1e-12
        assert 0.0 <= ab3 <= 1.0

    @given(a=finite_boxes)
    @settings(max_examples=100)
    def test_self_iou_is_one(self, a):
        assert iou_bev(a, a) == 1.0
        assert iou_3d(a, a) == 1.0

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            pa = random_box_params(rng)
            pb = random_box_params(rng)
            a, b = box(*pa), box(*pb)
            tx, ty = rng.uniform(-20, 20, 2)
            phi = rng.uniform(-np.pi, np.pi)
            c, s = math.cos(phi), math.sin(phi)

            def moved(bx: OrientedBox3D) -> OrientedBox3D:
                nx = c * bx.cx - s * bx.cy + tx
                ny = s * bx.cx + c * bx.cy + ty
                return OrientedBox3D(nx, ny, bx.cz, bx.l, bx.w, bx.h, bx.yaw + phi)

            assert abs(iou_bev(a, b) - iou_bev(moved(a), moved(b))) <= 1e-9
            assert abs(iou_3d(a, b) - iou_3d(moved(a), moved(b))) <= 1e-9


class TestContainment:
    def test_center_inside(self):
        b = box(3, -1, 2, 1.5, 1.0, 0.8, 1.1)
        assert contains_point(b, LidarPoint(3, -1, 2, 0.5))

    def test_rotated_box_point_from_hand_rotation(self):
        # Box frame coordinates of (1.2, 0, 0) under yaw pi/4 are
        # (0.8485..., -0.8485...), both within the half extents.
        b = box(0, 0, 0, 2, 2, 2, math.pi / 4)
        assert contains_point(b, LidarPoint(1.2, 0.0, 0.0, 0.0))

    def test_just_outside_face(self):
        b = box(0, 0, 0, 2, 2, 2, 0)
        assert not contains_point(b, LidarPoint(1.0 + 1e-9, 0, 0, 0))
        assert contains_point(b, LidarPoint(1.0, 0, 0, 0))  # closed face

    def test_fuzz_against_projection_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            params = random_box_params(rng)
            b = box(*params)
            pts = rng.uniform(-4, 4, size=(50, 3))
            expected = point_inside_box(params, pts)
            got = points_in_box(b, pts)
            np.testing.assert_array_equal(got, expected)
            for p, e in zip(pts, expected):
                assert contains_point(b, p) == e


class TestSizeFeatures:
    def test_direct_formulas(self):
        b = box(0, 0, 0, 2, 3, 4, 0)
        assert volume(b) == 24.0
        assert surface_area(b) == 52.0
        assert relative_size(b) == pytest.approx(24.0 / 52.0)

    def test_unit_cube(self):
        b = box(0, 0, 0, 1, 1, 1, 0)
        assert volume(b) == 1.0
        assert surface_area(b) == 6.0
        assert relative_size(b) == pytest.approx(1.0 / 6.0)

    def test_relative_size_scales_linearly(self):
        b = box(0, 0, 0, 1.7, 0.9, 1.2, 0.3)
        scaled = box(0, 0, 0, 3 * 1.7, 3 * 0.9, 3 * 1.2, 0.3)
        assert relative_size(scaled) == pytest.approx(3 * relative_size(b), rel=1e-12)


def test_intersection_area_degenerate_contact():
    a = box(0, 0, 0, 2, 2, 2, 0)
    b = box(2, 2, 0, 2, 2, 2, 0)  # corner contact only
    assert intersection_area_bev(a, b) == 0.0
