"""Geometry primitives: containment, boundary distance, bearings."""

import math

import numpy as np
import pytest

from aquaswarm.geometry import (GeoFence, GeometryError, Pose, Vec2, bearing_to,
                                distance_to_fence, normalize_heading,
                                point_in_polygon, point_segment_distance,
                                relative_bearing, wrap_angle)

SQUARE = GeoFence([(-50, -50), (50, -50), (50, 50), (-50, 50)])


class TestPointInPolygon:
    def test_centroid_inside(self):
        assert point_in_polygon((0, 0), SQUARE)

    def test_outside_bounding_box(self):
        assert not point_in_polygon((100, 100), SQUARE)

    def test_boundary_counts_as_inside(self):
        assert point_in_polygon((50, 0), SQUARE)
        assert point_in_polygon((50, 50), SQUARE)  # vertex
        assert point_in_polygon((-50, 12.5), SQUARE)

    def test_concave_polygon(self):
        lshape = GeoFence([(0, 0), (4, 0), (4, 2), (2, 2), (2, 4), (0, 4)])
        assert point_in_polygon((1, 3), lshape)
        assert not point_in_polygon((3, 3), lshape)

    def test_agrees_with_winding_oracle_on_random_convex_polygons(self):
        # oracle: a point is inside a ccw convex polygon iff every edge cross
        # product is >= 0 (boundary included)
        rng = np.random.default_rng(20240821)
        for _ in range(1000):
            k = int(rng.integers(3, 9))
            angles = np.sort(rng.uniform(0, 2 * np.pi, k))
            if np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]])).min() < 0.05:
                continue
            radius = rng.uniform(5, 40)
            verts = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
            u = verts[1] - verts[0]
            v = verts[2] - verts[1]
            if u[0] * v[1] - u[1] * v[0] < 0:
                verts = verts[::-1]
            fence = GeoFence(verts)
            p = rng.uniform(-50, 50, 2)
            cross = [
                (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                for a, b in zip(verts, np.roll(verts, -1, axis=0))
            ]
            oracle = all(c >= -1e-9 for c in cross)
            assert point_in_polygon(p, fence) == oracle


class TestDistanceToFence:
    def test_center_of_square(self):
        assert distance_to_fence((0, 0), SQUARE) == pytest.approx(50.0)

    def test_on_vertex_is_zero(self):
        assert distance_to_fence((50, 50), SQUARE) == 0.0

    def test_outside_point(self):
        assert distance_to_fence((60, 0), SQUARE) == pytest.approx(10.0)

    def test_matches_min_over_segment_distances(self):
        rng = np.random.default_rng(7)
        edges = SQUARE.edges()
        for _ in range(200):
            p = rng.uniform(-80, 80, 2)
            oracle = min(point_segment_distance(p, a, b) for a, b in edges)
            assert distance_to_fence(p, SQUARE) == pytest.approx(oracle, abs=1e-12)

    def test_lipschitz_continuity(self):
        # perturbing the query by eps changes the distance by at most eps
        rng = np.random.default_rng(8)
        for _ in range(300):
            p = rng.uniform(-80, 80, 2)
            eps = rng.uniform(0, 0.5)
            q = p + eps * _unit(rng)
            d1 = distance_to_fence(p, SQUARE)
            d2 = distance_to_fence(q, SQUARE)
            assert abs(d1 - d2) <= eps + 1e-12


def _unit(rng):
    a = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(a), np.sin(a)])


class TestRelativeBearing:
    def test_dead_ahead(self):
        assert relative_bearing(Pose(Vec2(0, 0), 0.0), Vec2(0, 10)) == 0.0

    def test_east_is_plus_90(self):
        assert relative_bearing(Pose(Vec2(0, 0), 0.0), Vec2(10, 0)) == pytest.approx(90.0)

    def test_north_from_east_heading_is_minus_90(self):
        assert relative_bearing(Pose(Vec2(0, 0), 90.0), Vec2(0, 10)) == pytest.approx(-90.0)

    def test_coincident_target_reads_zero(self):
        assert relative_bearing(Pose(Vec2(3, 4), 123.0), Vec2(3, 4)) == 0.0

    def test_range_and_heading_periodicity(self):
        rng = np.random.default_rng(9)
        for _ in range(500):
            pose = Pose(Vec2(*rng.uniform(-10, 10, 2)), rng.uniform(-720, 720))
            target = Vec2(*rng.uniform(-10, 10, 2))
            b = relative_bearing(pose, target)
            assert -180.0 <= b < 180.0
            shifted = Pose(pose.position, pose.heading + 360.0 * rng.integers(-3, 4))
            assert relative_bearing(shifted, target) == pytest.approx(b, abs=1e-9)

    def test_matches_atan2_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(300):
            pose = Pose(Vec2(*rng.uniform(-10, 10, 2)), rng.uniform(0, 360))
            target = Vec2(*rng.uniform(-10, 10, 2))
            if target == pose.position:
                continue
            raw = math.degrees(math.atan2(target.x - pose.position.x,
                                          target.y - pose.position.y))
            expect = (raw - pose.heading + 180.0) % 360.0 - 180.0
            assert relative_bearing(pose, target) == pytest.approx(expect, abs=1e-9)


class TestGeoFenceValidation:
    def test_too_few_vertices(self):
        with pytest.raises(GeometryError):
            GeoFence([(0, 0), (1, 1)])

    def test_zero_area(self):
        with pytest.raises(GeometryError):
            GeoFence([(0, 0), (1, 1), (2, 2)])

    def test_self_intersection(self):
        with pytest.raises(GeometryError):
            GeoFence([(0, 0), (10, 10), (10, 0), (0, 10)])

    def test_area_and_centroid(self):
        assert SQUARE.area() == pytest.approx(10_000.0)
        c = SQUARE.centroid()
        assert (c.x, c.y) == pytest.approx((0.0, 0.0))

    def test_edge_samples_spacing(self):
        samples = SQUARE.edge_samples(1.0)
        assert len(samples) == 400
        gaps = np.hypot(*np.diff(np.vstack([samples, samples[:1]]), axis=0).T)
        assert gaps.max() <= 1.0 + 1e-9


class TestAngles:
    def test_normalize_heading(self):
        assert normalize_heading(360.0) == 0.0
        assert normalize_heading(-90.0) == 270.0
        assert normalize_heading(725.0) == pytest.approx(5.0)

    def test_wrap_angle(self):
        assert wrap_angle(180.0) == -180.0
        assert wrap_angle(-180.0) == -180.0
        assert wrap_angle(539.0) == pytest.approx(179.0)

    def test_bearing_to_cardinal_directions(self):
        origin = Vec2(0, 0)
        assert bearing_to(origin, Vec2(0, 5)) == 0.0
        assert bearing_to(origin, Vec2(5, 0)) == pytest.approx(90.0)
        assert bearing_to(origin, Vec2(0, -5)) == pytest.approx(180.0)
        assert bearing_to(origin, Vec2(-5, 0)) == pytest.approx(270.0)
