"""Planar geometry for the swarm simulator.

Coordinates are meters in a local east/north frame (x east, y north).
Headings follow the compass convention used by the robots: 0 degrees is
north, angles grow clockwise, and stored headings are normalized to
[0, 360).  All angular helpers in this module are written against that
convention; nothing here ever uses the math convention (ccw from +x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometric configuration (bad polygons etc.)."""


class Vec2(NamedTuple):
    """A point or displacement in the local planar frame, in meters."""

    x: float
    y: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def scaled(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def normalize_heading(deg: float) -> float:
    """Wrap an angle in degrees to [0, 360)."""
    h = math.fmod(deg, 360.0)
    if h < 0.0:
        h += 360.0
    # fmod can return 360.0 for inputs like -1e-14
    return 0.0 if h >= 360.0 else h


def wrap_angle(deg: float) -> float:
    """Wrap an angle in degrees to [-180, 180)."""
    a = math.fmod(deg + 180.0, 360.0)
    if a < 0.0:
        a += 360.0
    return a - 180.0


@dataclass(frozen=True)
class Pose:
    """Position plus compass heading (degrees in [0, 360))."""

    position: Vec2
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_heading(self.heading))


def bearing_to(origin: Vec2, target: Vec2) -> float:
    """Compass bearing from ``origin`` to ``target`` in [0, 360).

    North is 0, east is 90.  Coincident points map to 0 by convention.
    """
    dx = target[0] - origin[0]
    dy = target[1] - origin[1]
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return normalize_heading(math.degrees(math.atan2(dx, dy)))


def relative_bearing(observer: Pose, target: Vec2) -> float:
    """Signed clockwise angle from the observer's heading to ``target``.

    Returns degrees in [-180, 180): 0 is dead ahead, +90 is directly to
    the right of the current heading.  A target coincident with the
    observer's position returns 0.
    """
    if target[0] == observer.position.x and target[1] == observer.position.y:
        return 0.0
    return wrap_angle(bearing_to(observer.position, target) - observer.heading)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """True if open segments p1-p2 and q1-q2 properly intersect."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 0:
            return 1
        if v < 0:
            return -1
        return 0

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


class GeoFence:
    """A simple polygon delimiting an operational or monitoring area.

    Vertices are an ordered list of ``Vec2`` (either winding direction).
    The polygon must have at least three vertices, non-zero area, and no
    self-intersections.  Boundary points count as inside.
    """

    def __init__(self, vertices: Sequence[Sequence[float]]):
        verts = [Vec2(float(v[0]), float(v[1])) for v in vertices]
        if len(verts) < 3:
            raise GeometryError("geo-fence needs at least 3 vertices")
        self.vertices: list[Vec2] = verts
        self._xy = np.asarray(verts, dtype=float)
        # per-edge arrays, precomputed once (hot path: point queries)
        self._ax = self._xy[:, 0]
        self._ay = self._xy[:, 1]
        self._bx = np.roll(self._ax, -1)
        self._by = np.roll(self._ay, -1)
        self._ex = self._bx - self._ax
        self._ey = self._by - self._ay
        self._ll = self._ex * self._ex + self._ey * self._ey
        if abs(self.signed_area()) < 1e-12:
            raise GeometryError("geo-fence polygon has zero area")
        self._check_simple()

    def _check_simple(self) -> None:
        n = len(self.vertices)
        edges = [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                # adjacent edges share a vertex; skip those pairs
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                if _segments_intersect(*edges[i], *edges[j]):
                    raise GeometryError("geo-fence polygon self-intersects")

    def signed_area(self) -> float:
        x = self._xy[:, 0]
        y = self._xy[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return abs(self.signed_area())

    def centroid(self) -> Vec2:
        x = self._xy[:, 0]
        y = self._xy[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = cross.sum() / 2.0
        cx = float(np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a))
        cy = float(np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a))
        return Vec2(cx, cy)

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the vertex set."""
        return (
            float(self._xy[:, 0].min()),
            float(self._xy[:, 1].min()),
            float(self._xy[:, 0].max()),
            float(self._xy[:, 1].max()),
        )

    def edges(self) -> list[tuple[Vec2, Vec2]]:
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def edge_samples(self, spacing: float = 1.0) -> np.ndarray:
        """Boundary discretized at ``spacing`` meters, shape (M, 2).

        Each edge contributes its start vertex plus evenly spaced interior
        points; spacing along an edge never exceeds ``spacing``.
        """
        pts = []
        for a, b in self.edges():
            length = (b - a).norm()
            n = max(1, int(math.ceil(length / spacing)))
            for k in range(n):
                f = k / n
                pts.append((a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))
        return np.asarray(pts, dtype=float)

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized inside test for an (N, 2) array; boundary is inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        px = pts[:, 0][:, None]
        py = pts[:, 1][:, None]

        # standard even-odd ray cast (ray toward +x), then patch boundary
        cond = (self._ay[None, :] > py) != (self._by[None, :] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = self._ax[None, :] + (py - self._ay[None, :]) * self._ex[None, :] / self._ey[None, :]
        inside = (cond & (px < xint)).sum(axis=1) % 2 == 1

        # boundary points count as inside regardless of ray parity; only
        # outside-classified points can need the patch
        out = ~inside
        if out.any():
            d2 = self._segment_d2(px[out], py[out])
            inside[out] |= (d2 <= 1e-18).any(axis=1)
        return inside

    def _segment_d2(self, px, py) -> np.ndarray:
        """(N, E) squared distances from points to each edge segment."""
        wx = px - self._ax[None, :]
        wy = py - self._ay[None, :]
        t = np.clip((wx * self._ex[None, :] + wy * self._ey[None, :]) / self._ll[None, :],
                    0.0, 1.0)
        return (wx - t * self._ex[None, :]) ** 2 + (wy - t * self._ey[None, :]) ** 2

    def distances_to_boundary(self, points: np.ndarray) -> np.ndarray:
        """Min Euclidean distance from each point to any edge segment."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = self._segment_d2(pts[:, 0][:, None], pts[:, 1][:, None])
        return np.sqrt(d2.min(axis=1))


def point_in_polygon(p: Sequence[float], fence: GeoFence) -> bool:
    """True iff ``p`` is strictly inside the fence or on its boundary."""
    return bool(fence.contains_points(np.asarray([p], dtype=float))[0])


def distance_to_fence(p: Sequence[float], fence: GeoFence) -> float:
    """Minimum distance from ``p`` to the fence boundary (0 on the boundary)."""
    return float(fence.distances_to_boundary(np.asarray([p], dtype=float))[0])


def point_segment_distance(p, a, b) -> float:
    """Distance from point ``p`` to segment ``a``-``b``."""
    ex = b[0] - a[0]
    ey = b[1] - a[1]
    wx = p[0] - a[0]
    wy = p[1] - a[1]
    ll = ex * ex + ey * ey
    if ll == 0.0:
        return math.hypot(wx, wy)
    t = min(1.0, max(0.0, (wx * ex + wy * ey) / ll))
    return math.hypot(wx - t * ex, wy - t * ey)


def load_fence(vertices: Sequence[Sequence[float]] | None) -> GeoFence | None:
    """Build a GeoFence from a scenario-file vertex list (None passes through)."""
    if vertices is None:
        return None
    return GeoFence(vertices)
