"""2D geometry helpers: angles, oriented boxes, polylines and polygon tests.

World frame is a flat Cartesian plane in meters, x east, y north, yaw
counter-clockwise from +x. All polygons are simple (non self-intersecting)
and stored as (K, 2) float arrays without a repeated closing vertex.
"""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a):
    """Normalize an angle (scalar or array) to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = -((-a + math.pi) % (2.0 * math.pi) - math.pi)
    return float(out) if out.ndim == 0 else out


def rot2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def box_corners(cx: float, cy: float, yaw: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented box, CCW starting front-left, shape (4, 2)."""
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    return local @ rot2d(yaw).T + np.array([cx, cy])


def boxes_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons given as (K, 2) corner arrays.

    Returns True when the polygons overlap (touching counts as overlap).
    """
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        # outward normals; normalization is not needed for an overlap test
        axes = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        pa = a @ axes.T
        pb = b @ axes.T
        if np.any(pa.max(axis=0) < pb.min(axis=0)) or np.any(pb.max(axis=0) < pa.min(axis=0)):
            return False
    return True


def polygon_area(poly: np.ndarray) -> float:
    """Signed area (positive for CCW orientation)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd (crossing number) containment test, vectorized over points.

    points: (N, 2), poly: (K, 2). Points exactly on an edge may land on
    either side; callers should not rely on boundary behavior.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for i in range(len(poly)):
        crosses = (y1[i] > y) != (y2[i] > y)
        if not np.any(crosses):
            continue
        x_int = x1[i] + (y[crosses] - y1[i]) * (x2[i] - x1[i]) / (y2[i] - y1[i])
        hit = np.zeros_like(inside)
        hit[crosses] = x[crosses] < x_int
        inside ^= hit
    return inside[0] if single else inside


def point_in_any_polygon(point, polygons) -> bool:
    return any(bool(points_in_polygon(np.asarray(point, dtype=float), p)) for p in polygons)


def clip_polygon(poly: np.ndarray, xmin: float, ymin: float, xmax: float, ymax: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon against an axis-aligned rectangle.

    Returns a (K', 2) array; K' == 0 when the polygon lies fully outside.
    """

    def clip_axis(pts, axis, bound, keep_ge):
        if len(pts) == 0:
            return pts
        vals = pts[:, axis]
        ins = vals >= bound if keep_ge else vals <= bound
        if ins.all():
            return pts
        out = []
        other = 1 - axis
        n = len(pts)
        for i in range(n):
            j = (i - 1) % n
            if ins[i]:
                if not ins[j]:
                    t = (bound - vals[j]) / (vals[i] - vals[j])
                    cross = [0.0, 0.0]
                    cross[axis] = bound
                    cross[other] = pts[j, other] + t * (pts[i, other] - pts[j, other])
                    out.append(cross)
                out.append(pts[i])
            elif ins[j]:
                t = (bound - vals[j]) / (vals[i] - vals[j])
                cross = [0.0, 0.0]
                cross[axis] = bound
                cross[other] = pts[j, other] + t * (pts[i, other] - pts[j, other])
                out.append(cross)
        return np.asarray(out, dtype=float).reshape(-1, 2)

    pts = np.asarray(poly, dtype=float)
    pts = clip_axis(pts, 0, xmin, True)
    pts = clip_axis(pts, 0, xmax, False)
    pts = clip_axis(pts, 1, ymin, True)
    pts = clip_axis(pts, 1, ymax, False)
    return pts


def polyline_lengths(poly: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex of a polyline, starting at 0."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(poly: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at (approximately) uniform arc-length spacing."""
    s = polyline_lengths(poly)
    total = s[-1]
    n = max(2, int(round(total / spacing)) + 1)
    si = np.linspace(0.0, total, n)
    x = np.interp(si, s, poly[:, 0])
    y = np.interp(si, s, poly[:, 1])
    return np.stack([x, y], axis=1)


def point_along_polyline(poly: np.ndarray, station):
    """Interpolate (x, y) and tangent heading at arc-length station(s)."""
    s = polyline_lengths(poly)
    st = np.clip(np.asarray(station, dtype=float), 0.0, s[-1])
    x = np.interp(st, s, poly[:, 0])
    y = np.interp(st, s, poly[:, 1])
    # heading from the segment containing each station
    idx = np.clip(np.searchsorted(s, st, side="right") - 1, 0, len(poly) - 2)
    d = poly[idx + 1] - poly[idx]
    yaw = np.arctan2(d[..., 1], d[..., 0])
    return x, y, yaw


def project_to_polyline(poly: np.ndarray, point) -> tuple[float, float]:
    """Project a point onto a polyline.

    Returns (station, signed lateral offset); the offset is positive on the
    left side of the travel direction.
    """
    p = np.asarray(point, dtype=float)
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom == 0.0, 1.0, denom)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", p - proj, p - proj)
    i = int(np.argmin(d2))
    s = polyline_lengths(poly)
    station = s[i] + t[i] * math.dist(tuple(a[i]), tuple(b[i]))
    seg = ab[i]
    seg_len = math.hypot(seg[0], seg[1]) or 1.0
    lateral = float(np.cross(seg / seg_len, p - proj[i]))
    return float(station), lateral


def offset_polyline(poly: np.ndarray, offset: float) -> np.ndarray:
    """Offset a polyline to its left by `offset` meters (right if negative).

    Uses per-vertex averaged normals; adequate for the gentle curvatures
    produced by the scenario generators.
    """
    d = np.diff(poly, axis=0)
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    t = d / norm
    # vertex tangents: average of adjacent segment tangents
    vt = np.vstack([t[0], 0.5 * (t[1:] + t[:-1]), t[-1]])
    vt /= np.maximum(np.linalg.norm(vt, axis=1, keepdims=True), 1e-12)
    normals = np.stack([-vt[:, 1], vt[:, 0]], axis=1)
    return poly + offset * normals


def corridor_polygon(centerline: np.ndarray, width: float) -> np.ndarray:
    """Closed polygon covering a corridor of the given width around a centerline."""
    left = offset_polyline(centerline, 0.5 * width)
    right = offset_polyline(centerline, -0.5 * width)
    return np.vstack([left, right[::-1]])
