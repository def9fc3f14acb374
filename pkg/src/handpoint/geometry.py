"""Convex hull, convexity defects, point-line distance and k-curvature."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import InputError


@dataclass(frozen=True)
class Hull:
    # positions into the source point sequence, counterclockwise on screen,
    # rotated to start at the smallest position
    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Defect:
    start_idx: int
    end_idx: int
    far_idx: int
    depth: float


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> Hull:
    """Andrew's monotone chain; collinear points are dropped.

    Duplicate points resolve to their first position.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(p) < 3:
        raise InputError("convex hull needs at least 3 points")
    order = np.lexsort((np.arange(len(p)), p[:, 1], p[:, 0]))
    uniq = []
    last = None
    for i in order.tolist():
        key = (p[i, 0], p[i, 1])
        if key != last:
            uniq.append(i)
            last = key
    if len(uniq) == 1:
        raise InputError("all points identical")
    pts = p.tolist()

    # Image rows point down, so a chain that turns left in (x, row) turns
    # right on screen; build it that way and reverse at the end.
    lower: list[int] = []
    for i in uniq:
        while len(lower) >= 2 and _cross(pts[lower[-2]], pts[lower[-1]], pts[i]) <= 0:
            lower.pop()
        lower.append(i)
    upper: list[int] = []
    for i in reversed(uniq):
        while len(upper) >= 2 and _cross(pts[upper[-2]], pts[upper[-1]], pts[i]) <= 0:
            upper.pop()
        upper.append(i)
    ring = lower[:-1] + upper[:-1]
    if len(ring) == 1:
        ring = [uniq[0], uniq[-1]]
    ring = ring[::-1]
    k = ring.index(min(ring))
    return Hull(tuple(ring[k:] + ring[:k]))


def point_line_distance(c, a, b) -> float:
    """Distance from ``c`` to the infinite line through ``a`` and ``b``.

    ``|(x2-x1)(y1-y0) - (x1-x0)(y2-y1)| / |b - a|`` with ``c=(x0, y0)``,
    ``a=(x1, y1)``, ``b=(x2, y2)``.  The often-quoted variant with
    ``(y2-y0)`` in the second term is not a distance (it is neither
    translation invariant nor zero on the line).
    """
    x0, y0 = float(c[0]), float(c[1])
    x1, y1 = float(a[0]), float(a[1])
    x2, y2 = float(b[0]), float(b[1])
    norm = math.hypot(x2 - x1, y2 - y1)
    if norm == 0.0:
        raise InputError("line endpoints coincide")
    return abs((x2 - x1) * (y1 - y0) - (x1 - x0) * (y2 - y1)) / norm


def convexity_defects(points, hull: Hull) -> list[Defect]:
    """Deepest contour point between each pair of consecutive hull vertices.

    Ties go to the earliest point in traversal order; zero-depth defects
    are omitted.
    """
    p = np.asarray(getattr(points, "points", points), dtype=np.float64).reshape(-1, 2)
    n = len(p)
    idx = list(hull.indices)
    if len(idx) < 2:
        return []
    out = []
    for s, e in zip(idx, idx[1:] + idx[:1]):
        gap = (e - s) % n
        if gap < 2:
            continue
        between = (s + np.arange(1, gap)) % n
        a, b = p[s], p[e]
        dx, dy = b[0] - a[0], b[1] - a[1]
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            continue
        c = p[between]
        d = np.abs(dx * (a[1] - c[:, 1]) - (a[0] - c[:, 0]) * dy) / norm
        j = int(np.argmax(d))
        if d[j] > 0:
            out.append(Defect(s, e, int(between[j]), float(d[j])))
    return out


def angle_between(u, v) -> float:
    """Unsigned angle in degrees between two vectors; 180 if either is zero."""
    nu = math.hypot(u[0], u[1])
    nv = math.hypot(v[0], v[1])
    if nu == 0.0 or nv == 0.0:
        return 180.0
    cosang = (u[0] * v[0] + u[1] * v[1]) / (nu * nv)
    return math.degrees(math.acos(min(1.0, max(-1.0, cosang))))


def k_curvature_angle(points, i: int, k: int) -> float:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(p)
    if n < 2 * k + 1:
        raise InputError(f"need at least {2 * k + 1} points for k={k}")
    pi = p[i % n]
    u = p[(i - k) % n] - pi
    v = p[(i + k) % n] - pi
    return angle_between(u, v)


def k_curvature_angles(points, k: int) -> np.ndarray:
    """Vectorized ``k_curvature_angle`` over every index."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(p)
    if n < 2 * k + 1:
        raise InputError(f"need at least {2 * k + 1} points for k={k}")
    u = np.roll(p, k, axis=0) - p
    v = np.roll(p, -k, axis=0) - p
    nu = np.hypot(u[:, 0], u[:, 1])
    nv = np.hypot(v[:, 0], v[:, 1])
    ok = (nu > 0) & (nv > 0)
    cosang = np.einsum("ij,ij->i", u, v) / np.where(ok, nu * nv, 1.0)
    ang = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return np.where(ok, ang, 180.0)
