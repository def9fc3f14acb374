"""Boundary tracing, Freeman chain codes, area, moments and resampling.

Points are ``(x, y)`` in image coordinates (``y`` grows downward).  Anything
orientation-related (counterclockwise order, chain directions, signed area)
is expressed in the y-up frame, i.e. as the image appears on screen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .imgcore import InputError
from .skin import Blob

# screen-clockwise ring starting west: W, NW, N, NE, E, SE, S, SW
_RING = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_RING_INDEX = {d: i for i, d in enumerate(_RING)}

# Freeman directions with y up: 0=E, 1=NE, 2=N, ... 7=SE
_FREEMAN = {(1, 0): 0, (1, -1): 1, (0, -1): 2, (-1, -1): 3,
            (-1, 0): 4, (-1, 1): 5, (0, 1): 6, (1, 1): 7}
_FREEMAN_STEP = {v: k for k, v in _FREEMAN.items()}


@dataclass
class Contour:
    points: np.ndarray  # (N, 2) int, closed, counterclockwise on screen
    chain: np.ndarray   # (N,) Freeman codes, chain[i] leads from point i to i+1

    def __len__(self) -> int:
        return len(self.points)

    @property
    def perimeter(self) -> float:
        return polyline_length(self.points)

    def dump(self) -> str:
        """Debug text, one ``x y chain_code`` line per point."""
        lines = []
        for i, (x, y) in enumerate(self.points.tolist()):
            code = int(self.chain[i]) if i < len(self.chain) else -1
            lines.append(f"{x} {y} {code}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_dump(cls, text: str) -> "Contour":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        pts = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
        codes = [int(r[2]) for r in rows if int(r[2]) >= 0]
        return cls(pts, np.array(codes, dtype=np.int8))


class Moments(NamedTuple):
    m00: float
    m10: float
    m01: float


class Cog(NamedTuple):
    x: float
    y: float


def chain_codes(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return np.zeros(0, dtype=np.int8)
    steps = np.roll(points, -1, axis=0) - points
    try:
        return np.array([_FREEMAN[(int(dx), int(dy))] for dx, dy in steps], dtype=np.int8)
    except KeyError as exc:
        raise InputError("consecutive contour points are not 8-neighbors") from exc


def points_from_chain(start: tuple[int, int], chain) -> np.ndarray:
    pts = [tuple(start)]
    for code in list(chain)[:-1]:
        dx, dy = _FREEMAN_STEP[int(code)]
        pts.append((pts[-1][0] + dx, pts[-1][1] + dy))
    return np.array(pts, dtype=np.int64)


def trace_contour(blob: Blob) -> Contour:
    """Moore-neighbor boundary of ``blob`` with Jacob's stopping criterion,
    backed by a check for a repeated first move.

    Tracing starts at the top-most, then left-most pixel and the result is
    ordered counterclockwise as seen on screen.
    """
    if blob.area < 1:
        raise InputError("cannot trace an empty blob")
    mask, ox, oy = blob.mask(pad=1)
    rows = np.nonzero(mask.any(axis=1))[0]
    sy = int(rows[0])
    sx = int(np.nonzero(mask[sy])[0][0])
    start = (sx, sy)
    back0 = (sx - 1, sy)

    pts = [start]
    cur, back = start, back0
    limit = 4 * blob.area + 16
    m = mask
    while True:
        bi = _RING_INDEX[(back[0] - cur[0], back[1] - cur[1])]
        nxt = None
        for j in range(1, 9):
            dx, dy = _RING[(bi + j) % 8]
            if m[cur[1] + dy, cur[0] + dx]:
                pdx, pdy = _RING[(bi + j - 1) % 8]
                nxt = (cur[0] + dx, cur[1] + dy)
                back = (cur[0] + pdx, cur[1] + pdy)
                break
        if nxt is None:  # isolated pixel
            break
        # Jacob's criterion misses starts that are re-entered from another
        # side; a repeat of the first move closes the loop just as well.
        if cur == start and len(pts) > 2 and nxt == pts[1]:
            pts.pop()
            break
        cur = nxt
        if cur == start and back == back0:
            break
        pts.append(cur)
        if len(pts) > limit:
            raise RuntimeError("contour tracing failed to terminate")

    arr = np.array(pts, dtype=np.int64)
    if len(arr) > 1:
        arr = np.concatenate([arr[:1], arr[1:][::-1]])
    arr[:, 0] += ox
    arr[:, 1] += oy
    chain = chain_codes(arr) if len(arr) > 1 else np.zeros(0, dtype=np.int8)
    return Contour(arr, chain)


def _pts(c) -> np.ndarray:
    return np.asarray(c.points if isinstance(c, Contour) else c, dtype=np.float64).reshape(-1, 2)


def signed_area(c) -> float:
    """Shoelace sum in the y-up frame; positive for counterclockwise order."""
    p = _pts(c)
    x, y = p[:, 0], -p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def area(c) -> float:
    p = _pts(c)
    if len(p) < 3:
        raise InputError("area needs a closed contour of at least 3 points")
    return abs(signed_area(p))


def moments_cog(blob: Blob) -> tuple[Moments, Cog]:
    if blob.area < 1:
        raise InputError("moments of an empty blob")
    m00 = float(blob.area)
    m10 = float(blob.xs.sum())
    m01 = float(blob.ys.sum())
    return Moments(m00, m10, m01), Cog(m10 / m00, m01 / m00)


def polyline_length(points, closed: bool = True) -> float:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(p) < 2:
        return 0.0
    seg = (np.roll(p, -1, axis=0) - p) if closed else np.diff(p, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


# ---------------------------------------------------------------------------
# resampling


def _arc_resample(p: np.ndarray, n: int) -> np.ndarray:
    closed = np.vstack([p, p[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * cum[-1] / n
    x = np.interp(targets, cum, closed[:, 0])
    y = np.interp(targets, cum, closed[:, 1])
    return np.column_stack([x, y])


class _DividerWalk:
    """Walk a closed polyline in equal chords of length ``d``."""

    def __init__(self, p: np.ndarray):
        q = np.vstack([p, p[:1]])
        keep = np.ones(len(q), dtype=bool)
        keep[1:] = np.any(np.diff(q, axis=0) != 0, axis=1)
        q = q[keep]
        self.ax = q[:-1, 0].tolist()
        self.ay = q[:-1, 1].tolist()
        self.dx = np.diff(q[:, 0]).tolist()
        self.dy = np.diff(q[:, 1]).tolist()
        lens = np.hypot(np.diff(q[:, 0]), np.diff(q[:, 1]))
        self.lens = lens.tolist()
        self.cum = np.concatenate([[0.0], np.cumsum(lens)]).tolist()
        self.m = len(self.lens)
        self.length = self.cum[-1]

    def run(self, d: float, n: int, collect: bool = False):
        ax, ay, dxs, dys, lens, cum, m, L = (self.ax, self.ay, self.dx, self.dy,
                                              self.lens, self.cum, self.m, self.length)
        px, py = ax[0], ay[0]
        j, u = 0, 0.0
        lap = 0
        d2 = d * d
        out = [(px, py)] if collect else None
        for _ in range(n):
            while True:
                jj = j % m
                dx, dy = dxs[jj], dys[jj]
                ex, ey = ax[jj] - px, ay[jj] - py
                dd = dx * dx + dy * dy
                ed = ex * dx + ey * dy
                ee = ex * ex + ey * ey
                disc = ed * ed - dd * (ee - d2)
                root = (-ed + math.sqrt(disc)) / dd if disc > 0 else -1.0
                if root > u - 1e-12 and root <= 1.0 + 1e-12:
                    u = min(max(root, 0.0), 1.0)
                    px, py = ax[jj] + u * dx, ay[jj] + u * dy
                    break
                j += 1
                u = 0.0
                if j % m == 0:
                    lap += 1
                if lap > 2:
                    return (math.inf, out)
            if collect:
                out.append((px, py))
        jj = j % m
        return (lap * L + cum[jj] + u * lens[jj], out)


def resample(c, n: int = 128) -> np.ndarray:
    """``n`` points spaced by equal chords along the closed contour.

    The chord length is solved so the walk closes on the start point, which
    makes the output an equilateral polygon; resampling that polygon again
    reproduces it.  Contours where no closing chord exists fall back to
    plain arc-length spacing.
    """
    p = _pts(c)
    if n < 8:
        raise InputError("resample count must be at least 8")
    if len(p) < 3:
        raise InputError("resampling needs at least 3 contour points")
    walk = _DividerWalk(p)
    if walk.m < 2 or walk.length <= 0:
        raise InputError("degenerate contour")
    L = walk.length
    tol = 1e-9 * max(L, 1.0)

    def residual(d):
        end, _ = walk.run(d, n)
        return min(end, 3 * L) - L

    d_hi = L / n
    r_hi = residual(d_hi)
    if abs(r_hi) <= tol:
        d = d_hi
    else:
        if r_hi < 0:
            return _arc_resample(p, n)
        # chords of a pixel chain are rarely shorter than 2/3 of its arc
        d_lo = d_hi / 1.5
        if residual(d_lo) > 0:
            d_lo = d_hi * 1e-3
            if residual(d_lo) > 0:
                return _arc_resample(p, n)
        d = brentq(residual, d_lo, d_hi, xtol=1e-10 * d_hi)
        if abs(residual(d)) > 1e-6 * max(L, 1.0):
            return _arc_resample(p, n)
    _, pts = walk.run(d, n - 1, collect=True)
    return np.array(pts, dtype=np.float64)
