"""Hand selection, fingertip detection, pointing classification and the
pointing-direction estimators.

Two independent fingertip detectors run on each hand:

* corner method -- sharp k-curvature corners on the length-normalized
  contour, keeping a single dominant maximum of the distance to the COG;
* hull method -- hull vertices flanking convexity defects that lie clearly
  beyond the average defect distance from the COG.

Angles are degrees counterclockwise from +x with y pointing up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .contour import Cog, moments_cog, resample, trace_contour
from .geometry import (Defect, Hull, angle_between, convex_hull, convexity_defects,
                       k_curvature_angles)
from .imgcore import InputError
from .skin import Blob

METHODS = ("cog", "next_defect", "bisector")


@dataclass(frozen=True)
class PointingParams:
    k: int = 16
    theta_t: float = 30.0
    dominant_frac: float = 1.0 / 6.0
    dominant_basis: str = "perimeter"  # perimeter | resampled
    cd_margin: float = 0.25
    index_band_lo: float = 80.0
    index_band_hi: float = 130.0
    secondary_band: tuple[float, float] | None = None
    min_blob_area: int = 200
    resample_n: int = 128
    min_defect_depth: float = 0.12  # fraction of sqrt(blob area)
    decision: str = "both"  # both | corner | hull

    def __post_init__(self):
        if not 0 < self.theta_t < 180:
            raise InputError("theta_t must lie in (0, 180)")
        if not 0 < self.dominant_frac < 1:
            raise InputError("dominant_frac must lie in (0, 1)")
        if self.k < 1 or self.resample_n < 2 * self.k + 1:
            raise InputError("resample_n must be at least 2k+1")
        if self.decision not in ("both", "corner", "hull"):
            raise InputError(f"unknown decision mode {self.decision!r}")
        if self.dominant_basis not in ("perimeter", "resampled"):
            raise InputError(f"unknown dominant_basis {self.dominant_basis!r}")


class BodyAssignment(NamedTuple):
    head: Blob | None
    left_hand: Blob | None
    right_hand: Blob | None


class FingertipCandidate(NamedTuple):
    contour_index: int
    point: tuple[float, float]
    angle_deg: float
    dist_to_cog: float


@dataclass
class HullFingertips:
    tips: list[tuple[int, int]]  # contour indices: (representative, EP member)
    ep: list[int]
    cd_avg: float | None
    defects: list[Defect]


@dataclass
class PointingDecision:
    gesture: str  # pointing | not_pointing | no_hand
    fingertip: tuple[float, float] | None = None
    angle_by_method: dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def direction_deg(dx: float, dy: float) -> float:
    """Angle of an image-space vector, counterclockwise from +x, y up."""
    a = math.degrees(math.atan2(-dy, dx)) % 360.0
    return 0.0 if a >= 360.0 else a


# ---------------------------------------------------------------------------


def select_body_blobs(blobs: list[Blob], params: PointingParams = PointingParams()) -> BodyAssignment:
    """Largest blob is the head; the next two are hands split by COG x.

    A lone hand is placed on the side of the head it lies on.
    """
    kept = [b for b in blobs if b.area >= params.min_blob_area]
    kept.sort(key=lambda b: -b.area)
    if not kept:
        return BodyAssignment(None, None, None)
    head = kept[0]
    hands = kept[1:3]
    if not hands:
        return BodyAssignment(head, None, None)
    xs = [moments_cog(h)[1].x for h in hands]
    if len(hands) == 2:
        left, right = (hands[0], hands[1]) if xs[0] <= xs[1] else (hands[1], hands[0])
        return BodyAssignment(head, left, right)
    if xs[0] < moments_cog(head)[1].x:
        return BodyAssignment(head, hands[0], None)
    return BodyAssignment(head, None, hands[0])


def corner_candidates(resampled, cog: Cog, params: PointingParams = PointingParams()) -> list[FingertipCandidate]:
    """Indices whose k-curvature angle is below ``theta_t``.

    Only convex corners are kept: the corner must lie farther from the COG
    than the midpoint of its two arm points, which separates fingertips from
    the gaps between fingers.
    """
    p = np.asarray(resampled, dtype=np.float64).reshape(-1, 2)
    k = params.k
    if len(p) < 2 * k + 1:
        return []
    ang = k_curvature_angles(p, k)
    c = np.array([cog.x, cog.y])
    dist = np.hypot(*(p - c).T)
    mid = 0.5 * (np.roll(p, k, axis=0) + np.roll(p, -k, axis=0))
    mid_dist = np.hypot(*(mid - c).T)
    sel = np.nonzero((ang < params.theta_t) & (dist > mid_dist))[0]
    return [FingertipCandidate(int(i), (float(p[i, 0]), float(p[i, 1])), float(ang[i]), float(dist[i]))
            for i in sel]


def _cyclic_gap(i: int, j: int, n: int) -> int:
    d = abs(i - j) % n
    return min(d, n - d)


def dominant_fingertip(cands: list[FingertipCandidate], perimeter: float,
                       params: PointingParams = PointingParams(),
                       n: int | None = None) -> FingertipCandidate | None:
    """The farthest candidate, if it beats the runner-up by a margin of
    ``dominant_frac`` of the contour length.

    The runner-up is taken among candidates at least ``k`` indices away from
    the winner, so the winner's own neighbors do not compete with it.
    """
    if not cands:
        return None
    n = n if n is not None else params.resample_n
    best = max(cands, key=lambda c: (c.dist_to_cog, -c.contour_index))
    rivals = [c.dist_to_cog for c in cands
              if _cyclic_gap(c.contour_index, best.contour_index, n) >= params.k]
    if not rivals:
        return best
    if best.dist_to_cog - max(rivals) > perimeter * params.dominant_frac:
        return best
    return None


def deep_defects(defects: list[Defect], blob_area: float,
                 params: PointingParams = PointingParams()) -> list[Defect]:
    floor = params.min_defect_depth * math.sqrt(max(blob_area, 0.0))
    return [d for d in defects if d.depth >= floor]


def hull_defect_fingertips(points, hull: Hull, defects: list[Defect], cog: Cog,
                           params: PointingParams = PointingParams(),
                           separators: list[Defect] | None = None) -> HullFingertips:
    """Fingertips from the hull vertices that bound convexity defects.

    ``CDAvg`` is the mean COG distance of the far points of all ``defects``.
    The eligible set EP holds the hull vertices bounding the ``separators``
    (deep defects; all defects when omitted), so sub-pixel raster wiggles
    on the hull do not nominate fingertips.  EP members farther than
    ``(1 + cd_margin) * CDAvg`` survive; survivors on the same stretch of
    hull between two separators are one fingertip, represented by that
    stretch's hull vertex farthest from the COG.
    """
    p = np.asarray(getattr(points, "points", points), dtype=np.float64).reshape(-1, 2)
    if not defects:
        return HullFingertips([], [], None, [])
    if separators is None:
        separators = defects
    c = np.array([cog.x, cog.y])

    def dist(i):
        return float(np.hypot(*(p[i] - c)))

    cd_avg = float(np.mean([dist(d.far_idx) for d in defects]))
    thr = (1.0 + params.cd_margin) * cd_avg
    ep = sorted({d.start_idx for d in separators} | {d.end_idx for d in separators})
    survivors = [v for v in ep if dist(v) > thr]

    # hull stretches between consecutive separating defects
    hv = list(hull.indices)
    pos = {v: i for i, v in enumerate(hv)}
    cuts = sorted(pos[d.end_idx] for d in separators if d.end_idx in pos)
    if cuts:
        stretch_of = {}
        for k, e in enumerate(cuts):
            stop = cuts[k + 1] if k + 1 < len(cuts) else cuts[0] + len(hv)
            for i in range(e, stop):
                stretch_of[hv[i % len(hv)]] = k
    else:
        stretch_of = {v: 0 for v in hv}

    groups: dict[int, list[int]] = {}
    for v in survivors:
        groups.setdefault(stretch_of[v], []).append(v)
    tips = []
    for k in sorted(groups):
        members = [v for v in hv if stretch_of[v] == k]
        rep = max(members, key=lambda v: (dist(v), -v))
        tips.append((rep, groups[k][0]))
    return HullFingertips(tips, ep, cd_avg, list(defects))


def flanking_defects(tip_idx: int, defects: list[Defect], n: int) -> tuple[Defect | None, Defect | None]:
    """Nearest defect before and after ``tip_idx`` along the contour."""
    if not defects:
        return None, None
    before = min(defects, key=lambda d: (tip_idx - d.far_idx) % n)
    after = min(defects, key=lambda d: (d.far_idx - tip_idx) % n)
    return before, after


def index_band_angles(tip, d_prev, d_next) -> tuple[float, float]:
    """Interior angles at the two flanking defect points of the
    fingertip-defect-defect triangle, larger first."""
    tip = np.asarray(tip, dtype=np.float64)
    a = np.asarray(d_prev, dtype=np.float64)
    b = np.asarray(d_next, dtype=np.float64)
    at_a = angle_between(tip - a, b - a)
    at_b = angle_between(tip - b, a - b)
    return (max(at_a, at_b), min(at_a, at_b))


def orientation(points, tip_idx: int, defects: list[Defect], cog: Cog,
                method: str) -> tuple[float, bool]:
    """Pointing angle of the fingertip at ``points[tip_idx]``.

    Returns ``(degrees, fell_back)``; methods that need defects fall back to
    the COG vector when none are available.
    """
    p = np.asarray(getattr(points, "points", points), dtype=np.float64).reshape(-1, 2)
    n = len(p)
    f = p[tip_idx]
    cog_vec = f - np.array([cog.x, cog.y])
    if method == "cog":
        return direction_deg(*cog_vec), False
    if method not in METHODS:
        raise InputError(f"unknown orientation method {method!r}")
    before, after = flanking_defects(tip_idx, defects, n)
    if after is None:
        return direction_deg(*cog_vec), True
    if method == "next_defect":
        return direction_deg(*(f - p[after.far_idx])), False
    u = p[before.far_idx] - f
    v = p[after.far_idx] - f
    nu, nv = np.hypot(*u), np.hypot(*v)
    if nu == 0 or nv == 0:
        return direction_deg(*cog_vec), True
    bis = u / nu + v / nv
    if np.hypot(*bis) < 1e-12:
        bis = np.array([-u[1], u[0]])
    if float(bis @ cog_vec) > 0:
        bis = -bis
    away = -bis
    return direction_deg(*away), False


def _nearest_index(points: np.ndarray, xy) -> int:
    d = np.hypot(points[:, 0] - xy[0], points[:, 1] - xy[1])
    return int(np.argmin(d))


def classify_pointing(hand: Blob | None, params: PointingParams = PointingParams()) -> PointingDecision:
    """Full per-hand chain: trace, normalize, fingertips, decision, angles."""
    if hand is None or hand.area < params.min_blob_area:
        return PointingDecision("no_hand", diagnostics={"reason": "no hand blob"})
    contour = trace_contour(hand)
    pts = contour.points.astype(np.float64)
    _, cog = moments_cog(hand)
    diag: dict = {"cog": (cog.x, cog.y), "area": hand.area}
    if len(pts) < 3:
        diag["reason"] = "degenerate contour"
        return PointingDecision("not_pointing", diagnostics=diag)
    perimeter = contour.perimeter
    rs = resample(pts, params.resample_n)
    n_rs = len(rs)

    try:
        hull = convex_hull(pts)
    except InputError:
        diag["reason"] = "degenerate hull"
        return PointingDecision("not_pointing", diagnostics=diag)
    all_defects = convexity_defects(pts, hull)
    defects = deep_defects(all_defects, hand.area, params)

    cands = corner_candidates(rs, cog, params)
    basis = perimeter if params.dominant_basis == "perimeter" else float(
        np.hypot(*(np.roll(rs, -1, axis=0) - rs).T).sum())
    dom = dominant_fingertip(cands, basis, params, n=n_rs)
    hf = hull_defect_fingertips(pts, hull, all_defects, cog, params, separators=defects)

    diag.update({
        "contour": contour,
        "resampled": rs,
        "hull": hull,
        "perimeter": perimeter,
        "candidates": cands,
        "dominant": dom,
        "defects": defects,
        "all_defects": all_defects,
        "cd_avg": hf.cd_avg,
        "ep": hf.ep,
        "hull_tips": [tuple(pts[t].tolist()) for t, _ in hf.tips],
    })

    def reject(reason):
        diag["reason"] = reason
        return PointingDecision("not_pointing", diagnostics=diag)

    if params.decision in ("both", "hull"):
        if len(hf.tips) != 1:
            return reject(f"{len(hf.tips)} hull fingertips")
        tip_idx = hf.tips[0][0]
    if params.decision in ("both", "corner"):
        if dom is None:
            return reject("no dominant corner")
        if params.decision == "corner":
            tip_idx = _nearest_index(pts, dom.point)
        elif _cyclic_gap(_nearest_index(rs, pts[tip_idx]), dom.contour_index, n_rs) > params.k:
            return reject("fingertip methods disagree")

    before, after = flanking_defects(tip_idx, defects, len(pts))
    if before is None or before is after:
        return reject("fingertip needs two flanking defects")
    band = index_band_angles(pts[tip_idx], pts[before.far_idx], pts[after.far_idx])
    diag["band_angles"] = band
    if not params.index_band_lo <= band[0] <= params.index_band_hi:
        return reject("index-finger band")
    if params.secondary_band is not None:
        lo, hi = params.secondary_band
        if not lo <= band[1] <= hi:
            return reject("secondary band")

    angles = {}
    fallbacks = []
    for m in METHODS:
        a, fell = orientation(pts, tip_idx, defects, cog, m)
        angles[m] = a
        if fell:
            fallbacks.append(m)
    diag["fallback"] = fallbacks
    diag["tip_index"] = tip_idx
    tip = (float(pts[tip_idx, 0]), float(pts[tip_idx, 1]))
    return PointingDecision("pointing", tip, angles, diag)
