"""Synthetic desk-scale scenes with known ground truth.

A scene is a static textured room plus a person: a skin-toned face with a
hair line above a clear forehead band, a shirt, and one forearm whose hand
takes one of three postures (``pointing``, ``open_palm``, ``fist``).  All
randomness flows from explicit seeds so scenes are reproducible byte for
byte.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .imgcore import hsv_to_rgb
from .skin import Rect

POSTURES = ("pointing", "open_palm", "fist")


@dataclass
class SceneTruth:
    gesture: str  # pointing | not_pointing
    posture: str
    angle: float
    face: Rect
    fingertip: tuple[int, int] | None = None
    hand_center: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    tip_analytic: tuple[float, float] | None = None

    def to_json(self, frame: int | None = None) -> dict:
        d = {}
        if frame is not None:
            d["frame"] = frame
        d.update({"gesture": self.gesture, "posture": self.posture,
                  "angle": round(self.angle, 6), "face": list(self.face)})
        if self.fingertip is not None:
            d["fingertip"] = list(self.fingertip)
        return d


@dataclass
class SyntheticScene:
    frame: np.ndarray
    truth: SceneTruth
    background: np.ndarray = field(repr=False, default=None)
    hand_mask: np.ndarray = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# background


def render_background(width: int = 640, height: int = 480, background_seed: int = 0) -> np.ndarray:
    """Noise-free textured room; colors avoid skin hues."""
    return _background(int(width), int(height), int(background_seed)).copy()


@functools.lru_cache(maxsize=8)
def _background(width: int, height: int, background_seed: int) -> np.ndarray:
    rng = np.random.default_rng([background_seed, 0xB6])
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    wall_h = rng.uniform(190, 230)
    wall = np.array(hsv_to_rgb(wall_h, rng.uniform(0.08, 0.2), rng.uniform(0.55, 0.7)), dtype=np.float64)
    img = wall[None, None, :] * (0.85 + 0.15 * (yy / height))[..., None]

    hues = [rng.uniform(95, 150), rng.uniform(200, 245), rng.uniform(260, 300), rng.uniform(170, 195)]
    for i in range(6):
        w = rng.uniform(0.1, 0.35) * width
        h = rng.uniform(0.1, 0.4) * height
        x0 = rng.uniform(0, width - w)
        y0 = rng.uniform(0, height - h)
        hue = hues[i % len(hues)]
        sat = rng.uniform(0.0, 0.1) if i == 5 else rng.uniform(0.25, 0.6)
        col = np.array(hsv_to_rgb(hue, sat, rng.uniform(0.3, 0.75)), dtype=np.float64)
        sel = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
        img[sel] = col
    # floor band
    floor_y = int(height * rng.uniform(0.78, 0.88))
    img[floor_y:] = np.array(hsv_to_rgb(rng.uniform(200, 230), 0.15, 0.35), dtype=np.float64)

    img += rng.normal(0.0, 5.0, size=img.shape)
    return np.clip(np.rint(img), 35, 215).astype(np.uint8)


def add_sensor_noise(frame: np.ndarray, seed, sigma: float = 1.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    noisy = frame.astype(np.float64) + rng.normal(0.0, sigma, size=frame.shape)
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def apply_brightness(frame: np.ndarray, offset: float) -> np.ndarray:
    return np.clip(frame.astype(np.float64) + offset, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# shapes in a hand-local frame: u along the pointing direction, v lateral


class _Local:
    def __init__(self, center, angle_deg, xx, yy):
        t = math.radians(angle_deg)
        self.u = (math.cos(t), -math.sin(t))  # image coords, y down
        self.v = (math.sin(t), math.cos(t))
        dx = xx - center[0]
        dy = yy - center[1]
        self.a = dx * self.u[0] + dy * self.u[1]
        self.b = dx * self.v[0] + dy * self.v[1]
        self.center = center

    def to_image(self, a, b):
        return (self.center[0] + a * self.u[0] + b * self.v[0],
                self.center[1] + a * self.u[1] + b * self.v[1])


def _superellipse(loc, a0, b0, ra, rb, p=2.4):
    return (np.abs((loc.a - a0) / ra) ** p + np.abs((loc.b - b0) / rb) ** p) <= 1.0


def _ellipse(loc, a0, b0, ra, rb):
    return ((loc.a - a0) / ra) ** 2 + ((loc.b - b0) / rb) ** 2 <= 1.0


def _capsule(loc, a0, b0, a1, b1, r):
    da, db = a1 - a0, b1 - b0
    ll = da * da + db * db
    t = np.clip(((loc.a - a0) * da + (loc.b - b0) * db) / ll, 0.0, 1.0)
    pa = a0 + t * da - loc.a
    pb = b0 + t * db - loc.b
    return pa * pa + pb * pb <= r * r


def _hand_shape(posture, loc, sc, side, rng):
    """Hand mask plus the analytic fingertip (local coords) for pointing."""
    A, B = 28 * sc, 32 * sc
    tip = None
    if posture == "open_palm":
        palm = _ellipse(loc, 0, 0, 30 * sc, 29 * sc)
        mask = palm.copy()
        spread = rng.uniform(0.9, 1.15)
        specs = [(-78, 40, 6.5), (-30, 52, 5.5), (-9, 58, 5.5), (12, 54, 5.5), (33, 44, 5.0)]
        for ang, length, rad in specs:
            t = math.radians(ang * spread) * side
            ca, cb = math.cos(t), math.sin(t)
            base = 14 * sc
            mask |= _capsule(loc, base * ca, base * cb, (base + length * sc) * ca,
                             (base + length * sc) * cb, rad * sc)
        return mask, None
    # boxy knuckle side, rounder toward the wrist
    fist = np.where(loc.a >= 0, _superellipse(loc, 0, 0, A, B), _ellipse(loc, 0, 0, 0.65 * A, B))
    mask = fist
    for b in (-22, -10, 2):
        mask |= _ellipse(loc, A - 3 * sc, side * b * sc, 5.5 * sc, 5.5 * sc)
    if posture == "fist":
        mask |= _ellipse(loc, 0.15 * A, side * (B - 3 * sc), 13 * sc, 7 * sc)
        return mask, None
    off = side * 14 * sc
    r = 6 * sc
    length = 46 * sc * rng.uniform(0.95, 1.1)
    mask |= _capsule(loc, 0.3 * A, off, A + length, off, r)
    tip = (A + length + r, off)
    return mask, tip


def _sleeve(loc, sc):
    A, B = 28 * sc, 32 * sc
    back = -0.55 * A
    return (loc.a <= back) & (loc.a >= back - 400) & (np.abs(loc.b) <= 1.05 * B)


def _skin_rgb(h, s, v, shade, rng, shape):
    base = np.array(hsv_to_rgb(h, s, v), dtype=np.float64)
    rgb = base[None, :] * shade[:, None]
    rgb += rng.normal(0.0, 2.5, size=(shape, 3))
    return rgb


def generate_scene(gesture: str, angle: float = 0.0, seed: int = 0, *,
                   width: int = 640, height: int = 480, background_seed: int = 0,
                   noise_sigma: float = 1.5, scale_range=(0.85, 1.15)) -> SyntheticScene:
    """Render one frame: room + person whose hand shows ``gesture``.

    ``gesture`` is a posture name; ``angle`` is the hand direction in degrees
    (counterclockwise from +x, y up).
    """
    if gesture not in POSTURES:
        raise ValueError(f"unknown posture {gesture!r}; expected one of {POSTURES}")
    if not 0.0 <= angle < 360.0:
        raise ValueError("angle must lie in [0, 360)")
    rng = np.random.default_rng([seed, POSTURES.index(gesture), int(round(angle * 1000))])
    s = width / 640.0
    background = render_background(width, height, background_seed)
    img = background.astype(np.float64)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    # skin tone shared by face and hand
    face_h = rng.uniform(12, 28)
    face_s = rng.uniform(0.32, 0.5)
    face_v = rng.uniform(0.72, 0.88)

    # face
    rx = 44 * s * rng.uniform(0.95, 1.1)
    ry = 56 * s * rng.uniform(0.95, 1.1)
    fcx = rng.uniform(0.2, 0.8) * width
    fcy = rng.uniform(0.17, 0.3) * height
    face_rect = Rect(int(math.floor(fcx - rx)), int(math.floor(fcy - ry)),
                     int(math.ceil(2 * rx)) + 1, int(math.ceil(2 * ry)) + 1)

    # shirt / torso below the chin
    shirt_h = rng.choice([210.0, 130.0, 250.0, 180.0])
    shirt = np.array(hsv_to_rgb(shirt_h, rng.uniform(0.45, 0.7), rng.uniform(0.3, 0.5)), dtype=np.float64)
    torso = ((np.abs(xx - fcx) <= 2.1 * rx) & (yy >= fcy + 0.95 * ry)) | (
        ((xx - fcx) / (2.1 * rx)) ** 2 + ((yy - (fcy + 1.6 * ry)) / (0.7 * ry)) ** 2 <= 1)
    img[torso] = shirt + rng.normal(0, 2.0, size=(int(torso.sum()), 3))

    neck = (np.abs(xx - fcx) <= 0.42 * rx) & (yy >= fcy) & (yy <= fcy + 1.25 * ry)
    face = (((xx - fcx) / rx) ** 2 + ((yy - fcy) / ry) ** 2 <= 1.0) | neck
    shade = 1.0 - 0.08 * ((yy[face] - fcy) / ry)
    img[face] = _skin_rgb(face_h, face_s, face_v, shade, rng, int(face.sum()))
    hair_col = np.array(hsv_to_rgb(rng.uniform(20, 40), 0.5, 0.15), dtype=np.float64)
    # hair stops above the forehead band (top 10% of the face box)
    hair = (face & (yy < fcy - 0.8 * ry)) | (
        ((xx - fcx) / (1.05 * rx)) ** 2 + ((yy - (fcy - 0.95 * ry)) / (0.15 * ry)) ** 2 <= 1.0)
    img[hair] = hair_col
    for ex in (-0.4, 0.4):
        eye = ((xx - (fcx + ex * rx)) / (0.16 * rx)) ** 2 + ((yy - (fcy + 0.05 * ry)) / (0.08 * ry)) ** 2 <= 1
        img[eye] = (40, 35, 45)
    mouth = ((xx - fcx) / (0.3 * rx)) ** 2 + ((yy - (fcy + 0.5 * ry)) / (0.07 * ry)) ** 2 <= 1
    img[mouth] = (110, 40, 55)

    # hand placement: clear of the face, sleeve clear of the face
    sc = s * rng.uniform(*scale_range)
    side = 1 if rng.random() < 0.5 else -1
    reach = (28 + 60 + 12) * sc
    face_r = max(rx, ry)
    hc = None
    for _ in range(500):
        cx = rng.uniform(reach + 4, width - reach - 4)
        cy = rng.uniform(reach + 4, height - reach - 4)
        if math.hypot(cx - fcx, cy - fcy) < face_r + reach + 12 * s:
            continue
        if math.hypot(cx - fcx, cy - (fcy + 1.25 * ry)) < 0.42 * rx + reach + 12 * s:
            continue
        t = math.radians(angle)
        bx, by = -math.cos(t), math.sin(t)  # toward the elbow, image coords
        # distance from face center to the sleeve ray
        rel = (fcx - cx, fcy - cy)
        proj = rel[0] * bx + rel[1] * by
        if proj > 0:
            perp = abs(rel[0] * by - rel[1] * bx)
            if perp < face_r + 40 * sc + 10 * s:
                continue
        hc = (cx, cy)
        break
    if hc is None:
        raise RuntimeError("could not place the hand clear of the face")

    loc = _Local(hc, angle, xx, yy)
    hand, tip_local = _hand_shape(gesture, loc, sc, side, rng)
    sleeve = _sleeve(loc, sc)
    hand &= ~sleeve
    hand_h = face_h + rng.uniform(-2.0, 2.0)
    hand_s = face_s + rng.uniform(-0.02, 0.02)
    hand_v = face_v + rng.uniform(-0.06, 0.02)
    shade = 1.0 - 0.05 * (loc.a[hand] / (60 * sc))
    img[hand] = _skin_rgb(hand_h, hand_s, hand_v, shade, rng, int(hand.sum()))
    sleeve_col = shirt * rng.uniform(0.85, 1.05)
    img[sleeve] = sleeve_col + rng.normal(0, 2.0, size=(int(sleeve.sum()), 3))

    frame = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if noise_sigma > 0:
        frame = add_sensor_noise(frame, [seed, 0x5E, POSTURES.index(gesture)], noise_sigma)

    fingertip = None
    tip_img = None
    if tip_local is not None:
        tip_img = loc.to_image(*tip_local)
        t = math.radians(angle)
        proj = (xx[hand] - hc[0]) * math.cos(t) - (yy[hand] - hc[1]) * math.sin(t)
        lateral = np.hypot(xx[hand] - tip_img[0], yy[hand] - tip_img[1])
        order = np.lexsort((lateral, -proj))
        j = order[0]
        fingertip = (int(xx[hand][j]), int(yy[hand][j]))

    truth = SceneTruth(
        gesture="pointing" if gesture == "pointing" else "not_pointing",
        posture=gesture, angle=float(angle), face=face_rect, fingertip=fingertip,
        hand_center=(float(hc[0]), float(hc[1])), scale=float(sc), tip_analytic=tip_img)
    return SyntheticScene(frame, truth, background, hand)
