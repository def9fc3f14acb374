"""Skin segmentation from a live forehead histogram template.

The skin histogram ``H_s`` comes from the forehead patch of the current face
rectangle; the non-skin histogram ``H_n`` is accumulated from pixels known
not to be skin.  Foreground pixels are back-projected through the Bayesian
posterior, thresholded, and grouped into 8-connected blobs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .imgcore import InputError, as_frame, rgb_to_hsv_array, rgb_to_normalized_array

H_BINS = 30
S_BINS = 32


class Rect(NamedTuple):
    x: int
    y: int
    width: int
    height: int

    def clip(self, width: int, height: int) -> "Rect":
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1 = min(self.x + self.width, width)
        y1 = min(self.y + self.height, height)
        return Rect(x0, y0, max(x1 - x0, 0), max(y1 - y0, 0))

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.width and self.y <= py < self.y + self.height


def forehead_from_face(face: Rect) -> Rect:
    """Forehead patch: middle third horizontally, 10%..30% of the face height."""
    x, y, w, h = (int(v) for v in face)
    if w < 3 or h < 10:
        raise InputError(f"face rectangle {tuple(face)} too small for a forehead patch")
    return Rect(x + w // 3, y + h // 10, w // 3, h // 5)


@dataclass
class SkinHistogram:
    counts: np.ndarray = field(default_factory=lambda: np.zeros((H_BINS, S_BINS), dtype=np.int64))
    mode: str = "hs"

    @property
    def h_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def s_bins(self) -> int:
        return self.counts.shape[1]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "SkinHistogram":
        return SkinHistogram(self.counts.copy(), self.mode)

    def add(self, other: "SkinHistogram") -> "SkinHistogram":
        return SkinHistogram(self.counts + other.counts, self.mode)

    @classmethod
    def uniform(cls, h_bins: int = H_BINS, s_bins: int = S_BINS, mode: str = "hs"):
        return cls(np.ones((h_bins, s_bins), dtype=np.int64), mode)

    def to_text(self) -> str:
        lines = [f"{self.h_bins} {self.s_bins} {self.total}"]
        lines += [" ".join(str(int(c)) for c in row) for row in self.counts]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, mode: str = "hs") -> "SkinHistogram":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        try:
            hb, sb, total = (int(v) for v in rows[0])
            counts = np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64)
        except (ValueError, IndexError) as exc:
            raise InputError("malformed histogram text") from exc
        if counts.shape != (hb, sb) or int(counts.sum()) != total:
            raise InputError("histogram text does not match its header")
        return cls(counts, mode)


def color_bins(rgb: np.ndarray, h_bins: int = H_BINS, s_bins: int = S_BINS,
               mode: str = "hs") -> tuple[np.ndarray, np.ndarray]:
    """Map RGB values (``(..., 3)``) to histogram bin indices.

    ``hs`` bins hue and saturation of HSV; ``nrgb`` bins the normalized
    ``r`` and ``g`` chromaticities.
    """
    if mode == "hs":
        hsv = rgb_to_hsv_array(rgb)
        a = np.floor(hsv[..., 0] * h_bins / 360.0)
        b = np.floor(hsv[..., 1] * s_bins)
    elif mode == "nrgb":
        nrgb = rgb_to_normalized_array(rgb)
        a = np.floor(nrgb[..., 0] * h_bins)
        b = np.floor(nrgb[..., 1] * s_bins)
    else:
        raise InputError(f"unknown histogram mode {mode!r}")
    a = np.clip(a, 0, h_bins - 1).astype(np.intp)
    b = np.clip(b, 0, s_bins - 1).astype(np.intp)
    return a, b


def histogram_of(rgb: np.ndarray, h_bins: int = H_BINS, s_bins: int = S_BINS,
                 mode: str = "hs") -> SkinHistogram:
    rgb = np.asarray(rgb).reshape(-1, 3)
    a, b = color_bins(rgb, h_bins, s_bins, mode)
    counts = np.zeros((h_bins, s_bins), dtype=np.int64)
    np.add.at(counts, (a, b), 1)
    return SkinHistogram(counts, mode)


def build_histogram(frame: np.ndarray, roi: Rect, mask: np.ndarray | None = None,
                    h_bins: int = H_BINS, s_bins: int = S_BINS, mode: str = "hs") -> SkinHistogram:
    """Histogram of the (masked-in) pixels of ``roi``."""
    frame = as_frame(frame)
    height, width = frame.shape[:2]
    x, y, w, h = (int(v) for v in roi)
    if w <= 0 or h <= 0:
        raise InputError("empty histogram ROI")
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise InputError(f"ROI {tuple(roi)} outside {width}x{height} frame")
    patch = frame[y:y + h, x:x + w]
    if mask is not None:
        if mask.shape != (height, width):
            raise InputError("mask dimensions differ from frame")
        patch = patch[mask[y:y + h, x:x + w]]
    patch = patch.reshape(-1, 3)
    if patch.shape[0] == 0:
        raise InputError("no pixels counted in histogram ROI")
    return histogram_of(patch, h_bins, s_bins, mode)


def posterior_table(hs: SkinHistogram, hn: SkinHistogram) -> np.ndarray:
    """``P(skin | bin)`` for every bin; 0 where both likelihoods vanish."""
    ts, tn = hs.total, hn.total
    if ts <= 0 or tn <= 0:
        raise InputError("skin and non-skin histograms must be trained")
    if hs.counts.shape != hn.counts.shape:
        raise InputError("histogram shapes differ")
    prior_s = ts / (ts + tn)
    prior_n = 1.0 - prior_s
    num = hs.counts / ts * prior_s
    den = num + hn.counts / tn * prior_n
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def skin_posterior(hs: SkinHistogram, hn: SkinHistogram, bin: tuple[int, int]) -> float:
    ts, tn = hs.total, hn.total
    if ts <= 0 or tn <= 0:
        raise InputError("skin and non-skin histograms must be trained")
    hi, si = bin
    prior_s = ts / (ts + tn)
    prior_n = 1.0 - prior_s
    num = hs.counts[hi, si] / ts * prior_s
    den = num + hn.counts[hi, si] / tn * prior_n
    return float(num / den) if den > 0 else 0.0


def backproject(frame: np.ndarray, fg: np.ndarray, hs: SkinHistogram,
                hn: SkinHistogram) -> np.ndarray:
    """Skin probability per foreground pixel; background pixels get 0."""
    frame = as_frame(frame)
    if fg.shape != frame.shape[:2]:
        raise InputError("foreground mask dimensions differ from frame")
    table = posterior_table(hs, hn)
    out = np.zeros(fg.shape, dtype=np.float64)
    ys, xs = np.nonzero(fg)
    if ys.size:
        a, b = color_bins(frame[ys, xs], hs.h_bins, hs.s_bins, hs.mode)
        out[ys, xs] = table[a, b]
    return out


def binarize(prob: np.ndarray, theta: float = 0.25) -> np.ndarray:
    if not 0.0 <= theta <= 1.0:
        raise InputError("theta must lie in [0, 1]")
    return np.asarray(prob) > theta


@dataclass
class Blob:
    label: int
    ys: np.ndarray
    xs: np.ndarray

    @property
    def area(self) -> int:
        return int(self.ys.size)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """``(x0, y0, x1, y1)`` inclusive."""
        return (int(self.xs.min()), int(self.ys.min()), int(self.xs.max()), int(self.ys.max()))

    @property
    def pixel_set(self) -> set[tuple[int, int]]:
        return set(zip(self.xs.tolist(), self.ys.tolist()))

    def mask(self, pad: int = 1) -> tuple[np.ndarray, int, int]:
        """Tight boolean mask with ``pad`` empty pixels around it, plus the
        ``(x, y)`` offset of the mask origin in frame coordinates."""
        x0, y0, x1, y1 = self.bbox
        m = np.zeros((y1 - y0 + 1 + 2 * pad, x1 - x0 + 1 + 2 * pad), dtype=bool)
        m[self.ys - y0 + pad, self.xs - x0 + pad] = True
        return m, x0 - pad, y0 - pad

    @classmethod
    def from_points(cls, points, label: int = 1) -> "Blob":
        pts = np.asarray(list(points), dtype=np.int64).reshape(-1, 2)
        return cls(label, pts[:, 1].copy(), pts[:, 0].copy())

    @classmethod
    def from_mask(cls, mask: np.ndarray, label: int = 1) -> "Blob":
        ys, xs = np.nonzero(mask)
        return cls(label, ys.astype(np.int64), xs.astype(np.int64))


_EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(mask: np.ndarray, min_area: int = 1) -> list[Blob]:
    """8-connected blobs, largest first; labels follow raster scan order."""
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)
    if n == 0:
        return []
    blobs = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        sub = labels[sl] == i
        ys, xs = np.nonzero(sub)
        if ys.size < min_area:
            continue
        blobs.append(Blob(i, (ys + sl[0].start).astype(np.int64), (xs + sl[1].start).astype(np.int64)))
    blobs.sort(key=lambda b: (-b.area, b.label))
    return blobs
