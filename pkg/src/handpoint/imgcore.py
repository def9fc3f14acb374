"""Raster containers, color conversions and PPM I/O.

Frames are plain numpy arrays so every stage can stay vectorized:

* ``Frame``      -- ``(H, W, 3)`` ``uint8`` RGB
* ``GrayFrame``  -- ``(H, W)`` ``float64`` intensity
* ``BinaryMask`` -- ``(H, W)`` ``bool``
"""
from __future__ import annotations

import io
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np


class InputError(ValueError):
    """Rejected input: bad dimensions, degenerate geometry, malformed files."""


class HsvPixel(NamedTuple):
    h: float  # degrees, [0, 360)
    s: float  # [0, 1]
    v: float  # [0, 1]


def as_frame(pixels) -> np.ndarray:
    """Validate and return an ``(H, W, 3)`` uint8 frame."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"frame must be (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError("frame must be at least 1x1")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise InputError("channel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def rgb_to_hsv(p) -> HsvPixel:
    """Hexcone HSV for a single RGB triple; hue is 0 when saturation is 0."""
    h, s, v = rgb_to_hsv_array(np.asarray(p, dtype=np.float64).reshape(1, 3))[0]
    return HsvPixel(float(h), float(s), float(v))


def rgb_to_hsv_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorized hexcone HSV over the last axis (size 3).

    Returns an array of the same leading shape with channels
    ``(h in degrees, s, v)``.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)

    rmax = chroma & (mx == r)
    gmax = chroma & (mx == g) & ~rmax
    bmax = chroma & ~rmax & ~gmax
    h = np.zeros_like(mx)
    h[rmax] = np.mod((g[rmax] - b[rmax]) / safe[rmax], 6.0)
    h[gmax] = (b[gmax] - r[gmax]) / safe[gmax] + 2.0
    h[bmax] = (r[bmax] - g[bmax]) / safe[bmax] + 4.0
    h *= 60.0
    h[h >= 360.0] -= 360.0

    s = delta / np.where(mx > 0, mx, 1.0)
    v = mx / 255.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    """Inverse hexcone conversion, rounded to integer channels."""
    c = v * s
    hp = (h % 360.0) / 60.0
    x = c * (1 - abs(hp % 2 - 1))
    sector = int(hp) % 6
    r1, g1, b1 = [
        (c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)
    ][sector]
    m = v - c
    return tuple(int(round((ch + m) * 255.0)) for ch in (r1, g1, b1))


def rgb_to_normalized_rgb(p) -> tuple[float, float, float]:
    """Chromaticity ``(r, g, b)`` summing to 1; black maps to thirds."""
    out = rgb_to_normalized_array(np.asarray(p, dtype=np.float64).reshape(1, 3))[0]
    return float(out[0]), float(out[1]), float(out[2])


def rgb_to_normalized_array(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    total = rgb.sum(axis=-1, keepdims=True)
    out = np.where(total > 0, rgb / np.where(total > 0, total, 1.0), 1.0 / 3.0)
    return out


def to_gray(frame: np.ndarray, mode: str = "sum") -> np.ndarray:
    """Per-pixel intensity: ``R+G+B`` for ``sum``, ``(R+G+B)/3`` for ``mean``."""
    f = np.asarray(frame)
    total = f[..., 0].astype(np.float64) + f[..., 1] + f[..., 2]
    if mode == "sum":
        return total
    if mode == "mean":
        return total / 3.0
    raise InputError(f"unknown gray mode {mode!r}")


# ---------------------------------------------------------------------------
# PPM (P6, maxval 255)

def _read_token(stream: BinaryIO) -> bytes | None:
    tok = b""
    while True:
        ch = stream.read(1)
        if not ch:
            return tok or None
        if ch == b"#" and not tok:
            stream.readline()
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_ppm_stream(stream: BinaryIO) -> np.ndarray | None:
    """Read one P6 image from a binary stream; ``None`` at clean EOF."""
    magic = _read_token(stream)
    if magic is None:
        return None
    if magic != b"P6":
        raise InputError(f"not a binary PPM (magic {magic!r})")
    try:
        width = int(_read_token(stream))
        height = int(_read_token(stream))
        maxval = int(_read_token(stream))
    except (TypeError, ValueError) as exc:
        raise InputError("malformed PPM header") from exc
    if maxval != 255:
        raise InputError(f"unsupported PPM maxval {maxval}")
    if width < 1 or height < 1:
        raise InputError("PPM dimensions must be positive")
    nbytes = width * height * 3
    data = stream.read(nbytes)
    if len(data) != nbytes:
        raise InputError("truncated PPM payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def iter_ppm_stream(stream: BinaryIO) -> Iterator[np.ndarray]:
    """Yield frames from a concatenated-PPM byte stream."""
    while True:
        frame = read_ppm_stream(stream)
        if frame is None:
            return
        yield frame


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        frame = read_ppm_stream(fh)
    if frame is None:
        raise InputError(f"{path}: empty file")
    return frame


def encode_ppm(frame: np.ndarray) -> bytes:
    frame = as_frame(frame)
    h, w = frame.shape[:2]
    buf = io.BytesIO()
    buf.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
    buf.write(np.ascontiguousarray(frame).tobytes())
    return buf.getvalue()


def write_ppm(path, frame: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(frame))
