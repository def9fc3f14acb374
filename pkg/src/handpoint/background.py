"""Recursive background models: per-pixel Kalman filter and codebook.

Both models expose ``train(frames)`` and ``subtract(frame) -> mask`` so the
pipeline can swap them.  The codebook keeps its codewords in fixed-capacity
slot arrays of shape ``(K, H, W)``; slots ``[0, count)`` of each pixel are in
use and ordered by creation, which makes first-match deterministic.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .imgcore import InputError, as_frame, to_gray

# ---------------------------------------------------------------------------
# Kalman


class KalmanPixelState(NamedTuple):
    b: float
    b_dot: float


@dataclass(frozen=True)
class KalmanParams:
    rate_slow: float = 0.1  # a1, used while the pixel was foreground
    rate_fast: float = 0.5  # a2, used while the pixel was background
    fg_threshold: float = 25.0
    a_matrix: tuple = ((1.0, 0.7), (0.0, 0.7))
    h_row: tuple = (1.0, 0.0)

    def __post_init__(self):
        if not (0 < self.rate_slow < self.rate_fast < 1):
            raise InputError("need 0 < rate_slow < rate_fast < 1")
        if self.fg_threshold <= 0:
            raise InputError("fg_threshold must be positive")


def _predict(b, b_dot, params: KalmanParams):
    (a00, a01), (a10, a11) = params.a_matrix
    return a00 * b + a01 * b_dot, a10 * b + a11 * b_dot


def kalman_update(state: KalmanPixelState, intensity: float, was_foreground: bool,
                  params: KalmanParams = KalmanParams()) -> KalmanPixelState:
    """One step of ``s' = A s + K (I - H A s)``.

    The gain is ``(a1, a1)`` when the pixel was foreground on the previous
    frame and ``(a2, a2)`` otherwise.
    """
    pb, pd = _predict(state.b, state.b_dot, params)
    h0, h1 = params.h_row
    innovation = intensity - (h0 * pb + h1 * pd)
    gain = params.rate_slow if was_foreground else params.rate_fast
    return KalmanPixelState(pb + gain * innovation, pd + gain * innovation)


def kalman_is_foreground(state: KalmanPixelState, intensity: float,
                         params: KalmanParams = KalmanParams()) -> bool:
    pb, pd = _predict(state.b, state.b_dot, params)
    h0, h1 = params.h_row
    return abs(intensity - (h0 * pb + h1 * pd)) > params.fg_threshold


class KalmanBackground:
    """Per-pixel Kalman background over mean intensity (0..255)."""

    variant = "kalman"

    def __init__(self, params: KalmanParams = KalmanParams()):
        self.params = params
        self.b: np.ndarray | None = None
        self.b_dot: np.ndarray | None = None
        self.prev_fg: np.ndarray | None = None

    @property
    def shape(self):
        return None if self.b is None else self.b.shape

    def _init(self, gray: np.ndarray) -> None:
        self.b = gray.copy()
        self.b_dot = np.zeros_like(gray)
        self.prev_fg = np.zeros(gray.shape, dtype=bool)

    def step(self, gray: np.ndarray) -> np.ndarray:
        """Classify ``gray`` against the predicted background, then update."""
        if self.b is None:
            self._init(gray)
        elif gray.shape != self.b.shape:
            raise InputError(f"frame shape {gray.shape} != model shape {self.b.shape}")
        p = self.params
        pb, pd = _predict(self.b, self.b_dot, p)
        predicted = p.h_row[0] * pb + p.h_row[1] * pd
        innovation = gray - predicted
        fg = np.abs(innovation) > p.fg_threshold
        gain = np.where(self.prev_fg, p.rate_slow, p.rate_fast)
        self.b = pb + gain * innovation
        self.b_dot = pd + gain * innovation
        self.prev_fg = fg
        return fg

    def train(self, frames: Iterable[np.ndarray]) -> "KalmanBackground":
        for f in frames:
            self.step(to_gray(as_frame(f), "mean"))
        return self

    def subtract(self, frame: np.ndarray) -> np.ndarray:
        return self.step(to_gray(as_frame(frame), "mean"))


# ---------------------------------------------------------------------------
# Codebook


@dataclass
class Codeword:
    v: tuple[float, float, float]
    i_min: float
    i_max: float
    freq: int = 1
    mnrl: int = 0
    first_seen: int = 0
    last_seen: int = 0


class MatchResult(NamedTuple):
    foreground: bool
    index: int | None


@dataclass(frozen=True)
class LightChangePolicy:
    changed_pixel_fraction: float = 0.80
    change_detect_floor: float = 3.0
    alpha_soft_max: float = 10.0
    purge_fraction: float = 0.90

    def __post_init__(self):
        for name in ("changed_pixel_fraction", "purge_fraction"):
            val = getattr(self, name)
            if not 0 < val <= 1:
                raise InputError(f"{name} must lie in (0, 1]")


class LightChangeReport(NamedTuple):
    action: str  # none | soft | purge
    alpha: float
    changed_fraction: float
    removed: int = 0


def colordist(x, v) -> float:
    """Perpendicular distance from ``x`` to the line through 0 and ``v``."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    vv = float(v @ v)
    xx = float(x @ x)
    if vv == 0.0:
        return float(np.sqrt(xx))
    return float(np.sqrt(max(xx - (x @ v) ** 2 / vv, 0.0)))


def brightness_ok(intensity: float, i_min: float, i_max: float,
                  alpha_b: float = 0.5, beta_b: float = 1.25) -> bool:
    lo = alpha_b * i_max
    hi = min(beta_b * i_max, i_min / alpha_b)
    return lo <= intensity <= hi


class CodebookModel:
    """Per-pixel codebook background model."""

    variant = "codebook"

    def __init__(self, width: int, height: int, epsilon_color: float = 20.0,
                 alpha_b: float = 0.5, beta_b: float = 1.25, max_codewords: int = 8):
        if width < 1 or height < 1:
            raise InputError("model dimensions must be positive")
        self.width, self.height = int(width), int(height)
        self.epsilon_color = float(epsilon_color)
        self.alpha_b = float(alpha_b)
        self.beta_b = float(beta_b)
        self.max_codewords = int(max_codewords)
        k, h, w = self.max_codewords, self.height, self.width
        self.v = np.zeros((k, h, w, 3), dtype=np.float32)
        self.i_min = np.zeros((k, h, w), dtype=np.float32)
        self.i_max = np.zeros((k, h, w), dtype=np.float32)
        self.freq = np.zeros((k, h, w), dtype=np.int32)
        self.mnrl = np.zeros((k, h, w), dtype=np.int32)
        self.first_seen = np.zeros((k, h, w), dtype=np.int32)
        self.last_seen = np.zeros((k, h, w), dtype=np.int32)
        self.count = np.zeros((h, w), dtype=np.int16)
        self.clock = 0

    @property
    def shape(self):
        return (self.height, self.width)

    def total_codewords(self) -> int:
        return int(self.count.sum())

    # -- per-pixel view ---------------------------------------------------

    def _check_xy(self, x: int, y: int) -> None:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise InputError(f"pixel ({x}, {y}) outside {self.width}x{self.height}")

    def codewords(self, x: int, y: int) -> list[Codeword]:
        self._check_xy(x, y)
        return [
            Codeword(
                v=tuple(float(c) for c in self.v[k, y, x]),
                i_min=float(self.i_min[k, y, x]),
                i_max=float(self.i_max[k, y, x]),
                freq=int(self.freq[k, y, x]),
                mnrl=int(self.mnrl[k, y, x]),
                first_seen=int(self.first_seen[k, y, x]),
                last_seen=int(self.last_seen[k, y, x]),
            )
            for k in range(int(self.count[y, x]))
        ]

    def set_codewords(self, x: int, y: int, words: Sequence[Codeword]) -> None:
        self._check_xy(x, y)
        if len(words) > self.max_codewords:
            raise InputError("too many codewords for this model")
        for k, cw in enumerate(words):
            if cw.i_min > cw.i_max or cw.freq < 1:
                raise InputError("codeword needs i_min <= i_max and freq >= 1")
            self.v[k, y, x] = cw.v
            self.i_min[k, y, x] = cw.i_min
            self.i_max[k, y, x] = cw.i_max
            self.freq[k, y, x] = cw.freq
            self.mnrl[k, y, x] = cw.mnrl
            self.first_seen[k, y, x] = cw.first_seen
            self.last_seen[k, y, x] = cw.last_seen
        for k in range(len(words), self.max_codewords):
            self._clear_slot(k, y, x)
        self.count[y, x] = len(words)

    def _clear_slot(self, k, y, x) -> None:
        self.v[k, y, x] = 0
        self.i_min[k, y, x] = 0
        self.i_max[k, y, x] = 0
        self.freq[k, y, x] = 0
        self.mnrl[k, y, x] = 0
        self.first_seen[k, y, x] = 0
        self.last_seen[k, y, x] = 0

    # -- vectorized matching ----------------------------------------------

    def _check_frame(self, frame: np.ndarray) -> np.ndarray:
        frame = as_frame(frame)
        if frame.shape[:2] != self.shape:
            raise InputError(
                f"frame shape {frame.shape[:2]} != model shape {self.shape}")
        return frame

    def match_indices(self, frame: np.ndarray) -> np.ndarray:
        """Index of the first matching codeword per pixel, ``-1`` if none."""
        frame = self._check_frame(frame)
        x = frame.astype(np.float32)
        r, g, b = x[..., 0], x[..., 1], x[..., 2]
        intensity = r + g + b
        xx = r * r + g * g + b * b
        eps2 = np.float32(self.epsilon_color ** 2)
        out = np.full(self.shape, -1, dtype=np.int32)
        active = int(self.count.max()) if self.count.size else 0
        for k in range(active):
            cand = (out < 0) & (self.count > k)
            if k == 0:
                sel = np.s_[...]
            else:
                ys, xs = np.nonzero(cand)
                if ys.size == 0:
                    break
                sel = (ys, xs)
            v = self.v[k][sel]
            v0, v1, v2 = v[..., 0], v[..., 1], v[..., 2]
            vv = v0 * v0 + v1 * v1 + v2 * v2
            dot = r[sel] * v0 + g[sel] * v1 + b[sel] * v2
            safe = np.where(vv > 0, vv, np.float32(1))
            dist2 = np.where(vv > 0, xx[sel] - dot * dot / safe, xx[sel])
            i_max = self.i_max[k][sel]
            lo = self.alpha_b * i_max
            hi = np.minimum(self.beta_b * i_max, self.i_min[k][sel] / self.alpha_b)
            isel = intensity[sel]
            ok = cand[sel] & (dist2 <= eps2) & (isel >= lo) & (isel <= hi)
            if k == 0:
                out[ok] = 0
            else:
                out[ys[ok], xs[ok]] = k
        return out

    def match(self, x, at: tuple[int, int]) -> MatchResult:
        """Classify one RGB value against the codebook at pixel ``at=(x, y)``."""
        px, py = at
        self._check_xy(px, py)
        rgb = np.asarray(x, dtype=np.float64)
        intensity = float(rgb.sum())
        for k, cw in enumerate(self.codewords(px, py)):
            if (colordist(rgb, cw.v) <= self.epsilon_color
                    and brightness_ok(intensity, cw.i_min, cw.i_max, self.alpha_b, self.beta_b)):
                return MatchResult(False, k)
        return MatchResult(True, None)

    # -- learning ----------------------------------------------------------

    def _absorb(self, frame: np.ndarray, where: np.ndarray, create: bool) -> None:
        """Update matched codewords at ``where``; optionally create codewords
        for unmatched pixels there.  Advances the clock by one frame."""
        self.clock += 1
        t = self.clock
        idx = self.match_indices(frame)
        x = frame.astype(np.float32)
        intensity = x.sum(axis=2)

        hit = where & (idx >= 0)
        ys, xs = np.nonzero(hit)
        ks = idx[ys, xs]
        f = self.freq[ks, ys, xs].astype(np.float32)
        self.v[ks, ys, xs] = (f[:, None] * self.v[ks, ys, xs] + x[ys, xs]) / (f[:, None] + 1)
        ival = intensity[ys, xs]
        self.i_min[ks, ys, xs] = np.minimum(self.i_min[ks, ys, xs], ival)
        self.i_max[ks, ys, xs] = np.maximum(self.i_max[ks, ys, xs], ival)
        self.freq[ks, ys, xs] += 1
        self.mnrl[ks, ys, xs] = np.maximum(self.mnrl[ks, ys, xs], t - self.last_seen[ks, ys, xs])
        self.last_seen[ks, ys, xs] = t

        if not create:
            return
        miss = where & (idx < 0)
        ys, xs = np.nonzero(miss)
        if ys.size == 0:
            return
        cnt = self.count[ys, xs].astype(np.int64)
        full = cnt >= self.max_codewords
        slot = cnt.copy()
        if full.any():
            # evict the least recently seen codeword
            stale = np.argmin(self.last_seen[:, ys[full], xs[full]], axis=0)
            slot[full] = stale
        self.v[slot, ys, xs] = x[ys, xs]
        self.i_min[slot, ys, xs] = intensity[ys, xs]
        self.i_max[slot, ys, xs] = intensity[ys, xs]
        self.freq[slot, ys, xs] = 1
        self.mnrl[slot, ys, xs] = t - 1
        self.first_seen[slot, ys, xs] = t
        self.last_seen[slot, ys, xs] = t
        self.count[ys, xs] = np.minimum(cnt + 1, self.max_codewords)

    def _compact(self, keep: np.ndarray) -> int:
        """Drop slots where ``keep`` is false, preserving slot order."""
        active = int(self.count.max()) if self.count.size else 0
        if active == 0:
            return 0
        used = np.arange(active)[:, None, None] < self.count[None]
        keep = keep[:active] & used
        removed = int(used.sum() - keep.sum())
        if removed == 0:
            return 0
        order = np.argsort(~keep, axis=0, kind="stable")
        for name in ("v", "i_min", "i_max", "freq", "mnrl", "first_seen", "last_seen"):
            arr = getattr(self, name)
            head = arr[:active]
            if arr.ndim == 4:
                arr[:active] = np.take_along_axis(head, order[..., None], axis=0)
            else:
                arr[:active] = np.take_along_axis(head, order, axis=0)
        self.count = keep.sum(axis=0).astype(np.int16)
        unused = np.arange(active)[:, None, None] >= self.count[None]
        for name in ("i_min", "i_max", "freq", "mnrl", "first_seen", "last_seen"):
            getattr(self, name)[:active][unused] = 0
        self.v[:active][unused] = 0
        return removed

    def train(self, frames: Iterable[np.ndarray]) -> "CodebookModel":
        """Match-or-create over ``frames`` then prune transient codewords.

        Codewords whose maximum negative run length (including the
        wrap-around gap) exceeds half the training length are removed.
        """
        start = self.clock
        everywhere = np.ones(self.shape, dtype=bool)
        n = 0
        for f in frames:
            f = self._check_frame(f)
            self._absorb(f, everywhere, create=True)
            n += 1
        if n == 0:
            return self
        used = np.arange(self.max_codewords)[:, None, None] < self.count[None]
        # frame indices relative to this training run, 1..n
        p = self.first_seen - start
        q = self.last_seen - start
        fresh = used & (p >= 1)
        wrap = n - q + p - 1
        self.mnrl = np.where(fresh, np.maximum(self.mnrl, wrap), self.mnrl)
        self._compact(~(used & (self.mnrl > n / 2)))
        return self

    def subtract(self, frame: np.ndarray) -> np.ndarray:
        """Foreground mask; matched codewords at background pixels record
        the hit (``freq``, ``mnrl``, ``last_seen``)."""
        frame = self._check_frame(frame)
        self.clock += 1
        t = self.clock
        idx = self.match_indices(frame)
        bg = idx >= 0
        for k in range(int(idx.max()) + 1):
            hit = idx == k
            self.freq[k] += hit
            np.copyto(self.mnrl[k], np.maximum(self.mnrl[k], t - self.last_seen[k]), where=hit)
            np.copyto(self.last_seen[k], t, where=hit)
        return ~bg

    def purge(self, fraction: float) -> int:
        """Remove ``fraction`` of all codewords, least recently seen first."""
        used = np.arange(self.max_codewords)[:, None, None] < self.count[None]
        total = int(used.sum())
        n_remove = int(np.floor(fraction * total + 1e-9))
        if n_remove <= 0:
            return 0
        flat_used = np.flatnonzero(used)
        order = np.argsort(self.last_seen.reshape(-1)[flat_used], kind="stable")
        drop = flat_used[order[:n_remove]]
        keep = np.ones(used.size, dtype=bool)
        keep[drop] = False
        return self._compact(keep.reshape(used.shape))

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CodebookModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_bytes(self) -> bytes:
        header = _PVBG_HEADER.pack(
            _PVBG_MAGIC, _PVBG_VERSION, self.width, self.height, self.clock,
            self.epsilon_color, self.alpha_b, self.beta_b, self.max_codewords)
        counts = self.count.astype("<u2").reshape(-1)
        used = (np.arange(self.max_codewords)[:, None, None] < self.count[None])
        # pixel-major record order: (y, x, slot)
        sel = np.transpose(used, (1, 2, 0))
        rec = np.zeros(int(sel.sum()), dtype=_PVBG_RECORD)
        rec["v"] = np.transpose(self.v, (1, 2, 0, 3))[sel]
        for name in ("i_min", "i_max", "freq", "mnrl", "first_seen", "last_seen"):
            rec[name] = np.transpose(getattr(self, name), (1, 2, 0))[sel]
        return header + counts.tobytes() + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodebookModel":
        if len(data) < _PVBG_HEADER.size or data[:4] != _PVBG_MAGIC:
            raise InputError("not a PVBG background model")
        (_, version, width, height, clock, eps, alpha_b, beta_b,
         kmax) = _PVBG_HEADER.unpack_from(data)
        if version != _PVBG_VERSION:
            raise InputError(f"unsupported PVBG version {version}")
        model = cls(width, height, eps, alpha_b, beta_b, kmax)
        model.clock = clock
        off = _PVBG_HEADER.size
        npix = width * height
        counts = np.frombuffer(data, dtype="<u2", count=npix, offset=off)
        off += 2 * npix
        if counts.max(initial=0) > kmax:
            raise InputError("corrupt PVBG: codeword count exceeds capacity")
        nrec = int(counts.sum())
        if len(data) - off != nrec * _PVBG_RECORD.itemsize:
            raise InputError("corrupt PVBG: record payload size mismatch")
        rec = np.frombuffer(data, dtype=_PVBG_RECORD, count=nrec, offset=off)
        model.count = counts.reshape(height, width).astype(np.int16)
        sel = np.arange(kmax)[None, None, :] < model.count[..., None]
        tmp = np.zeros((height, width, kmax, 3), dtype=np.float32)
        tmp[sel] = rec["v"]
        model.v = np.ascontiguousarray(np.transpose(tmp, (2, 0, 1, 3)))
        for name in ("i_min", "i_max", "freq", "mnrl", "first_seen", "last_seen"):
            arr = np.zeros((height, width, kmax), dtype=getattr(model, name).dtype)
            arr[sel] = rec[name]
            setattr(model, name, np.ascontiguousarray(np.transpose(arr, (2, 0, 1))))
        return model


# magic, version, width, height, clock, epsilon_color, alpha_b, beta_b, max_codewords
_PVBG_MAGIC = b"PVBG"
_PVBG_VERSION = 1
_PVBG_HEADER = struct.Struct("<4sHIIIfffH")
_PVBG_RECORD = np.dtype([
    ("v", "<f4", (3,)), ("i_min", "<f4"), ("i_max", "<f4"),
    ("freq", "<u4"), ("mnrl", "<u4"), ("first_seen", "<u4"), ("last_seen", "<u4"),
])


def codebook_train(frames: Sequence[np.ndarray], model: CodebookModel) -> CodebookModel:
    return model.train(frames)


def codebook_match(model: CodebookModel, x, at: tuple[int, int]) -> MatchResult:
    return model.match(x, at)


def subtract_frame(model, frame: np.ndarray) -> np.ndarray:
    return model.subtract(frame)


def light_change_update(model: CodebookModel, prev: np.ndarray, cur: np.ndarray,
                        policy: LightChangePolicy = LightChangePolicy(),
                        frame: np.ndarray | None = None,
                        exclude: np.ndarray | None = None) -> LightChangeReport:
    """Frame-differencing illumination check on mean-intensity frames.

    When at least ``changed_pixel_fraction`` of the pixels moved by more than
    ``change_detect_floor``, the median change ``alpha`` picks the action:
    below ``alpha_soft_max`` the matching codewords absorb ``frame``; at or
    above it, ``purge_fraction`` of the codewords are dropped (least recently
    seen first) and ``frame`` is absorbed with codeword creation.  Pixels set
    in ``exclude`` (typically last frame's foreground) are never absorbed.
    Without ``frame`` only the purge is applied.
    """
    if prev.shape != cur.shape or cur.shape != model.shape:
        raise InputError("gray frames must match the model dimensions")
    diff = np.abs(cur.astype(np.float64) - prev.astype(np.float64))
    changed = diff > policy.change_detect_floor
    frac = float(changed.mean())
    if frac < policy.changed_pixel_fraction:
        return LightChangeReport("none", 0.0, frac)
    alpha = float(np.median(diff[changed]))
    where = np.ones(model.shape, dtype=bool)
    if exclude is not None:
        where &= ~exclude
    if alpha < policy.alpha_soft_max:
        if frame is not None:
            model._absorb(model._check_frame(frame), where, create=False)
        return LightChangeReport("soft", alpha, frac)
    removed = model.purge(policy.purge_fraction)
    if frame is not None:
        model._absorb(model._check_frame(frame), where, create=True)
    return LightChangeReport("purge", alpha, frac, removed)
