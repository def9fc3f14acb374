"""Frame-by-frame pipeline: background, skin, blobs, pointing, orientation.

Configuration is a flat ``key = value`` text file whose keys are the field
names of :class:`PipelineConfig`.  Results are written as JSON Lines, one
record per processed frame.  A calibrated codebook can be saved
(``background_out``) and later resumed (``background_in``), in which case no
calibration frames are consumed.
"""
from __future__ import annotations

import dataclasses
import glob as globmod
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .background import (CodebookModel, KalmanBackground, KalmanParams, LightChangePolicy,
                         light_change_update)
from .imgcore import InputError, as_frame, iter_ppm_stream, read_ppm, to_gray, write_ppm
from .pointing import METHODS, PointingDecision, PointingParams, classify_pointing, select_body_blobs
from .skin import (Rect, SkinHistogram, backproject, binarize, build_histogram, connected_components,
                   forehead_from_face, histogram_of)


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


REFERENCE_PIXELS = 640 * 480


@dataclass
class PipelineConfig:
    # background
    background: str = "codebook"  # codebook | kalman
    epsilon_color: float = 20.0
    alpha_b: float = 0.5
    beta_b: float = 1.25
    max_codewords: int = 8
    rate_slow: float = 0.1
    rate_fast: float = 0.5
    fg_threshold: float = 25.0
    light_check: bool = True
    changed_pixel_fraction: float = 0.80
    change_detect_floor: float = 3.0
    alpha_soft_max: float = 10.0
    purge_fraction: float = 0.90
    calibration: int = 30
    background_in: str | None = None   # saved codebook (PVBG) to resume from
    background_out: str | None = None  # save the codebook here after calibration
    # skin
    h_bins: int = 30
    s_bins: int = 32
    theta: float = 0.25
    histogram_mode: str = "hs"  # hs | nrgb
    nonskin_stride: int = 4
    # pointing
    k: int = 16
    theta_t: float = 30.0
    dominant_frac: float = 1.0 / 6.0
    dominant_basis: str = "perimeter"
    cd_margin: float = 0.25
    index_band_lo: float = 80.0
    index_band_hi: float = 130.0
    secondary_band: tuple[float, float] | None = None
    min_blob_area: int = 200  # at 640x480, scaled with frame area
    resample_n: int = 128
    min_defect_depth: float = 0.12
    decision: str = "both"
    prefer_hand: str = "right"  # right | left
    # output
    emit_timing: bool = True
    frames: str | None = None
    faces: str | None = None
    out: str | None = None
    annotate: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.background not in ("codebook", "kalman"):
            raise ConfigError(f"background must be codebook or kalman, not {self.background!r}")
        if self.calibration < 1:
            raise ConfigError("calibration must be at least 1 frame")
        if self.histogram_mode not in ("hs", "nrgb"):
            raise ConfigError(f"unknown histogram_mode {self.histogram_mode!r}")
        if self.prefer_hand not in ("right", "left"):
            raise ConfigError("prefer_hand must be right or left")
        if self.h_bins < 1 or self.s_bins < 1 or self.nonskin_stride < 1:
            raise ConfigError("bin counts and nonskin_stride must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        if self.epsilon_color <= 0 or not 0 < self.alpha_b < 1 or self.beta_b <= 1:
            raise ConfigError("codebook needs epsilon_color > 0, 0 < alpha_b < 1, beta_b > 1")
        if self.max_codewords < 1:
            raise ConfigError("max_codewords must be positive")
        if (self.background_in or self.background_out) and self.background != "codebook":
            raise ConfigError("background_in/background_out need the codebook background")
        try:
            self.pointing_params()
            self.kalman_params()
            self.light_policy()
        except InputError as exc:
            raise ConfigError(str(exc)) from exc

    def pointing_params(self, frame_pixels: int = REFERENCE_PIXELS) -> PointingParams:
        area = max(1, int(round(self.min_blob_area * frame_pixels / REFERENCE_PIXELS)))
        return PointingParams(k=self.k, theta_t=self.theta_t, dominant_frac=self.dominant_frac,
                              dominant_basis=self.dominant_basis, cd_margin=self.cd_margin,
                              index_band_lo=self.index_band_lo, index_band_hi=self.index_band_hi,
                              secondary_band=self.secondary_band, min_blob_area=area,
                              resample_n=self.resample_n, min_defect_depth=self.min_defect_depth,
                              decision=self.decision)

    def kalman_params(self) -> KalmanParams:
        return KalmanParams(rate_slow=self.rate_slow, rate_fast=self.rate_fast,
                            fg_threshold=self.fg_threshold)

    def light_policy(self) -> LightChangePolicy:
        return LightChangePolicy(self.changed_pixel_fraction, self.change_detect_floor,
                                 self.alpha_soft_max, self.purge_fraction)

    # -- flat text form -----------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, val, types[key], lineno)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, tuple):
                v = f"{v[0]},{v[1]}"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_value(key, val, typ, lineno):
    typ = str(typ)
    try:
        if typ.startswith("bool"):
            low = val.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
        if typ.startswith("int"):
            return int(val)
        if typ.startswith("float"):
            if "/" in val:
                num, den = val.split("/", 1)
                return float(num) / float(den)
            return float(val)
        if typ.startswith("tuple"):
            if val.lower() in ("", "none", "off"):
                return None
            parts = [float(p) for p in re.split(r"[,\s]+", val) if p]
            if len(parts) != 2:
                raise ValueError(val)
            return (parts[0], parts[1])
        if val.lower() == "none":
            return None
        return val
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc


# ---------------------------------------------------------------------------
# results


@dataclass
class FrameResult:
    frame_index: int
    gesture: str | None = None  # pointing | not_pointing | no_hand; None for warnings
    fingertip: tuple[float, float] | None = None
    angles: dict[str, float] | None = None
    hand: str | None = None
    timing: dict[str, float] = field(default_factory=dict)
    reason: str | None = None
    warning: str | None = None
    light: str | None = None
    decision: PointingDecision | None = field(default=None, repr=False, compare=False)

    def to_json(self, emit_timing: bool = True) -> dict:
        d: dict = {"frame": self.frame_index}
        if self.gesture is not None:
            d["gesture"] = self.gesture
        if self.fingertip is not None:
            d["fingertip"] = [round(float(self.fingertip[0]), 3), round(float(self.fingertip[1]), 3)]
        if self.angles:
            d["angles"] = {m: round(float(self.angles[m]), 4) for m in METHODS if m in self.angles}
        if self.hand is not None:
            d["hand"] = self.hand
        if self.reason is not None:
            d["reason"] = self.reason
        if self.light is not None:
            d["light"] = self.light
        if self.warning is not None:
            d["warning"] = self.warning
        if emit_timing and self.timing:
            d["ms"] = {k: round(v, 3) for k, v in self.timing.items()}
        return d


def result_line(result: FrameResult, emit_timing: bool = True) -> str:
    return json.dumps(result.to_json(emit_timing), separators=(", ", ": "))


def write_results(results: Iterable[FrameResult], stream, emit_timing: bool = True) -> int:
    n = 0
    for r in results:
        stream.write(result_line(r, emit_timing) + "\n")
        n += 1
    return n


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: bad JSON: {exc.msg}") from exc
    return out


# ---------------------------------------------------------------------------
# inputs


class UnreadableFrame:
    """Placeholder for a frame that could not be decoded."""

    def __init__(self, name: str, message: str):
        self.name = name
        self.message = message

    def __repr__(self) -> str:
        return f"UnreadableFrame({self.name!r}, {self.message!r})"


def parse_face_sidecar(text: str) -> dict[int, Rect]:
    """``frame_index x y w h`` per line; ``#`` starts a comment."""
    faces = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise InputError(f"face sidecar line {lineno}: expected 5 integers")
        try:
            i, x, y, w, h = (int(p) for p in parts)
        except ValueError as exc:
            raise InputError(f"face sidecar line {lineno}: expected 5 integers") from exc
        if w <= 0 or h <= 0:
            raise InputError(f"face sidecar line {lineno}: empty rectangle")
        faces[i] = Rect(x, y, w, h)
    return faces


def format_face_sidecar(faces: Mapping[int, Rect]) -> str:
    return "".join(f"{i} {r.x} {r.y} {r.width} {r.height}\n" for i, r in sorted(faces.items()))


class FaceTrack:
    """Face rectangle lookup that reuses the latest rectangle at or before a frame."""

    def __init__(self, faces: Mapping[int, Rect] | None = None):
        self._faces = dict(faces or {})
        self._keys = sorted(self._faces)

    def __call__(self, index: int) -> Rect | None:
        j = np.searchsorted(self._keys, index, side="right")
        return self._faces[self._keys[j - 1]] if j > 0 else None


def _natural_key(path: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path)]


def load_image(path) -> np.ndarray:
    path = str(path)
    if path.lower().endswith((".ppm", ".pnm")):
        return read_ppm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def iter_frame_files(pattern: str) -> Iterator[tuple[str, np.ndarray | UnreadableFrame]]:
    paths = sorted(globmod.glob(pattern), key=_natural_key)
    for p in paths:
        try:
            yield p, load_image(p)
        except Exception as exc:  # decoding errors come in many types
            yield p, UnreadableFrame(p, f"{type(exc).__name__}: {exc}")


def iter_frame_source(spec: str, stdin=None) -> Iterator[tuple[str, np.ndarray | UnreadableFrame]]:
    """Frames from a glob of PPM/PNG files or, for ``-``, a PPM stream on stdin."""
    if spec == "-":
        stream = stdin if stdin is not None else sys.stdin.buffer
        for i, f in enumerate(iter_ppm_stream(stream)):
            yield f"frame_{i:06d}", f
        return
    yield from iter_frame_files(spec)


# ---------------------------------------------------------------------------
# pipeline


class Pipeline:
    """Stateful per-frame runner; see :func:`run_pipeline`."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.shape: tuple[int, int] | None = None
        self.model = None
        self.params: PointingParams | None = None
        self.hn: SkinHistogram | None = None
        self.hs: SkinHistogram | None = None
        self.calib: list[np.ndarray] = []
        self.calib_faces: list[Rect | None] = []
        self.prev_gray: np.ndarray | None = None
        self.prev_fg: np.ndarray | None = None
        self.light_reports = []
        self.seen = 0

    def _check_shape(self, frame: np.ndarray, index: int) -> None:
        shape = frame.shape[:2]
        if self.shape is None:
            self.shape = shape
        elif shape != self.shape:
            raise InputError(f"frame {index}: dimensions {shape[1]}x{shape[0]} differ from "
                             f"{self.shape[1]}x{self.shape[0]}")

    def _finish_calibration(self) -> None:
        cfg = self.cfg
        h, w = self.shape
        if cfg.background == "codebook":
            self.model = CodebookModel(w, h, cfg.epsilon_color, cfg.alpha_b, cfg.beta_b, cfg.max_codewords)
            self.model.train(self.calib)
        else:
            self.model = KalmanBackground(cfg.kalman_params())
            self.model.train(self.calib)
        # non-skin colors: calibration frames away from any known face
        counts = None
        st = cfg.nonskin_stride
        for f, face in zip(self.calib, self.calib_faces):
            keep = np.ones((h, w), dtype=bool)
            if face is not None:
                r = face.clip(w, h)
                keep[r.y:r.y + r.height, r.x:r.x + r.width] = False
            sub = f[::st, ::st][keep[::st, ::st]]
            hist = histogram_of(sub, cfg.h_bins, cfg.s_bins, cfg.histogram_mode)
            counts = hist.counts if counts is None else counts + hist.counts
        if counts is None or counts.sum() == 0:
            self.hn = SkinHistogram.uniform(cfg.h_bins, cfg.s_bins, cfg.histogram_mode)
        else:
            self.hn = SkinHistogram(counts, cfg.histogram_mode)
        self.prev_gray = to_gray(self.calib[-1], "mean")
        self.prev_fg = np.zeros((h, w), dtype=bool)
        self.params = cfg.pointing_params(h * w)
        self.calib = []
        self.calib_faces = []
        if cfg.background_out:
            self.model.save(cfg.background_out)

    def _resume(self, frame: np.ndarray) -> None:
        """Start from a saved codebook instead of calibrating."""
        cfg = self.cfg
        h, w = self.shape
        try:
            model = CodebookModel.load(cfg.background_in)
        except OSError as exc:
            raise InputError(f"cannot read background model {cfg.background_in}: {exc}") from exc
        if model.shape != (h, w):
            raise InputError(f"background model is {model.width}x{model.height}, frames are {w}x{h}")
        self.model = model
        # non-skin colors: the background's own first codewords
        st = cfg.nonskin_stride
        has = model.count[::st, ::st] > 0
        colors = np.clip(np.rint(model.v[0, ::st, ::st][has]), 0, 255).astype(np.uint8)
        if colors.size:
            self.hn = histogram_of(colors, cfg.h_bins, cfg.s_bins, cfg.histogram_mode)
        else:
            self.hn = SkinHistogram.uniform(cfg.h_bins, cfg.s_bins, cfg.histogram_mode)
        self.prev_gray = to_gray(frame, "mean")
        self.prev_fg = np.zeros((h, w), dtype=bool)
        self.params = cfg.pointing_params(h * w)

    def process(self, frame, index: int, face: Rect | None = None) -> FrameResult | None:
        """Feed one frame; returns ``None`` while calibrating."""
        if isinstance(frame, UnreadableFrame):
            self.seen += 1
            return FrameResult(index, warning=f"unreadable frame {frame.name}: {frame.message}")
        frame = as_frame(frame)
        self._check_shape(frame, index)
        self.seen += 1
        if self.model is None and self.cfg.background_in:
            self._resume(frame)
        if self.model is None:
            self.calib.append(frame)
            self.calib_faces.append(face)
            if len(self.calib) >= self.cfg.calibration:
                self._finish_calibration()
            return None

        cfg = self.cfg
        timing = {}
        t0 = time.perf_counter()
        light = None
        gray = to_gray(frame, "mean")
        if cfg.background == "codebook" and cfg.light_check:
            rep = light_change_update(self.model, self.prev_gray, gray, cfg.light_policy(),
                                      frame=frame, exclude=self.prev_fg)
            self.light_reports.append(rep)
            if rep.action != "none":
                light = rep.action
        fg = self.model.subtract(frame)
        self.prev_gray = gray
        self.prev_fg = fg
        t1 = time.perf_counter()
        timing["background"] = (t1 - t0) * 1e3

        if face is not None:
            h, w = self.shape
            try:
                roi = forehead_from_face(face).clip(w, h)
                self.hs = build_histogram(frame, roi, None, cfg.h_bins, cfg.s_bins, cfg.histogram_mode)
            except InputError:
                pass  # keep the previous template
        if self.hs is None:
            timing["skin"] = (time.perf_counter() - t1) * 1e3
            timing["total"] = (time.perf_counter() - t0) * 1e3
            return FrameResult(index, "not_pointing", timing=timing, reason="no skin template",
                               light=light)
        prob = backproject(frame, fg, self.hs, self.hn)
        skin = binarize(prob, cfg.theta)
        t2 = time.perf_counter()
        timing["skin"] = (t2 - t1) * 1e3

        blobs = connected_components(skin, min_area=self.params.min_blob_area)
        body = select_body_blobs(blobs, self.params)
        t3 = time.perf_counter()
        timing["blobs"] = (t3 - t2) * 1e3

        order = [("right", body.right_hand), ("left", body.left_hand)]
        if cfg.prefer_hand == "left":
            order.reverse()
        chosen = None
        for side, blob in order:
            if blob is None:
                continue
            dec = classify_pointing(blob, self.params)
            if chosen is None or (dec.gesture == "pointing" and chosen[1].gesture != "pointing"):
                chosen = (side, dec)
            if dec.gesture == "pointing":
                break
        t4 = time.perf_counter()
        timing["pointing"] = (t4 - t3) * 1e3
        timing["total"] = (t4 - t0) * 1e3

        if chosen is None:
            return FrameResult(index, "no_hand", timing=timing, reason="no hand blob", light=light)
        side, dec = chosen
        if dec.gesture == "pointing":
            return FrameResult(index, "pointing", dec.fingertip, dict(dec.angle_by_method), side,
                               timing, light=light, decision=dec)
        return FrameResult(index, dec.gesture, hand=side, timing=timing,
                           reason=dec.diagnostics.get("reason"), light=light, decision=dec)


def run_pipeline(cfg: PipelineConfig, frames: Iterable, face_rects=None) -> Iterator[FrameResult]:
    """Run frames through the pipeline, yielding one result per processed frame.

    ``frames`` yields arrays (or :class:`UnreadableFrame`); ``face_rects`` is a
    mapping or callable from frame index to face rectangle, where missing
    indices reuse the latest earlier rectangle.  The first
    ``cfg.calibration`` readable frames only train the background.
    """
    if face_rects is None:
        lookup = FaceTrack()
    elif callable(face_rects):
        lookup = face_rects
    else:
        lookup = FaceTrack(face_rects)
    pipe = Pipeline(cfg)
    for i, frame in enumerate(frames):
        res = pipe.process(frame, i, lookup(i))
        if res is not None:
            yield res


# ---------------------------------------------------------------------------
# annotation


def _draw_line(img, p0, p1, color):
    x0, y0 = p0
    x1, y1 = p1
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.rint(np.linspace(x0, x1, n)).astype(int)
    ys = np.rint(np.linspace(y0, y1, n)).astype(int)
    ok = (xs >= 0) & (xs < img.shape[1]) & (ys >= 0) & (ys < img.shape[0])
    img[ys[ok], xs[ok]] = color


def _draw_dot(img, p, r, color):
    h, w = img.shape[:2]
    x, y = int(round(p[0])), int(round(p[1]))
    y0, y1 = max(y - r, 0), min(y + r + 1, h)
    x0, x1 = max(x - r, 0), min(x + r + 1, w)
    if y0 < y1 and x0 < x1:
        img[y0:y1, x0:x1] = color


def annotate_frame(frame: np.ndarray, result: FrameResult, ray_length: float = 60.0) -> np.ndarray:
    """Copy of ``frame`` with contour, hull, defects, fingertip and the
    bisector ray drawn in."""
    img = as_frame(frame).copy()
    dec = result.decision
    if dec is None:
        return img
    diag = dec.diagnostics
    contour = diag.get("contour")
    if contour is not None:
        pts = contour.points
        img[pts[:, 1], pts[:, 0]] = (0, 255, 0)
        hull = diag.get("hull")
        if hull is not None:
            hv = [tuple(pts[i]) for i in hull.indices]
            for a, b in zip(hv, hv[1:] + hv[:1]):
                _draw_line(img, a, b, (255, 255, 0))
        for d in diag.get("defects", []):
            _draw_dot(img, pts[d.far_idx], 2, (255, 0, 255))
    if dec.fingertip is not None:
        _draw_dot(img, dec.fingertip, 3, (255, 0, 0))
        ang = dec.angle_by_method.get("bisector")
        if ang is not None:
            t = math.radians(ang)
            end = (dec.fingertip[0] + ray_length * math.cos(t), dec.fingertip[1] - ray_length * math.sin(t))
            _draw_line(img, dec.fingertip, end, (255, 0, 0))
    return img


def annotated_name(source_name: str) -> str:
    stem = Path(source_name).name
    stem = re.sub(r"\.(ppm|pnm|png|jpe?g|bmp)$", "", stem, flags=re.IGNORECASE)
    return f"{stem}.annot.ppm"


def write_annotation(out_dir, source_name: str, frame: np.ndarray, result: FrameResult) -> Path:
    path = Path(out_dir) / annotated_name(source_name)
    write_ppm(path, annotate_frame(frame, result))
    return path
