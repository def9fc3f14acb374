"""Scene streams for end-to-end runs and the detection/angle evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .app import FrameResult
from .imgcore import InputError
from .pointing import METHODS
from .skin import Rect
from .synth import SceneTruth, add_sensor_noise, apply_brightness, generate_scene, render_background

# brightness steps of the scripted ramp; the running offset swings within +-40
RAMP_STEPS = (5, 5, 15, 15, -15, -15, -5, -5, -5, -5, -15, -15, 15, 15, 5, 5)


@dataclass
class SceneStream:
    """Frames, per-frame face rectangles and truths (``None`` for frames that
    are not scored, such as calibration frames)."""

    frames: list[np.ndarray]
    faces: dict[int, Rect]
    truths: list[SceneTruth | None]
    calibration: int

    def scored(self, results: Sequence[FrameResult]) -> tuple[list[FrameResult], list[SceneTruth]]:
        """Pair results with the truths of scored frames."""
        by_index = {r.frame_index: r for r in results}
        rs, ts = [], []
        for i, t in enumerate(self.truths):
            if t is None:
                continue
            if i not in by_index:
                raise InputError(f"no result for scored frame {i}")
            rs.append(by_index[i])
            ts.append(t)
        return rs, ts


def calibration_frames(n: int, *, width: int = 640, height: int = 480,
                       background_seed: int = 0, seed: int = 0) -> list[np.ndarray]:
    bg = render_background(width, height, background_seed)
    return [add_sensor_noise(bg, [seed, 0xCA, i]) for i in range(n)]


def scene_stream(specs: Iterable[tuple[str, float, int]], *, calibration: int = 30,
                 width: int = 640, height: int = 480, background_seed: int = 0,
                 seed: int = 0) -> SceneStream:
    """Calibration frames followed by one frame per ``(posture, angle, seed)``."""
    frames = calibration_frames(calibration, width=width, height=height,
                                background_seed=background_seed, seed=seed)
    truths: list[SceneTruth | None] = [None] * calibration
    faces = {}
    for posture, angle, s in specs:
        sc = generate_scene(posture, float(angle), int(s), width=width, height=height,
                            background_seed=background_seed)
        faces[len(frames)] = sc.truth.face
        frames.append(sc.frame)
        truths.append(sc.truth)
    return SceneStream(frames, faces, truths, calibration)


def gesture_specs(n_pointing: int = 100, n_other: int = 100, seed: int = 0) -> list[tuple[str, float, int]]:
    """Pointing scenes at random angles interleaved with palms and fists."""
    rng = np.random.default_rng([seed, 0x7A])
    specs = []
    for i in range(n_pointing):
        specs.append(("pointing", float(rng.integers(0, 360)), 1000 * seed + i))
    for i in range(n_other):
        posture = "open_palm" if i % 2 == 0 else "fist"
        specs.append((posture, float(rng.integers(0, 360)), 1000 * seed + 500 + i))
    order = rng.permutation(len(specs))
    return [specs[i] for i in order]


def sweep_specs(step: float = 5.0, seed: int = 0) -> list[tuple[str, float, int]]:
    n = int(round(360.0 / step))
    return [("pointing", i * step, seed + i) for i in range(n)]


def ramp_stream(specs: Sequence[tuple[str, float, int]], *, calibration: int = 30,
                width: int = 640, height: int = 480, background_seed: int = 0,
                seed: int = 0, steps: Sequence[float] = RAMP_STEPS) -> SceneStream:
    """Each scene is shown twice; the second copy carries the next brightness
    step of the ramp and is the one scored."""
    base = scene_stream(specs, calibration=calibration, width=width, height=height,
                        background_seed=background_seed, seed=seed)
    frames = base.frames[:calibration]
    truths: list[SceneTruth | None] = [None] * calibration
    faces = {}
    offset = 0.0
    for j, i in enumerate(range(calibration, len(base.frames))):
        f = base.frames[i]
        faces[len(frames)] = base.faces[i]
        frames.append(apply_brightness(f, offset))
        truths.append(None)
        offset += steps[j % len(steps)]
        faces[len(frames)] = base.faces[i]
        frames.append(apply_brightness(f, offset))
        truths.append(base.truths[i])
    return SceneStream(frames, faces, truths, calibration)


# ---------------------------------------------------------------------------
# evaluation


def circular_diff(a: float, b: float) -> float:
    d = abs(float(a) - float(b)) % 360.0
    return min(d, 360.0 - d)


@dataclass
class EvalReport:
    tp: int
    fn: int
    tn: int
    fp: int
    rows: list[dict] = field(default_factory=list)
    angle_stats: dict[str, dict[str, float | None]] = field(default_factory=dict)

    @property
    def tp_rate(self) -> float:
        n = self.tp + self.fn
        return self.tp / n if n else float("nan")

    @property
    def fn_rate(self) -> float:
        n = self.tp + self.fn
        return self.fn / n if n else float("nan")

    @property
    def tn_rate(self) -> float:
        n = self.tn + self.fp
        return self.tn / n if n else float("nan")

    @property
    def fp_rate(self) -> float:
        n = self.tn + self.fp
        return self.fp / n if n else float("nan")

    def to_json(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp,
                "tp_rate": self.tp_rate, "fn_rate": self.fn_rate,
                "tn_rate": self.tn_rate, "fp_rate": self.fp_rate,
                "angle_error": self.angle_stats, "rows": self.rows}

    def to_text(self) -> str:
        def pct(x):
            return "n/a" if x != x else f"{100 * x:.1f}%"

        out = [f"pointing frames: {self.tp + self.fn}  non-pointing frames: {self.tn + self.fp}",
               f"TP {pct(self.tp_rate)}  FN {pct(self.fn_rate)}  TN {pct(self.tn_rate)}  FP {pct(self.fp_rate)}",
               "angle error (deg)    median      p90"]
        for m in METHODS:
            st = self.angle_stats.get(m, {})
            med, p90 = st.get("median"), st.get("p90")
            fmt = (lambda v: "     n/a" if v is None else f"{v:8.2f}")
            out.append(f"  {m:<16} {fmt(med)} {fmt(p90)}")
        if self.rows:
            out.append("")
            out.append("frame   truth  detected   " + "  ".join(f"{m:>11}" for m in METHODS))
            for r in self.rows:
                errs = "  ".join("        ---" if r[m] is None else f"{r[m]:11.2f}" for m in METHODS)
                out.append(f"{r['frame']:5d} {r['truth_angle']:7.1f}  {str(r['detected']):>8}   {errs}")
        return "\n".join(out) + "\n"


def _get(obj, name, default=None):
    if isinstance(obj, dict):
        return obj.get(name, default)
    return getattr(obj, name, default)


def evaluate(results: Sequence, truths: Sequence) -> EvalReport:
    """Detection counts and per-method angle errors.

    ``results`` are :class:`FrameResult` objects or their JSON records;
    ``truths`` are :class:`SceneTruth` objects or their JSON records, aligned
    one to one.  There is one row per pointing truth.
    """
    if len(results) != len(truths):
        raise InputError(f"{len(results)} results but {len(truths)} truths")
    tp = fn = tn = fp = 0
    rows = []
    errs = {m: [] for m in METHODS}
    for k, (r, t) in enumerate(zip(results, truths)):
        frame = _get(r, "frame_index", _get(r, "frame", k))
        said = _get(r, "gesture") == "pointing"
        truth_pointing = _get(t, "gesture") == "pointing"
        if truth_pointing:
            row = {"frame": int(frame), "truth_angle": float(_get(t, "angle")), "detected": said}
            if said:
                tp += 1
                angles = _get(r, "angles") or {}
                for m in METHODS:
                    e = circular_diff(angles[m], row["truth_angle"]) if m in angles else None
                    row[m] = e
                    if e is not None:
                        errs[m].append(e)
            else:
                fn += 1
                for m in METHODS:
                    row[m] = None
            rows.append(row)
        elif said:
            fp += 1
        else:
            tn += 1
    stats = {}
    for m in METHODS:
        if errs[m]:
            a = np.asarray(errs[m])
            stats[m] = {"median": float(np.median(a)), "p90": float(np.percentile(a, 90)), "n": len(a)}
        else:
            stats[m] = {"median": None, "p90": None, "n": 0}
    return EvalReport(tp, fn, tn, fp, rows, stats)


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True)
