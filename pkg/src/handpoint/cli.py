"""Command-line entry point: ``run``, ``synth``, ``eval`` and ``bench``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .app import (ConfigError, PipelineConfig, Pipeline, UnreadableFrame, FaceTrack, format_face_sidecar,
                  iter_frame_source, parse_face_sidecar, read_jsonl, result_line, write_annotation)
from .harness import calibration_frames, evaluate, report_json
from .imgcore import InputError, write_ppm
from .synth import POSTURES, generate_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3


def _load_config(path: str | None) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def _load_faces(path: str | None) -> FaceTrack:
    if not path:
        return FaceTrack()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read face sidecar {path}: {exc}") from exc
    return FaceTrack(parse_face_sidecar(text))


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    frames = args.frames or cfg.frames
    if not frames:
        raise ConfigError("no frame source: pass --frames or set frames in the config")
    faces = _load_faces(args.faces or cfg.faces)
    out_path = args.out or cfg.out
    annotate = args.annotate or cfg.annotate
    if annotate:
        Path(annotate).mkdir(parents=True, exist_ok=True)
    out = open(out_path, "w") if out_path and out_path != "-" else sys.stdout
    pipe = Pipeline(cfg)
    try:
        for i, (name, frame) in enumerate(iter_frame_source(frames)):
            res = pipe.process(frame, i, faces(i))
            if res is None:
                continue
            out.write(result_line(res, cfg.emit_timing) + "\n")
            if annotate and not isinstance(frame, UnreadableFrame):
                write_annotation(annotate, name, frame, res)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.gesture not in POSTURES:
        raise ConfigError(f"--gesture must be one of {', '.join(POSTURES)}")
    if args.count < 1:
        raise ConfigError("--count must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([args.seed, 0xA9])
    frames = calibration_frames(args.calibration, width=args.width, height=args.height,
                                background_seed=args.background_seed, seed=args.seed)
    for i, f in enumerate(frames):
        write_ppm(out / f"frame_{i:06d}.ppm", f)
    faces = {}
    truths = []
    for j in range(args.count):
        if args.angle is None:
            angle = float(rng.integers(0, 360))
        else:
            angle = float(args.angle) % 360.0
        sc = generate_scene(args.gesture, angle, args.seed + j, width=args.width, height=args.height,
                            background_seed=args.background_seed)
        i = args.calibration + j
        write_ppm(out / f"frame_{i:06d}.ppm", sc.frame)
        faces[i] = sc.truth.face
        truths.append(sc.truth.to_json(i))
    (out / "faces.txt").write_text(format_face_sidecar(faces))
    with open(out / "truth.jsonl", "w") as fh:
        for t in truths:
            fh.write(json.dumps(t) + "\n")
    print(f"wrote {args.calibration} calibration + {args.count} scene frames to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    results = read_jsonl(args.results)
    truths = read_jsonl(args.truth)
    by_frame = {r["frame"]: r for r in results if "frame" in r}
    aligned = []
    for t in truths:
        if "frame" in t:
            if t["frame"] not in by_frame:
                raise InputError(f"no result for frame {t['frame']}")
            aligned.append(by_frame[t["frame"]])
    if len(aligned) != len(truths):
        raise InputError("truth records must carry a frame index")
    report = evaluate(aligned, truths)
    sys.stdout.write(report.to_text())
    if args.json:
        Path(args.json).write_text(report_json(report) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    if args.calibration is not None:
        if args.calibration < 1:
            raise ConfigError("--calibration must be at least 1")
        cfg.calibration = args.calibration
    faces = _load_faces(args.faces)
    pipe = Pipeline(cfg)
    stages: dict[str, list[float]] = {}
    n = 0
    t0 = time.perf_counter()
    for i, (_, frame) in enumerate(iter_frame_source(args.frames)):
        res = pipe.process(frame, i, faces(i))
        if res is None or not res.timing:
            continue
        n += 1
        for k, v in res.timing.items():
            stages.setdefault(k, []).append(v)
    wall = time.perf_counter() - t0
    if n == 0:
        print("no frames processed after calibration")
        return EXIT_OK
    print(f"{n} frames processed ({wall:.2f} s wall, including calibration)")
    print("stage          mean ms   median ms     max ms")
    for k, v in stages.items():
        a = np.asarray(v)
        print(f"{k:<12} {a.mean():9.2f} {np.median(a):11.2f} {a.max():10.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="handpoint", description="Hand pointing detection pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="process frames and write JSON Lines results")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--frames", help="glob of PPM/PNG frames, or - for a PPM stream on stdin")
    p.add_argument("--faces", help="face sidecar: 'frame x y w h' per line")
    p.add_argument("--out", help="JSON Lines output (default stdout)")
    p.add_argument("--annotate", help="directory for annotated .annot.ppm frames")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="render a synthetic scene sequence")
    p.add_argument("--gesture", required=True, choices=POSTURES)
    p.add_argument("--angle", type=float, help="hand direction in degrees (random per frame if omitted)")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--calibration", type=int, default=30, help="empty background frames written first")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--background-seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score results against synthetic ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--json", help="also write the report as JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage timing over a frame sequence")
    p.add_argument("--frames", required=True)
    p.add_argument("--faces")
    p.add_argument("--config")
    p.add_argument("--calibration", type=int)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
