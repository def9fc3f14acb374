import io
import json

import numpy as np
import pytest

from handpoint.app import (ConfigError, FaceTrack, FrameResult, Pipeline, PipelineConfig, UnreadableFrame,
                           annotated_name, format_face_sidecar, iter_frame_source, parse_face_sidecar,
                           result_line, run_pipeline, write_results)
from handpoint.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, main
from handpoint.harness import scene_stream
from handpoint.imgcore import InputError, encode_ppm, read_ppm, write_ppm
from handpoint.skin import Rect

W, H = 320, 240
SPECS = [("pointing", 90.0, 1), ("fist", 0.0, 3), ("pointing", 250.0, 5)]


@pytest.fixture(scope="module")
def stream():
    return scene_stream(SPECS, calibration=10, width=W, height=H)


def run(cfg, s, faces=None):
    return list(run_pipeline(cfg, s.frames, s.faces if faces is None else faces))


def circ(a, b):
    d = abs(a - b) % 360
    return min(d, 360 - d)


# ---------------------------------------------------------------------------
# config


def test_config_round_trip():
    cfg = PipelineConfig(background="kalman", theta=0.3, secondary_band=(170.0, 190.0), emit_timing=False)
    back = PipelineConfig.from_text(cfg.to_text())
    assert back == cfg


def test_config_parse_forms():
    cfg = PipelineConfig.from_text("# comment\nk = 12\ndominant_frac = 1/5\nlight_check = off\n"
                                   "secondary_band = none\nbackground_out = bg.pvbg\n")
    assert cfg.k == 12 and cfg.dominant_frac == 0.2 and cfg.light_check is False
    assert cfg.secondary_band is None and cfg.background_out == "bg.pvbg"


@pytest.mark.parametrize("text", ["k 12", "nosuch = 1", "k = twelve", "theta = 2", "background = mog",
                                  "light_check = maybe", "calibration = 0", "decision = either",
                                  "background = kalman\nbackground_in = x.pvbg", "k = 16\nresample_n = 20"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        PipelineConfig.from_text(text)


def test_min_blob_area_scales_with_frame():
    cfg = PipelineConfig()
    assert cfg.pointing_params().min_blob_area == 200
    assert cfg.pointing_params(W * H).min_blob_area == 50


# ---------------------------------------------------------------------------
# pipeline


def test_calibration_then_pointing(stream):
    rs = run(PipelineConfig(calibration=10), stream)
    assert [r.frame_index for r in rs] == [10, 11, 12]
    a, b, c = rs
    assert a.gesture == "pointing" and circ(a.angles["bisector"], 90.0) <= 10
    assert b.gesture == "not_pointing"
    assert c.gesture == "pointing" and circ(c.angles["bisector"], 250.0) <= 10
    assert a.hand in ("left", "right")
    for r in rs:
        assert set(r.timing) == {"background", "skin", "blobs", "pointing", "total"}
        assert all(v >= 0 for v in r.timing.values())


def test_calibration_gate(stream):
    pipe = Pipeline(PipelineConfig(calibration=10))
    for i, f in enumerate(stream.frames[:10]):
        assert pipe.process(f, i, stream.faces.get(i)) is None
    assert pipe.process(stream.frames[10], 10, stream.faces[10]).gesture is not None


def test_kalman_background_runs(stream):
    rs = run(PipelineConfig(calibration=10, background="kalman"), stream)
    assert rs[0].gesture == "pointing" and rs[1].gesture == "not_pointing"


def test_no_face_means_no_template(stream):
    rs = run(PipelineConfig(calibration=10), stream, faces={})
    assert all(r.gesture == "not_pointing" and r.reason == "no skin template" for r in rs)


def test_face_track_reuses_latest():
    ft = FaceTrack({3: Rect(1, 2, 3, 4), 7: Rect(5, 6, 7, 8)})
    assert ft(0) is None and ft(3) == Rect(1, 2, 3, 4) and ft(6) == Rect(1, 2, 3, 4)
    assert ft(100) == Rect(5, 6, 7, 8)


def test_sidecar_reuse_matches_explicit(stream):
    # giving the face only on the first scored frame reuses it afterwards
    faces = {10: stream.faces[10]}
    a = run(PipelineConfig(calibration=10, emit_timing=False), stream, faces=faces)
    assert a[0].gesture == "pointing"
    assert a[1].reason != "no skin template"


def test_empty_source():
    assert list(run_pipeline(PipelineConfig(), [])) == []


def test_dimension_change_is_input_error(stream):
    frames = stream.frames[:10] + [np.zeros((H // 2, W, 3), np.uint8)]
    with pytest.raises(InputError):
        list(run_pipeline(PipelineConfig(calibration=10), frames))


def test_unreadable_frame_gives_warning(stream):
    frames = stream.frames[:11] + [UnreadableFrame("bad.ppm", "truncated")] + stream.frames[11:]
    faces = {i + (i > 10): r for i, r in stream.faces.items()}
    rs = run(PipelineConfig(calibration=10), type(stream)(frames, faces, [], 10))
    assert rs[1].warning.startswith("unreadable frame bad.ppm") and rs[1].gesture is None
    assert rs[0].gesture == rs[3].gesture == "pointing"
    assert json.loads(result_line(rs[1])) == {"frame": 11, "warning": rs[1].warning}


def test_jsonl_omits_absent_fields():
    r = FrameResult(4, "no_hand", reason="no hand blob", timing={"total": 1.23456})
    assert json.loads(result_line(r)) == {"frame": 4, "gesture": "no_hand", "reason": "no hand blob",
                                          "ms": {"total": 1.235}}
    assert "ms" not in json.loads(result_line(r, emit_timing=False))
    p = FrameResult(5, "pointing", (1.0, 2.0), {"bisector": 3.0, "cog": 1.0, "next_defect": 2.0}, "right")
    line = result_line(p, emit_timing=False)
    assert line == ('{"frame": 5, "gesture": "pointing", "fingertip": [1.0, 2.0], '
                    '"angles": {"cog": 1.0, "next_defect": 2.0, "bisector": 3.0}, "hand": "right"}')


def test_output_is_deterministic(stream):
    def text():
        buf = io.StringIO()
        write_results(run(PipelineConfig(calibration=10), stream), buf, emit_timing=False)
        return buf.getvalue()

    assert text() == text()


def test_background_save_and_resume(stream, tmp_path):
    path = tmp_path / "bg.pvbg"
    a = run(PipelineConfig(calibration=10, background_out=str(path), emit_timing=False), stream)
    assert path.exists()
    cfg = PipelineConfig(background_in=str(path), emit_timing=False)
    scenes = stream.frames[10:]
    faces = {i - 10: r for i, r in stream.faces.items()}
    b = list(run_pipeline(cfg, scenes, faces))
    assert [r.frame_index for r in b] == [0, 1, 2]
    assert [r.gesture for r in b] == [r.gesture for r in a]
    assert circ(b[0].angles["bisector"], 90.0) <= 10


def test_resume_errors(stream, tmp_path):
    with pytest.raises(InputError):
        list(run_pipeline(PipelineConfig(background_in=str(tmp_path / "missing.pvbg")), stream.frames[:1]))
    path = tmp_path / "bg.pvbg"
    run(PipelineConfig(calibration=10, background_out=str(path)), stream)
    with pytest.raises(InputError):
        list(run_pipeline(PipelineConfig(background_in=str(path)), [np.zeros((10, 10, 3), np.uint8)]))


# ---------------------------------------------------------------------------
# inputs


def test_face_sidecar_round_trip():
    faces = {0: Rect(1, 2, 30, 40), 12: Rect(5, 6, 7, 8)}
    assert parse_face_sidecar(format_face_sidecar(faces)) == faces
    assert parse_face_sidecar("# header\n\n3 1 1 5 5  # trailing\n") == {3: Rect(1, 1, 5, 5)}
    for bad in ("1 2 3 4", "1 2 3 4 x", "1 2 3 0 5"):
        with pytest.raises(InputError):
            parse_face_sidecar(bad)


def test_frame_sources(tmp_path):
    rng = np.random.default_rng(0)
    frames = [rng.integers(0, 256, (4, 5, 3)).astype(np.uint8) for _ in range(3)]
    for i in (10, 2, 1):  # natural order, not lexicographic
        write_ppm(tmp_path / f"f{i}.ppm", frames[[1, 2, 10].index(i)])
    (tmp_path / "f3.ppm").write_bytes(b"P6\n5 4\n255\n\x00")
    got = list(iter_frame_source(str(tmp_path / "f*.ppm")))
    assert [n.rsplit("/", 1)[-1] for n, _ in got] == ["f1.ppm", "f2.ppm", "f3.ppm", "f10.ppm"]
    assert isinstance(got[2][1], UnreadableFrame)
    assert np.array_equal(got[3][1], frames[2])
    stdin = io.BytesIO(b"".join(encode_ppm(f) for f in frames))
    got = list(iter_frame_source("-", stdin=stdin))
    assert len(got) == 3 and all(np.array_equal(a, b) for (_, a), b in zip(got, frames))


def test_annotated_name():
    assert annotated_name("/x/frame_000012.ppm") == "frame_000012.annot.ppm"
    assert annotated_name("shot.PNG") == "shot.annot.ppm"


# ---------------------------------------------------------------------------
# command line


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    rc = main(["synth", "--gesture", "pointing", "--angle", "60", "--count", "2", "--seed", "3",
               "--calibration", "8", "--width", str(W), "--height", str(H), "--out", str(out)])
    assert rc == EXIT_OK
    return out


def test_cli_synth_layout(synth_dir):
    names = sorted(p.name for p in synth_dir.glob("*.ppm"))
    assert names == [f"frame_{i:06d}.ppm" for i in range(10)]
    truths = [json.loads(line) for line in (synth_dir / "truth.jsonl").read_text().splitlines()]
    assert [t["frame"] for t in truths] == [8, 9] and truths[0]["angle"] == 60.0
    assert sorted(parse_face_sidecar((synth_dir / "faces.txt").read_text())) == [8, 9]


def test_cli_run_eval_and_annotate(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("calibration = 8\nemit_timing = false\n")
    out = tmp_path / "out.jsonl"
    ann = tmp_path / "ann"
    rc = main(["run", "--config", str(cfg), "--frames", str(synth_dir / "*.ppm"),
               "--faces", str(synth_dir / "faces.txt"), "--out", str(out), "--annotate", str(ann)])
    assert rc == EXIT_OK
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["frame"] for r in recs] == [8, 9]
    assert all(r["gesture"] in ("pointing", "not_pointing") and "ms" not in r for r in recs)
    n_pointing = sum(r["gesture"] == "pointing" for r in recs)
    assert n_pointing >= 1
    annotated = sorted(p.name for p in ann.iterdir())
    assert annotated == ["frame_000008.annot.ppm", "frame_000009.annot.ppm"]
    img = read_ppm(ann / annotated[0])
    src = read_ppm(synth_dir / "frame_000008.ppm")
    assert img.shape == src.shape and not np.array_equal(img, src)

    capsys.readouterr()
    rc = main(["eval", "--results", str(out), "--truth", str(synth_dir / "truth.jsonl"),
               "--json", str(tmp_path / "rep.json")])
    assert rc == EXIT_OK
    assert f"TP {100 * n_pointing / 2:.1f}%" in capsys.readouterr().out
    assert json.loads((tmp_path / "rep.json").read_text())["tp"] == n_pointing


def test_cli_bench(synth_dir, capsys):
    rc = main(["bench", "--frames", str(synth_dir / "*.ppm"), "--faces", str(synth_dir / "faces.txt"),
               "--calibration", "8"])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("2 frames processed") and "total" in out


def test_cli_exit_codes(synth_dir, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("theta = 7\n")
    assert main(["run", "--config", str(bad), "--frames", str(synth_dir / "*.ppm")]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "nope.txt"), "--frames", "x"]) == EXIT_CONFIG
    assert main(["run"]) == EXIT_CONFIG
    assert main(["run", "--frames", str(synth_dir / "*.ppm"), "--faces", str(tmp_path / "nofaces")]) == EXIT_INPUT
    assert main(["eval", "--results", str(tmp_path / "none.jsonl"), "--truth", "x"]) == EXIT_INPUT
    mixed = tmp_path / "mixed"
    mixed.mkdir()
    write_ppm(mixed / "a1.ppm", np.zeros((4, 4, 3), np.uint8))
    write_ppm(mixed / "a2.ppm", np.zeros((5, 4, 3), np.uint8))
    cfg = tmp_path / "c1.txt"
    cfg.write_text("calibration = 1\n")
    assert main(["run", "--config", str(cfg), "--frames", str(mixed / "*.ppm"),
                 "--out", str(tmp_path / "o.jsonl")]) == EXIT_INPUT
