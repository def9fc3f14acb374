"""Walk one synthetic frame through every stage of the pipeline.

    python3 demos/01_one_frame_walkthrough.py [angle] [out_dir]

Prints what each stage produces and writes the annotated frame.
"""
import sys
from pathlib import Path

import numpy as np

from handpoint.app import FrameResult, annotate_frame
from handpoint.background import CodebookModel
from handpoint.harness import calibration_frames
from handpoint.imgcore import write_ppm
from handpoint.pointing import PointingParams, classify_pointing, select_body_blobs
from handpoint.skin import (backproject, binarize, build_histogram, connected_components, forehead_from_face,
                            histogram_of)
from handpoint.synth import generate_scene

angle = float(sys.argv[1]) if len(sys.argv) > 1 else 135.0
out_dir = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out")
out_dir.mkdir(parents=True, exist_ok=True)

# A person in a textured room, hand pointing at `angle` (degrees, y up).
scene = generate_scene("pointing", angle, seed=21)
frame, truth = scene.frame, scene.truth
h, w = frame.shape[:2]
print(f"frame {w}x{h}, true direction {truth.angle:.0f} deg, true fingertip {truth.fingertip}")

# 1. Background: 30 empty frames train a codebook per pixel.
calib = calibration_frames(30)
model = CodebookModel(w, h).train(calib)
print(f"codebook: {model.total_codewords()} codewords, "
      f"{model.total_codewords() / (w * h):.2f} per pixel on average")
fg = model.subtract(frame)
print(f"foreground: {fg.sum()} pixels ({100 * fg.mean():.1f}% of the frame)")

# 2. Skin: the forehead gives the skin histogram, the empty room the non-skin one.
roi = forehead_from_face(truth.face)
hs = build_histogram(frame, roi)
hn = histogram_of(np.concatenate([f[::4, ::4].reshape(-1, 3) for f in calib]))
prob = backproject(frame, fg, hs, hn)
skin = binarize(prob, 0.25)
print(f"forehead {tuple(roi)}: {hs.total} samples; skin pixels after theta=0.25: {skin.sum()}")

# 3. Blobs: head is the largest, hands are the next two by side.
params = PointingParams()
blobs = connected_components(skin, min_area=params.min_blob_area)
body = select_body_blobs(blobs, params)
print(f"{len(blobs)} blobs: head area {body.head.area}, "
      f"left {body.left_hand and body.left_hand.area}, right {body.right_hand and body.right_hand.area}")

# 4. Pointing: contour, corners, hull fingertips and the three orientations.
hand = body.right_hand or body.left_hand
dec = classify_pointing(hand, params)
d = dec.diagnostics
print(f"contour {len(d['contour'])} points, perimeter {d['perimeter']:.1f}, "
      f"{len(d['candidates'])} corner candidates, dominant={d['dominant'] is not None}")
print(f"{len(d['all_defects'])} defects ({len(d['defects'])} deep), CDAvg {d['cd_avg']:.1f}, "
      f"hull fingertips {d['hull_tips']}")
print(f"decision: {dec.gesture}")
if dec.gesture == "pointing":
    print(f"fingertip {dec.fingertip} (truth {truth.fingertip})")
    for m, a in dec.angle_by_method.items():
        err = abs((a - truth.angle + 180) % 360 - 180)
        print(f"  {m:<12} {a:7.2f} deg   error {err:5.2f}")

res = FrameResult(0, dec.gesture, dec.fingertip, dec.angle_by_method, decision=dec)
path = out_dir / "walkthrough.annot.ppm"
write_ppm(path, annotate_frame(frame, res))
print(f"annotated frame written to {path}")
