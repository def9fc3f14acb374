"""Compare the three orientation estimates around a full turn.

    python3 demos/02_orientation_sweep.py [step_deg]

The COG ray leans toward the palm, the next-defect ray follows the knuckle
line and the bisector of the fingertip wedge tracks the finger itself.
"""
import sys

import numpy as np

from handpoint.app import PipelineConfig, run_pipeline
from handpoint.harness import evaluate, scene_stream, sweep_specs

step = float(sys.argv[1]) if len(sys.argv) > 1 else 15.0
stream = scene_stream(sweep_specs(step))
results = list(run_pipeline(PipelineConfig(), stream.frames, stream.faces))
rep = evaluate(*stream.scored(results))

print(f"{len(rep.rows)} scenes, {rep.tp} detected as pointing")
print(" truth      cog  next_defect  bisector   (absolute error, deg)")
for r in rep.rows:
    cells = ["     ---" if r[m] is None else f"{r[m]:8.2f}" for m in ("cog", "next_defect", "bisector")]
    print(f"{r['truth_angle']:6.1f} {cells[0]}     {cells[1]}  {cells[2]}")
for m, st in rep.angle_stats.items():
    if st["median"] is not None:
        print(f"{m:<12} median {st['median']:6.2f}  p90 {st['p90']:6.2f}")

ms = np.array([r.timing["total"] for r in results])
print(f"per-frame time: mean {ms.mean():.1f} ms, max {ms.max():.1f} ms")
