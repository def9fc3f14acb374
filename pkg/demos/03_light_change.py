"""Brightness ramp: watch the codebook soften or purge as the room light moves.

    python3 demos/03_light_change.py

Each scene is shown twice; between the copies the whole frame brightens or
darkens by the next ramp step.  Small steps are absorbed into the existing
codewords, large ones purge most of the old codewords and relearn.
"""
from handpoint.app import Pipeline, PipelineConfig
from handpoint.harness import evaluate, gesture_specs, ramp_stream

stream = ramp_stream(gesture_specs(8, 8, seed=4))
pipe = Pipeline(PipelineConfig())
results = []
for i, f in enumerate(stream.frames):
    r = pipe.process(f, i, stream.faces.get(i))
    if r is not None:
        results.append(r)

print("frame  action  alpha  changed  removed")
for r, rep in zip(results, pipe.light_reports):
    if rep.action != "none":
        print(f"{r.frame_index:5d}  {rep.action:<6} {rep.alpha:6.1f}  {100 * rep.changed_fraction:5.1f}%  "
              f"{rep.removed:7d}")

ev = evaluate(*stream.scored(results))
print(f"scored frames: TP {100 * ev.tp_rate:.0f}%  TN {100 * ev.tn_rate:.0f}%")
