"""Post-training int8 quantization.

Calibrates the trained model on a handful of windows, compares the integer
path against float inference, and reports the file-size shrink.
"""

import tempfile
from pathlib import Path

import numpy as np

from earpipe import dsp, io, metrics, nn, pipeline, synth

MODEL = Path(__file__).parent.parent / "tests" / "fixtures" / "model_crossear.epw"

model = io.load_model(MODEL)

# calibration windows from one synthetic recording
rec, _ = synth.generate(synth.SynthSpec(duration=40.0, fs=500.0, seed=99))
x = dsp.condition_channel(rec.by_role("ear_cross"), rec.fs)
calib = np.stack([pipeline.window_zscore(x[s:s + 500])
                  for s in range(0, 6000, 100)]).astype(np.float32)
qmodel = nn.calibrate(model, calib)

with tempfile.TemporaryDirectory() as d:
    fq = Path(d) / "model.epq"
    io.save_quantized(fq, qmodel)
    print(f"float file:     {MODEL.stat().st_size:6d} bytes")
    print(f"quantized file: {fq.stat().st_size:6d} bytes "
          f"({MODEL.stat().st_size / fq.stat().st_size:.1f}x smaller)")

# per-window probability agreement on unseen data
rec2, truth = synth.generate(synth.SynthSpec(
    duration=80.0, fs=500.0, hrv_jitter_ms=20.0, seed=1234))
x2 = dsp.condition_channel(rec2.by_role("ear_cross"), rec2.fs)
diffs = []
for s in range(0, x2.size - 500, 100):
    w = pipeline.window_zscore(x2[s:s + 500]).astype(np.float32)[None, :]
    diffs.append(np.mean(np.abs(nn.infer_probabilities(model, w)
                                - nn.forward_quantized(qmodel, w))))
print(f"\nmean |p_int8 - p_float| over {len(diffs)} windows: "
      f"{np.mean(diffs):.5f}")

pf, _, _ = pipeline.streaming_infer(model, rec2, "ear_cross", 0.85)
pq, _, _ = pipeline.streaming_infer(qmodel, rec2, "ear_cross", 0.85)
f_f1 = metrics.match_peaks(pf, truth).f1
q_f1 = metrics.match_peaks(pq, truth).f1
print(f"streaming F1: float {f_f1:.4f} vs int8 {q_f1:.4f}")

_, macs = nn.forward_quantized(qmodel, calib[:1], return_macs=True)
print(f"integer path MACs per inference: {macs}")
