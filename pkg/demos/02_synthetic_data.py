"""Synthetic recordings with exact ground truth.

Generates one minute of four-channel data (arms + both ear montages),
then runs the arm-ECG reference chain and checks how closely it recovers
the generator's R-peak positions.
"""

import numpy as np

from earpipe import dsp, synth

spec = synth.SynthSpec(duration=60.0, fs=500.0,
                       hr_profile=((0.0, 55.0), (60.0, 80.0)),
                       hrv_jitter_ms=25.0, seed=42)
rec, truth = synth.generate(spec)

print(f"{rec.duration:.0f} s at {rec.fs:.0f} Hz, channels: {list(rec.channels)}")
print(f"ground truth: {len(truth)} beats, "
      f"RR {np.diff(truth).min() * 4} - {np.diff(truth).max() * 4} ms")

ecg_250, detected = dsp.ground_truth_pipeline(rec)
errors = [int(np.min(np.abs(detected - p))) for p in truth]
hit = sum(e <= 3 for e in errors)
print(f"\narm-ECG chain found {len(detected)} peaks")
print(f"  within 3 samples of truth: {hit}/{len(truth)} "
      f"({100 * hit / len(truth):.1f}%)")
print(f"  worst offset: {max(errors)} samples")

# ear channels are far below the noise floor by design
for name, role in (("ear_cross", "ear_cross"), ("ear_single", "ear_single")):
    x = rec.by_role(role)
    print(f"{name}: peak-to-peak {np.ptp(x):.2f} (arbitrary units), "
          f"ECG invisible to the naked eye at "
          f"{getattr(spec, 'snr_cross_db' if 'cross' in role else 'snr_single_db'):+.1f} dB SNR")
