"""Synthetic biopotential generator with exactly known R-peak positions.

Arm channels carry a clean Gaussian-bump ECG (P/QRS/T morphology) at
configurable heart-rate profiles; ear channels mix an attenuated copy with
pink noise and mains interference at controlled SNR.  Beat positions are
snapped to the 250 Hz analysis grid so the recorded truth is exact.
Everything is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .dsp import Recording

GRID_FS = 250.0
MIN_RR_S = 0.3

# (amplitude rel. R, width sigma s, offset from R s) per wave
_DEFAULT_WAVES = (
    ("p", 0.15, 0.030, -0.170),
    ("q", -0.12, 0.010, -0.026),
    ("r", 1.00, 0.007, 0.000),
    ("s", -0.18, 0.010, 0.026),
    ("t", 0.32, 0.055, 0.230),
)


@dataclass(frozen=True)
class EcgMorphology:
    waves: tuple = _DEFAULT_WAVES
    t_damping: float = 0.35  # extra T attenuation on the single-ear source

    def perturbed(self, rng) -> "EcgMorphology":
        """Per-subject morphology variation: wave widths and amplitudes."""
        waves = tuple(
            (name,
             amp * (rng.uniform(0.85, 1.15) if name != "r" else 1.0),
             sigma * rng.uniform(0.85, 1.15),
             off * rng.uniform(0.9, 1.1))
            for name, amp, sigma, off in self.waves)
        return EcgMorphology(waves=waves, t_damping=self.t_damping)


@dataclass
class SynthSpec:
    duration: float = 300.0
    fs: float = 500.0
    hr_profile: tuple = ((0.0, 60.0),)   # (time s, bpm) knots, linear between
    hrv_jitter_ms: float = 20.0
    snr_cross_db: float = -6.0
    snr_single_db: float = -10.5
    mains_amp: float = 0.3               # relative to the ear ECG component RMS
    seed: int = 0
    morphology: EcgMorphology = field(default_factory=EcgMorphology)

    def __post_init__(self):
        ratio = self.fs / GRID_FS
        if abs(ratio - round(ratio)) > 1e-9 or self.fs < GRID_FS:
            raise ValueError(f"fs must be a multiple of {GRID_FS}, got {self.fs}")
        if self.duration <= 2.0:
            raise ValueError("duration must exceed 2 s")
        if self.hrv_jitter_ms < 0:
            raise ValueError("hrv_jitter_ms must be >= 0")
        if not self.hr_profile:
            raise ValueError("hr_profile needs at least one knot")
        for _, bpm in self.hr_profile:
            if not (30.0 <= bpm <= 220.0):
                raise ValueError(f"hr profile value {bpm} outside [30, 220] bpm")


def _bpm_at(profile, t: float) -> float:
    ts = np.asarray([p[0] for p in profile], dtype=float)
    vs = np.asarray([p[1] for p in profile], dtype=float)
    return float(np.interp(t, ts, vs))


def _beat_grid_indices(spec: SynthSpec, rng) -> np.ndarray:
    """R-peak positions as 250 Hz sample indices."""
    out = []
    t = 0.5 * 60.0 / _bpm_at(spec.hr_profile, 0.0)
    while t < spec.duration - MIN_RR_S:
        out.append(round(t * GRID_FS))
        rr = 60.0 / _bpm_at(spec.hr_profile, t)
        if spec.hrv_jitter_ms > 0:
            rr += rng.normal(0.0, spec.hrv_jitter_ms / 1000.0)
        t += max(MIN_RR_S, rr)
    return np.asarray(out, dtype=int)


def _ecg_trace(n: int, fs: float, beat_idx: np.ndarray,
               morph: EcgMorphology, t_scale: float = 1.0) -> np.ndarray:
    x = np.zeros(n)
    for name, amp, sigma, off in morph.waves:
        if name == "t":
            amp = amp * t_scale
        half = int(np.ceil(4 * sigma * fs))
        rel = np.arange(-half, half + 1)
        bump = amp * np.exp(-0.5 * (rel / (sigma * fs)) ** 2)
        centers = (beat_idx * (fs / GRID_FS)).astype(int) + int(round(off * fs))
        for c in centers:
            lo, hi = max(0, c - half), min(n, c + half + 1)
            if lo < hi:
                x[lo:hi] += bump[lo - (c - half):hi - (c - half)]
    return x


def _pink_noise(rng, n: int, fs: float) -> np.ndarray:
    """1/f spectrum (flat below 0.5 Hz), unit variance."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, d=1.0 / fs)
    spec /= np.sqrt(np.maximum(f, 0.5))
    spec[0] = 0.0
    x = np.fft.irfft(spec, n=n)
    return x / x.std()


def generate(spec: SynthSpec, return_parts: bool = False):
    """Build one recording plus its exact 250 Hz R-peak truth.

    Channels: arm_l/arm_r (clean Lead-I halves), ear_cross and ear_single
    (attenuated ECG in pink noise and mains at the configured SNRs; the
    single-ear source has its T wave damped).
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * spec.fs))
    t = np.arange(n) / spec.fs
    beat_idx = _beat_grid_indices(spec, rng)

    ecg = _ecg_trace(n, spec.fs, beat_idx, spec.morphology)
    ecg_single_src = _ecg_trace(n, spec.fs, beat_idx, spec.morphology,
                                t_scale=spec.morphology.t_damping)

    def arm_noise():
        drift = 0.4 * np.sin(2 * np.pi * 0.2 * t + rng.uniform(0, 2 * np.pi))
        return 0.02 * rng.standard_normal(n) + drift

    arm_l = 0.5 * ecg + arm_noise()
    arm_r = -0.5 * ecg + arm_noise()

    def ear_channel(source, snr_db):
        noise = _pink_noise(rng, n, spec.fs)
        p_src = np.mean(source**2)
        gain = np.sqrt(10.0 ** (snr_db / 10.0) * np.mean(noise**2) / p_src)
        component = gain * source
        mains_rms = spec.mains_amp * np.sqrt(np.mean(component**2))
        mains = mains_rms * np.sqrt(2.0) * np.sin(
            2 * np.pi * 50.0 * t + rng.uniform(0, 2 * np.pi))
        return component + noise + mains, component, noise, mains

    cross, cross_sig, cross_noise, cross_mains = ear_channel(
        ecg, spec.snr_cross_db)
    single, single_sig, single_noise, single_mains = ear_channel(
        ecg_single_src, spec.snr_single_db)

    rec = Recording(
        fs=spec.fs,
        channels={"arm_l": arm_l, "arm_r": arm_r,
                  "ear_cross": cross, "ear_single": single},
        roles={"arm_l": "arm_left", "arm_r": "arm_right",
               "ear_cross": "ear_cross", "ear_single": "ear_single"})
    if return_parts:
        parts = {"ecg": ecg,
                 "cross": (cross_sig, cross_noise, cross_mains),
                 "single": (single_sig, single_noise, single_mains)}
        return rec, beat_idx, parts
    return rec, beat_idx


def make_corpus(out_dir, n_subjects: int, sessions_per_subject: int,
                template: SynthSpec) -> list[tuple[Path, Path]]:
    """Write subject{i}_session{j} recording/truth file pairs.

    Each subject gets a perturbed ECG morphology and their own resting
    heart-rate range; sessions re-randomize noise, jitter and baseline HR.
    """
    if n_subjects < 2:
        raise ValueError("corpus needs at least 2 subjects for held-out splits")
    if sessions_per_subject < 1:
        raise ValueError("sessions_per_subject must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(n_subjects):
        subject_rng = np.random.default_rng(template.seed + 7919 * (i + 1))
        morph = template.morphology.perturbed(subject_rng)
        hr_lo = subject_rng.uniform(52.0, 75.0)
        for j in range(sessions_per_subject):
            base = hr_lo + subject_rng.uniform(0.0, 12.0)
            drift = subject_rng.uniform(-6.0, 6.0)
            spec = replace(
                template,
                seed=template.seed + 100_003 * (i + 1) + j,
                morphology=morph,
                hr_profile=((0.0, base), (template.duration, base + drift)))
            rec, truth = generate(spec)
            rec.subject = f"subject{i}"
            rec.session = f"session{j}"
            rec_path = out_dir / f"subject{i}_session{j}.rec"
            peaks_path = out_dir / f"subject{i}_session{j}.peaks"
            io.write_recording(rec_path, rec)
            io.write_peaks(peaks_path, truth)
            written.append((rec_path, peaks_path))
    return written
