"""Deterministic signal conditioning: IIR filtering, resampling, normalization,
derivative peak picking and binary label construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

TARGET_FS = 250.0
MAINS_HZ = 50.0
NOTCH_BANDWIDTH_HZ = 2.0   # -3 dB width; narrow enough to spare 48/52 Hz content
BAND_LO_HZ = 0.5
BAND_HI_HZ = 30.0
PEAK_MIN_HEIGHT = 0.7      # on the derivative of the z-scored trace
PEAK_MIN_DISTANCE = 80     # samples @ 250 Hz
LABEL_PULSE_WIDTH = 3

ROLES = ("arm_left", "arm_right", "ear_single", "ear_cross")


@dataclass
class Recording:
    """Multichannel biopotential recording.

    channels maps name -> 1-D sample array (all equal length); roles maps
    channel name -> one of ROLES, each role used at most once.
    """

    fs: float
    channels: dict[str, np.ndarray]
    roles: dict[str, str] = field(default_factory=dict)
    subject: str = ""
    session: str = ""

    def __post_init__(self):
        if self.fs <= 0:
            raise ValueError(f"sample rate must be positive, got {self.fs}")
        lengths = {name: len(x) for name, x in self.channels.items()}
        if len(set(lengths.values())) > 1:
            raise ValueError(f"channels differ in length: {lengths}")
        seen: dict[str, str] = {}
        for name, role in self.roles.items():
            if name not in self.channels:
                raise ValueError(f"role maps unknown channel {name!r}")
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r} for channel {name!r}")
            if role in seen:
                raise ValueError(
                    f"role {role!r} on both {seen[role]!r} and {name!r}")
            seen[role] = name

    @property
    def n_samples(self) -> int:
        return 0 if not self.channels else len(next(iter(self.channels.values())))

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    def has_role(self, role: str) -> bool:
        return role in self.roles.values()

    def by_role(self, role: str) -> np.ndarray:
        for name, r in self.roles.items():
            if r == role:
                return self.channels[name]
        raise KeyError(f"no channel with role {role!r}")


@dataclass(frozen=True)
class BiquadCascade:
    """IIR filter as ordered second-order sections.

    sos rows are (b0, b1, b2, 1, a1, a2), scipy layout.  Immutable after
    design; every section must be stable (poles strictly inside the unit
    circle).
    """

    sos: np.ndarray
    kind: str
    corners: tuple[float, ...]
    order: int
    fs: float

    def __post_init__(self):
        sos = np.atleast_2d(np.asarray(self.sos, dtype=float))
        if sos.shape[1] != 6:
            raise ValueError(f"sos rows must have 6 coefficients, got {sos.shape}")
        object.__setattr__(self, "sos", sos)
        for row in sos:
            poles = np.roots([1.0, row[4], row[5]])
            if np.any(np.abs(poles) >= 1.0):
                raise ValueError(f"unstable section {row}: poles {poles}")

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    def response_at(self, f_hz: float) -> complex:
        """Frequency response H(e^{j 2 pi f / fs}) evaluated per section."""
        z = np.exp(-2j * np.pi * f_hz / self.fs)
        h = 1.0 + 0j
        for b0, b1, b2, _, a1, a2 in self.sos:
            h *= (b0 + b1 * z + b2 * z * z) / (1.0 + a1 * z + a2 * z * z)
        return h

    def gain_db(self, f_hz: float) -> float:
        return 20.0 * np.log10(np.abs(self.response_at(f_hz)) + 1e-300)


@dataclass
class LabelVector:
    """Binary R-peak indicator at 250 Hz; 3-sample pulses centered on peaks."""

    values: np.ndarray
    width: int = LABEL_PULSE_WIDTH


def design_notch(f0: float, fs: float) -> BiquadCascade:
    """6th-order Butterworth band-stop centered on f0 (3 sections).

    The stop band is f0 +/- 1 Hz (2 Hz wide at -3 dB).
    """
    half_bw = NOTCH_BANDWIDTH_HZ / 2.0
    if not (0.0 < f0 < fs / 2.0):
        raise ValueError(f"notch center {f0} Hz outside (0, {fs / 2}) for fs={fs}")
    if f0 - half_bw <= 0.0 or f0 + half_bw >= fs / 2.0:
        raise ValueError(f"notch band around {f0} Hz does not fit below Nyquist")
    sos = sps.butter(3, [f0 - half_bw, f0 + half_bw], btype="bandstop",
                     output="sos", fs=fs)
    return BiquadCascade(sos=sos, kind="notch", corners=(f0 - half_bw, f0 + half_bw),
                         order=6, fs=fs)


def design_bandpass(f_lo: float, f_hi: float, fs: float) -> BiquadCascade:
    """2nd-order Butterworth band-pass with -3 dB points at f_lo / f_hi."""
    if not (0.0 < f_lo < f_hi < fs / 2.0):
        raise ValueError(
            f"invalid band ({f_lo}, {f_hi}) Hz for fs={fs}: need 0 < lo < hi < fs/2")
    sos = sps.butter(1, [f_lo, f_hi], btype="bandpass", output="sos", fs=fs)
    return BiquadCascade(sos=sos, kind="bandpass", corners=(f_lo, f_hi),
                         order=2, fs=fs)


def filter_apply(cascade: BiquadCascade, x) -> np.ndarray:
    """Causal direct-form filtering with zero initial state."""
    x = np.asarray(x, dtype=float)
    if x.size and not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite samples")
    if x.size == 0:
        return x.copy()
    return sps.sosfilt(cascade.sos, x)


def resample_to(x, fs_in: float, fs_out: float) -> np.ndarray:
    """Anti-alias low-pass then decimate; fs_in must be an integer multiple
    of fs_out."""
    x = np.asarray(x, dtype=float)
    if fs_in <= 0 or fs_out <= 0:
        raise ValueError("sample rates must be positive")
    if fs_in < fs_out:
        raise ValueError(f"cannot upsample {fs_in} -> {fs_out} Hz")
    ratio = fs_in / fs_out
    q = int(round(ratio))
    if abs(ratio - q) > 1e-9:
        raise ValueError(
            f"unsupported rate pair {fs_in}/{fs_out} Hz: ratio {ratio} is not an integer")
    if q == 1:
        return x.copy()
    # cut at 0.45*fs_out to keep the new Nyquist clean
    aa = sps.butter(8, 0.45 * fs_out, btype="lowpass", output="sos", fs=fs_in)
    return sps.sosfilt(aa, x)[::q]


def zscore(x) -> np.ndarray:
    """Zero-mean unit-variance normalization (population std).

    Flat segments (std < 1e-12, e.g. detached electrodes) map to all zeros.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("zscore needs at least 2 samples")
    std = x.std()
    if std < 1e-12:
        return np.zeros_like(x)
    return (x - x.mean()) / std


def derivative(x) -> np.ndarray:
    """First difference; output is one sample shorter than the input."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("derivative needs at least 2 samples")
    return np.diff(x)


def find_peaks(x, min_height: float, min_distance: int) -> np.ndarray:
    """Strict local maxima >= min_height, thinned to pairwise distance
    >= min_distance by keeping taller peaks first (ties keep the earlier
    index).  Returns strictly increasing indices.
    """
    x = np.asarray(x, dtype=float)
    if min_distance < 1:
        raise ValueError(f"min_distance must be >= 1, got {min_distance}")
    if x.size < 3:
        return np.array([], dtype=int)
    mid = x[1:-1]
    cand = np.where((mid > x[:-2]) & (mid > x[2:]) & (mid >= min_height))[0] + 1
    if cand.size == 0:
        return np.array([], dtype=int)
    order = cand[np.lexsort((cand, -x[cand]))]
    kept: list[int] = []
    for i in order:
        if all(abs(int(i) - j) >= min_distance for j in kept):
            kept.append(int(i))
    return np.array(sorted(kept), dtype=int)


def make_labels(peaks, length: int) -> LabelVector:
    """Ones at each peak index and its two neighbors (clipped at the ends)."""
    peaks = np.asarray(peaks, dtype=int)
    if peaks.size and (peaks.min() < 0 or peaks.max() >= length):
        raise ValueError(f"peak index out of range [0, {length})")
    values = np.zeros(length, dtype=np.uint8)
    for p in peaks:
        values[max(0, p - 1):min(length, p + 2)] = 1
    return LabelVector(values=values)


def ground_truth_pipeline(rec: Recording) -> tuple[np.ndarray, np.ndarray]:
    """Arm-ECG reference chain.

    notch -> bandpass on each arm, subtract (L - R), z-score, resample to
    250 Hz, first difference, then peak picking at height 0.7 / distance 80.
    Returns (normalized ECG at 250 Hz, peak indices into its derivative).
    """
    if not (rec.has_role("arm_left") and rec.has_role("arm_right")):
        raise ValueError("recording lacks arm_left/arm_right channels")
    notch = design_notch(MAINS_HZ, rec.fs)
    band = design_bandpass(BAND_LO_HZ, BAND_HI_HZ, rec.fs)

    def condition(x):
        return filter_apply(band, filter_apply(notch, x))

    lead = condition(rec.by_role("arm_left")) - condition(rec.by_role("arm_right"))
    ecg = zscore(lead)
    ecg_250 = resample_to(ecg, rec.fs, TARGET_FS)
    slope = derivative(ecg_250)
    peaks = find_peaks(slope, PEAK_MIN_HEIGHT, PEAK_MIN_DISTANCE)
    return ecg_250, peaks


def condition_channel(x, fs: float) -> np.ndarray:
    """Notch + bandpass at the native rate, then resample to 250 Hz.

    This is the inference-side conditioning for ear channels; windows are
    z-scored separately just before the model sees them.
    """
    notch = design_notch(MAINS_HZ, fs)
    band = design_bandpass(BAND_LO_HZ, BAND_HI_HZ, fs)
    return resample_to(filter_apply(band, filter_apply(notch, x)), fs, TARGET_FS)
