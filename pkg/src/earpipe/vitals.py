"""R-peak train correction and HR/HRV over the rolling 10 s window.

The correction walks RR intervals against their running median: intervals
that round to 0 medians come from spurious peaks and are merged away;
intervals that round to k > 1 medians come from k-1 missed peaks and are
split into k equal parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VITALS_FS = 250.0
MIN_PEAKS_FOR_VITALS = 4


@dataclass
class CorrectionResult:
    corrected: np.ndarray   # RR intervals, ms
    n_extra: int            # spurious peaks removed
    n_missed: int           # peaks re-inserted
    rr_median: float        # ms, after the merge loop


@dataclass
class VitalsSample:
    t: float        # stream time, s
    hr: float       # bpm
    hrv: float      # ms (RMSSD)
    valid: bool

    def __post_init__(self):
        if not self.valid:
            self.hr = 0.0
            self.hrv = 0.0


def _round_half_up(v: np.ndarray) -> np.ndarray:
    # round-half-away-from-zero for the non-negative interval ratios
    return np.floor(v + 0.5)


def rr_intervals(peaks, fs: float = VITALS_FS) -> np.ndarray:
    """Successive peak differences in milliseconds; empty below 2 peaks."""
    peaks = np.asarray(peaks, dtype=float)
    if peaks.size < 2:
        return np.array([], dtype=float)
    return np.diff(peaks) * 1000.0 / fs


def correct_extra(rr) -> np.ndarray:
    """Remove one spurious peak: the smallest interval whose ratio to the
    median rounds to 0 is merged into its smaller neighbor.

    A spurious peak splits one true interval in two, so summing the two
    sub-intervals undoes it.  Input without any zero-ratio interval is
    returned unchanged.
    """
    rr = np.asarray(rr, dtype=float)
    if rr.size < 2:
        return rr.copy()
    med = np.median(rr)
    ratios = _round_half_up(rr / med)
    zero_idx = np.flatnonzero(ratios == 0)
    if zero_idx.size == 0:
        return rr.copy()
    i = int(zero_idx[np.argmin(rr[zero_idx])])
    neighbors = [j for j in (i - 1, i + 1) if 0 <= j < rr.size]
    j = min(neighbors, key=lambda j: (rr[j], j))
    lo, hi = min(i, j), max(i, j)
    return np.concatenate([rr[:lo], [rr[lo] + rr[hi]], rr[hi + 1:]])


def correct_rr(rr) -> CorrectionResult:
    """Full RR correction pass.

    First merge zero-ratio intervals one at a time, recomputing the median
    after each merge; then split every interval whose ratio is k > 1 into
    k equal parts, counting k-1 inserted peaks.  Series with fewer than 3
    intervals are returned uncorrected.
    """
    rr = np.asarray(rr, dtype=float)
    if rr.size < 3:
        med = float(np.median(rr)) if rr.size else 0.0
        return CorrectionResult(rr.copy(), 0, 0, med)

    work = rr.copy()
    n_extra = 0
    med = float(np.median(work))
    ratios = _round_half_up(work / med)
    while np.any(ratios == 0):
        work = correct_extra(work)
        med = float(np.median(work))
        ratios = _round_half_up(work / med)
        n_extra += 1

    out: list[float] = []
    n_missed = 0
    for v, k in zip(work, ratios.astype(int)):
        if k > 1:
            out.extend([v / k] * k)
            n_missed += k - 1
        else:
            out.append(v)
    return CorrectionResult(np.asarray(out), n_extra, n_missed, med)


def hr_from_count_and_span(n_peaks: int, span_s: float) -> float:
    """Peak count scaled to one minute over the first-to-last peak span."""
    if n_peaks < MIN_PEAKS_FOR_VITALS or span_s <= 0:
        return 0.0
    return n_peaks * 60.0 / span_s


def compute_hr(peaks, fs: float = VITALS_FS) -> float:
    """HR in bpm from the peaks of one 10 s window; 0 below 4 peaks."""
    peaks = np.asarray(peaks, dtype=float)
    if peaks.size < MIN_PEAKS_FOR_VITALS:
        return 0.0
    span_s = (peaks[-1] - peaks[0]) / fs
    return hr_from_count_and_span(int(peaks.size), span_s)


def compute_hrv(rr) -> float:
    """RMSSD in ms: sqrt(sum of squared successive RR differences / (n-1)).

    n is the interval count; 0 is returned below 2 intervals.
    """
    rr = np.asarray(rr, dtype=float)
    n = rr.size
    if n < 2:
        return 0.0
    d = np.diff(rr)
    return float(np.sqrt(np.sum(d * d) / (n - 1)))


def vitals_tick(recent_peaks, t: float, fs: float = VITALS_FS) -> VitalsSample:
    """One HR/HRV sample from the peaks of the trailing 10 s window.

    Fewer than 4 detected peaks yields an invalid (0, 0) sample; otherwise
    the corrected RR series drives both numbers.
    """
    peaks = np.asarray(recent_peaks, dtype=float)
    if peaks.size < MIN_PEAKS_FOR_VITALS:
        return VitalsSample(t=t, hr=0.0, hrv=0.0, valid=False)
    res = correct_rr(rr_intervals(peaks, fs))
    n_corrected = res.corrected.size + 1
    span_s = float(np.sum(res.corrected)) / 1000.0
    hr = hr_from_count_and_span(n_corrected, span_s)
    hrv = compute_hrv(res.corrected)
    return VitalsSample(t=t, hr=hr, hrv=hrv, valid=True)
