"""Detection scoring, threshold selection, vitals error statistics, and
R-peak-aligned waveform averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stream import threshold_peaks

MATCH_TOLERANCE = 12  # samples @ 250 Hz (48 ms)
DEFAULT_GRID = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))


@dataclass
class MatchReport:
    tp: int
    fp: int
    fn: int
    tolerance: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "MatchReport") -> "MatchReport":
        if self.tolerance != other.tolerance:
            raise ValueError("cannot pool reports with different tolerances")
        return MatchReport(self.tp + other.tp, self.fp + other.fp,
                           self.fn + other.fn, self.tolerance)


def match_peaks(pred, truth, tol: int = MATCH_TOLERANCE) -> MatchReport:
    """Greedy one-to-one matching in time order: a prediction within +/-tol
    of the earliest unmatched truth peak is a true positive."""
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    i = j = tp = 0
    while i < pred.size and j < truth.size:
        d = int(pred[i]) - int(truth[j])
        if abs(d) <= tol:
            tp += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return MatchReport(tp=tp, fp=int(pred.size) - tp, fn=int(truth.size) - tp,
                       tolerance=tol)


def sweep_threshold(prob_streams: dict, truths: dict, grid=DEFAULT_GRID,
                    tol: int = MATCH_TOLERANCE,
                    min_distance: int = 80):
    """Pick the threshold maximizing pooled F1 across subjects.

    prob_streams and truths are keyed by the same subject ids; counts are
    pooled (summed) before computing F1.  Ties go to the lower threshold.
    Returns (best_threshold, {threshold: pooled MatchReport}).
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty threshold grid")
    if not prob_streams:
        raise ValueError("no probability streams")
    missing = set(prob_streams) - set(truths)
    if missing:
        raise ValueError(f"missing truth for subjects {sorted(missing)}")
    reports: dict[float, MatchReport] = {}
    for thr in grid:
        pooled = MatchReport(0, 0, 0, tol)
        for key in sorted(prob_streams):
            pred = threshold_peaks(prob_streams[key], thr,
                                   min_distance=min_distance)
            pooled = pooled + match_peaks(pred, truths[key], tol)
        reports[thr] = pooled
    best = max(grid, key=lambda t: (reports[t].f1, -t))
    return best, reports


def vitals_error(pred, truth) -> tuple[float, float]:
    """Mean absolute HR and HRV error over time-aligned valid pairs."""
    truth_by_t = {round(s.t, 6): s for s in truth}
    hr_err, hrv_err = [], []
    for p in pred:
        q = truth_by_t.get(round(p.t, 6))
        if q is None or not (p.valid and q.valid):
            continue
        hr_err.append(abs(p.hr - q.hr))
        hrv_err.append(abs(p.hrv - q.hrv))
    if not hr_err:
        raise ValueError("no overlapping valid samples to compare")
    return float(np.mean(hr_err)), float(np.mean(hrv_err))


def aligned_average(signal, peaks, pre: int, post: int) -> np.ndarray:
    """Mean of all complete [peak-pre, peak+post] segments."""
    signal = np.asarray(signal, dtype=float)
    segments = [signal[p - pre:p + post + 1]
                for p in np.asarray(peaks, dtype=int)
                if p - pre >= 0 and p + post < signal.size]
    if not segments:
        raise ValueError("no peak has full pre/post support")
    return np.mean(segments, axis=0)


def report_record(report: MatchReport) -> str:
    """One-line key=value record for files and CLI output."""
    return (f"tp={report.tp} fp={report.fp} fn={report.fn} "
            f"precision={report.precision:.4f} recall={report.recall:.4f} "
            f"f1={report.f1:.4f} tol={report.tolerance}")
