"""Real-time rolling-window engine.

Every 0.4 s shift forms the newest 2 s window, runs the model, discards the
unreliable final 0.4 s, merges the remaining overlap with the previous
windows by element-wise maximum, and commits the oldest 0.4 s as final.
Committed probabilities are thresholded into a global peak stream whose
emissions exactly match an offline pass over the fully merged sequence:
a candidate is only resolved once nothing taller can still appear or is
still undecided within the minimum peak distance.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

WINDOW = 500        # 2 s @ 250 Hz
SHIFT = 100         # 0.4 s
TRIM = 100          # 0.4 s discarded at the window end
VITALS_SPAN = 2500  # 10 s
MIN_PEAK_DISTANCE = 80


@dataclass
class StreamConfig:
    window: int = WINDOW
    shift: int = SHIFT
    trim: int = TRIM
    threshold: float = 0.5
    vitals_span: int = VITALS_SPAN
    min_peak_distance: int = MIN_PEAK_DISTANCE

    def __post_init__(self):
        if not (0 < self.trim <= self.shift <= self.window):
            raise ValueError(
                f"need 0 < trim <= shift <= window, got trim={self.trim} "
                f"shift={self.shift} window={self.window}")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must be in (0,1), got {self.threshold}")

    @property
    def overlap(self) -> int:
        return self.window - self.trim - self.shift


def merge_overlap(prev_tail, new_head) -> np.ndarray:
    """Element-wise maximum of two equal-length probability runs."""
    prev_tail = np.asarray(prev_tail, dtype=float)
    new_head = np.asarray(new_head, dtype=float)
    if prev_tail.shape != new_head.shape:
        raise ValueError(
            f"overlap length mismatch: {prev_tail.shape} vs {new_head.shape}")
    return np.maximum(prev_tail, new_head)


def _local_maxima(x: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of strict-rise / non-strict-fall maxima above threshold
    (plateaus yield their first sample)."""
    if x.size < 3:
        return np.array([], dtype=int)
    mid = x[1:-1]
    return np.where((mid > x[:-2]) & (mid >= x[2:]) & (mid > threshold))[0] + 1


def threshold_peaks(committed, threshold: float, base_index: int = 0,
                    emitted=(), min_distance: int = MIN_PEAK_DISTANCE) -> list[int]:
    """Batch peak picking over a committed probability run.

    Local maxima above threshold are accepted tallest-first (ties to the
    earlier index) subject to the minimum distance, both among themselves
    and against already-emitted global peaks.
    """
    x = np.asarray(committed, dtype=float)
    cand = _local_maxima(x, threshold)
    accepted: list[int] = []
    emitted = np.asarray(list(emitted), dtype=int)
    for i in cand[np.lexsort((cand, -x[cand]))]:
        g = base_index + int(i)
        if emitted.size and np.min(np.abs(emitted - g)) < min_distance:
            continue
        if all(abs(g - a) >= min_distance for a in accepted):
            accepted.append(g)
    return sorted(accepted)


class RollingState:
    """Single-owner streaming state; the infer callback must be reentrant.

    push() buffers samples, runs one inference per complete shift, and
    returns newly final peak indices.  finish() flushes decisions that were
    still waiting for right context at the end of the stream.
    """

    def __init__(self, config: StreamConfig, record_probs: bool = False):
        self.config = config
        self._pending = np.zeros(0, dtype=np.float64)  # not yet windowed
        self._pending_base = 0      # global index of _pending[0]
        self._tail: np.ndarray | None = None
        self.cursor = 0             # samples received
        self.commit_frontier = 0    # samples < frontier are final
        self.steps = 0
        self.emitted: list[int] = []  # kept sorted
        self._candidates: dict[int, float] = {}
        self._carry = np.zeros(0, dtype=np.float64)  # last 2 committed samples
        self._committed_log = [] if record_probs else None

    # ------------------------------------------------------------- intake

    def push(self, chunk, infer) -> list[int]:
        chunk = np.asarray(chunk, dtype=np.float64)
        cfg = self.config
        self._pending = np.concatenate([self._pending, chunk])
        self.cursor += chunk.size
        new_peaks: list[int] = []
        while self._pending.size >= cfg.window:
            window = self._pending[:cfg.window]
            start = self._pending_base
            probs = np.asarray(infer(window), dtype=np.float64)
            if probs.shape != (cfg.window,):
                raise ValueError(
                    f"infer returned shape {probs.shape}, expected "
                    f"({cfg.window},)")
            kept = probs[:cfg.window - cfg.trim]
            head = kept[:cfg.overlap]
            merged = head.copy() if self._tail is None \
                else merge_overlap(self._tail, head)
            commit, keep = merged[:cfg.shift], merged[cfg.shift:]
            self._tail = np.concatenate([keep, kept[cfg.overlap:]])
            new_peaks.extend(self._commit(commit, start))
            self._pending = self._pending[cfg.shift:]
            self._pending_base += cfg.shift
            self.steps += 1
        return new_peaks

    def finish(self) -> list[int]:
        """Resolve every pending candidate; call once at end of stream."""
        return self._resolve(frontier=None)

    @property
    def committed_probabilities(self) -> np.ndarray:
        if self._committed_log is None:
            raise ValueError("state was created with record_probs=False")
        return (np.concatenate(self._committed_log)
                if self._committed_log else np.zeros(0))

    def peaks_in(self, lo: int, hi: int) -> np.ndarray:
        """Emitted peaks with lo < index <= hi."""
        i = bisect.bisect_right(self.emitted, lo)
        j = bisect.bisect_right(self.emitted, hi)
        return np.asarray(self.emitted[i:j], dtype=int)

    # ------------------------------------------------------- peak picking

    def _commit(self, probs: np.ndarray, base: int) -> list[int]:
        if self._committed_log is not None:
            self._committed_log.append(probs.copy())
        carry_n = self._carry.size
        run = np.concatenate([self._carry, probs])
        run_base = base - carry_n
        for i in _local_maxima(run, self.config.threshold):
            g = run_base + int(i)
            if g >= base - 1:  # older positions were scanned last commit
                self._candidates[g] = float(run[i])
        self._carry = run[-2:].copy()
        self.commit_frontier = base + probs.size
        return self._resolve(self.commit_frontier)

    def _resolve(self, frontier: int | None) -> list[int]:
        """Fixpoint pass: settle candidates whose outcome can no longer be
        changed by unseen or undecided taller rivals."""
        dist = self.config.min_peak_distance
        new_peaks: list[int] = []
        progress = True
        while progress and self._candidates:
            progress = False
            for g in sorted(self._candidates,
                            key=lambda c: (-self._candidates[c], c)):
                h = self._candidates[g]
                if frontier is not None and g > frontier - dist - 1:
                    continue
                blocked = any(
                    o != g and abs(o - g) < dist
                    and (ho > h or (ho == h and o < g))
                    for o, ho in self._candidates.items())
                if blocked:
                    continue
                del self._candidates[g]
                i = bisect.bisect_left(self.emitted, g)
                near = [e for e in self.emitted[max(0, i - 1):i + 1]]
                if all(abs(g - e) >= dist for e in near):
                    bisect.insort(self.emitted, g)
                    new_peaks.append(g)
                progress = True
                break
        return sorted(new_peaks)
