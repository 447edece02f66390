"""End-to-end orchestration shared by the CLI and external harnesses:
conditioning, rolling inference, peak correction and vitals emission."""

from __future__ import annotations

import numpy as np

from . import dsp, nn
from .stream import RollingState, StreamConfig
from .vitals import VitalsSample, vitals_tick


def window_zscore(window: np.ndarray) -> np.ndarray:
    std = window.std()
    if std < 1e-12:
        return np.zeros_like(window)
    return (window - window.mean()) / std


def make_infer_fn(model):
    """Per-window inference callback: z-score then the classifier path."""
    if isinstance(model, nn.QuantizedModel):
        def infer(window):
            w = window_zscore(window).astype(np.float32)
            return nn.forward_quantized(model, w[None, :])
    else:
        def infer(window):
            w = window_zscore(window).astype(np.float32)
            return nn.infer_probabilities(model, w[None, :])
    return infer


def _drive(x: np.ndarray, infer, cfg: StreamConfig, record_probs: bool,
           peaks_for_vitals=None):
    """Feed a conditioned 250 Hz trace through the rolling engine in
    shift-sized chunks, emitting one vitals sample per step once 10 s of
    stream have been seen.

    When peaks_for_vitals is given, vitals are computed from that train
    instead of the emitted peaks (reference series on the same grid).
    """
    state = RollingState(cfg, record_probs=record_probs)
    fs = dsp.TARGET_FS
    vitals: list[VitalsSample] = []
    ref = None if peaks_for_vitals is None \
        else np.asarray(peaks_for_vitals, dtype=int)
    pos = 0
    while pos < x.size:
        before = state.steps
        state.push(x[pos:pos + cfg.shift], infer)
        pos += cfg.shift
        if state.steps > before and state.cursor >= cfg.vitals_span:
            lo = state.commit_frontier - cfg.vitals_span
            hi = state.commit_frontier
            if ref is None:
                recent = state.peaks_in(lo, hi)
            else:
                recent = ref[(ref > lo) & (ref <= hi)]
            vitals.append(vitals_tick(recent, t=state.cursor / fs, fs=fs))
    state.finish()
    return state, vitals


def streaming_infer(model, rec: dsp.Recording, channel_role: str,
                    threshold: float, record_probs: bool = False):
    """Run the full rolling pipeline over one recording channel.

    Returns (peaks, vitals, state): emitted global peak indices at 250 Hz,
    one VitalsSample per rolling step from 10 s of stream onward, and the
    final RollingState (which holds committed probabilities when
    record_probs is set).
    """
    x = dsp.condition_channel(rec.by_role(channel_role), rec.fs)
    cfg = StreamConfig(threshold=threshold)
    state, vitals = _drive(x, make_infer_fn(model), cfg, record_probs)
    return np.asarray(state.emitted, dtype=int), vitals, state


def vitals_from_peaks(peaks, n_samples: int, cfg: StreamConfig | None = None
                      ) -> list[VitalsSample]:
    """Reference vitals series from a given (e.g. ground-truth) peak train,
    on exactly the step grid streaming_infer uses."""
    cfg = cfg or StreamConfig()
    zeros = np.zeros(int(n_samples))

    def silent(window):
        return np.zeros(cfg.window)

    _, vitals = _drive(zeros, silent, cfg, record_probs=False,
                       peaks_for_vitals=peaks)
    return vitals


def reconstruct_windows(model: nn.ModelGraph, rec: dsp.Recording,
                        channel_role: str, shift: int | None = None):
    """Decoder-path reconstruction of every complete window.

    Yields (window_start_index, reconstruction) at the rolling shift."""
    x = dsp.condition_channel(rec.by_role(channel_role), rec.fs)
    cfg = StreamConfig()
    step = shift or cfg.shift
    for start in range(0, x.size - cfg.window + 1, step):
        window = window_zscore(x[start:start + cfg.window])
        yield start, nn.reconstruct(model, window[None, :])
