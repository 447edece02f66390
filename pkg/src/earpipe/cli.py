"""Command-line front end.

Subcommands cover the whole pipeline: corpus synthesis, ground-truth
extraction, streaming inference with vitals output, decoder reconstruction,
post-training quantization, detection scoring, threshold sweeps, and a
latency/MACs benchmark.  Outputs are plot-ready text files; every failure
exits nonzero with a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import dsp, io, metrics, nn, pipeline, synth


def _parse_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ValueError(f"grid must be lo:hi:step, got {text!r}")
    if step <= 0 or hi < lo:
        raise ValueError(f"bad grid {text!r}")
    return [round(v, 6) for v in np.arange(lo, hi + step / 2, step)]


def _parse_hr_profile(text: str):
    knots = []
    for part in text.split(","):
        t, _, bpm = part.partition(":")
        knots.append((float(t), float(bpm)))
    return tuple(knots)


def _synth_spec_from_kv(kv: dict) -> tuple[synth.SynthSpec, int, int]:
    spec = synth.SynthSpec(
        duration=float(kv.get("duration_s", 300.0)),
        fs=float(kv.get("fs_hz", 500.0)),
        hr_profile=_parse_hr_profile(kv["hr_profile"])
        if "hr_profile" in kv else ((0.0, 60.0),),
        hrv_jitter_ms=float(kv.get("hrv_jitter_ms", 20.0)),
        snr_cross_db=float(kv.get("snr_cross_db", -6.0)),
        snr_single_db=float(kv.get("snr_single_db", -10.5)),
        mains_amp=float(kv.get("mains_amp", 0.3)),
        seed=int(kv.get("seed", 0)))
    return (spec, int(kv.get("n_subjects", 4)),
            int(kv.get("sessions_per_subject", 4)))


def cmd_synth(args) -> int:
    spec, n_subjects, sessions = _synth_spec_from_kv(io.read_kv(args.spec))
    written = synth.make_corpus(args.out, n_subjects, sessions, spec)
    print(f"wrote {len(written)} recordings to {args.out}")
    return 0


def cmd_groundtruth(args) -> int:
    rec = io.read_recording(args.rec)
    _, peaks = dsp.ground_truth_pipeline(rec)
    io.write_peaks(args.out, peaks)
    print(f"peaks={len(peaks)} out={args.out}")
    return 0


def cmd_infer(args) -> int:
    model = io.load_model(args.model)
    if args.quantized and not isinstance(model, nn.QuantizedModel):
        raise ValueError("--quantized given but the model file is float")
    rec = io.read_recording(args.rec)
    peaks, vitals, state = pipeline.streaming_infer(
        model, rec, args.channel, args.threshold,
        record_probs=args.out_probs is not None)
    io.write_peaks(args.out_peaks, peaks)
    io.write_vitals(args.out_vitals, vitals)
    if args.out_probs:
        io.write_probabilities(args.out_probs, state.committed_probabilities)
    n_valid = sum(1 for v in vitals if v.valid)
    print(f"peaks={len(peaks)} vitals_rows={len(vitals)} valid={n_valid}")
    return 0


def cmd_reconstruct(args) -> int:
    model = io.load_model(args.model)
    if not isinstance(model, nn.ModelGraph):
        raise ValueError("reconstruction needs a float model file")
    rec = io.read_recording(args.rec)
    n = 0
    with open(args.out, "w") as f:
        for start, recon in pipeline.reconstruct_windows(model, rec,
                                                         args.channel):
            f.write(",".join([str(start)] + [f"{v:.9g}" for v in recon]) + "\n")
            n += 1
    print(f"windows={n} out={args.out}")
    return 0


def cmd_quantize(args) -> int:
    model = io.load_model(args.model)
    if not isinstance(model, nn.ModelGraph):
        raise ValueError("quantization input must be a float model")
    calib = io.load_calibration_dir(args.calib)
    qm = nn.calibrate(model, calib)
    io.save_quantized(args.out, qm)
    size = Path(args.out).stat().st_size
    print(f"calib_windows={len(calib)} bytes={size} out={args.out}")
    return 0


def cmd_eval(args) -> int:
    report = metrics.match_peaks(io.read_peaks(args.pred),
                                 io.read_peaks(args.truth), tol=args.tol)
    print(metrics.report_record(report))
    return 0


def cmd_sweep(args) -> int:
    probs_dir, truth_dir = Path(args.probs), Path(args.truth)
    streams, truths = {}, {}
    for p in sorted(probs_dir.glob("*.probs")):
        streams[p.stem] = io.read_probabilities(p)
        truth_file = truth_dir / f"{p.stem}.peaks"
        if not truth_file.exists():
            raise FileNotFoundError(f"no truth peaks for {p.stem}")
        truths[p.stem] = io.read_peaks(truth_file)
    if not streams:
        raise FileNotFoundError(f"no .probs files under {probs_dir}")
    grid = _parse_grid(args.grid)
    best, reports = metrics.sweep_threshold(streams, truths, grid=grid,
                                            tol=args.tol)
    for thr in grid:
        print(f"threshold={thr:.4g} {metrics.report_record(reports[thr])}")
    print(f"best_threshold={best:.4g} best_f1={reports[best].f1:.4f}")
    return 0


def cmd_bench(args) -> int:
    model = io.load_model(args.model)
    quantized = isinstance(model, nn.QuantizedModel)
    if quantized:
        macs = model.mac_count

        def run(window):
            return nn.forward_quantized(model, window)
    else:
        _, macs = nn.count_params_and_macs(model)

        def run(window):
            return nn.infer_probabilities(model, window)

    rng = np.random.default_rng(0)
    windows = rng.standard_normal((32, 1, 500)).astype(np.float32)
    for i in range(10):
        run(windows[i % 32])
    times = np.empty(args.n)
    for i in range(args.n):
        t0 = time.perf_counter()
        run(windows[i % 32])
        times[i] = time.perf_counter() - t0
    mean_ms = 1e3 * float(times.mean())
    print(f"model={args.model}")
    print(f"quantized={int(quantized)}")
    if not quantized:
        print(f"params={model.param_count}")
    print(f"macs_per_inference={macs}")
    print(f"n={args.n}")
    print(f"mean_ms={mean_ms:.4f}")
    print(f"p95_ms={1e3 * float(np.percentile(times, 95)):.4f}")
    print(f"macs_per_second={macs / (mean_ms / 1e3):.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="earpipe", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--spec", required=True, help="key=value spec file")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("groundtruth", help="arm-ECG reference peaks")
    s.add_argument("--rec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_groundtruth)

    s = sub.add_parser("infer", help="streaming R-peak detection + vitals")
    s.add_argument("--model", required=True)
    s.add_argument("--rec", required=True)
    s.add_argument("--channel", choices=("ear_single", "ear_cross"),
                   required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--quantized", action="store_true",
                   help="require an int8 model file")
    s.add_argument("--out-peaks", required=True)
    s.add_argument("--out-vitals", required=True)
    s.add_argument("--out-probs", default=None,
                   help="also dump committed merged probabilities")
    s.set_defaults(fn=cmd_infer)

    s = sub.add_parser("reconstruct", help="decoder-path ECG reconstruction")
    s.add_argument("--model", required=True)
    s.add_argument("--rec", required=True)
    s.add_argument("--channel", choices=("ear_single", "ear_cross"),
                   required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_reconstruct)

    s = sub.add_parser("quantize", help="post-training int8 quantization")
    s.add_argument("--model", required=True)
    s.add_argument("--calib", required=True, help="calibration window dir")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_quantize)

    s = sub.add_parser("eval", help="score predicted peaks against truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--tol", type=int, default=metrics.MATCH_TOLERANCE)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("sweep", help="pooled F1 threshold selection")
    s.add_argument("--probs", required=True, help="dir of *.probs files")
    s.add_argument("--truth", required=True, help="dir of *.peaks files")
    s.add_argument("--grid", default="0.05:0.95:0.05")
    s.add_argument("--tol", type=int, default=metrics.MATCH_TOLERANCE)
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("bench", help="per-inference latency and MAC/s")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as e:
        print(f"earpipe {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
