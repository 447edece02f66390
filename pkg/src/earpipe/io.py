"""File formats: recordings, peak/vitals/probability outputs, calibration
windows, and the EPW1/EPQ1 model weight files.

Text formats are diff-able key=value headers plus line-delimited records;
binary weight files are little-endian.  Readers attach a line number to
every parse failure.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import nn
from .dsp import Recording
from .vitals import VitalsSample

WEIGHT_MAGIC = b"EPW1"
QUANT_MAGIC = b"EPQ1"
FORMAT_VERSION = 1
QUANT_FILE_BUDGET = 16 * 1024

_KIND_CODES = {nn.KIND_CONV: 0, nn.KIND_CONVT: 1, nn.KIND_RELU: 2,
               nn.KIND_TANH: 3, nn.KIND_SIGMOID: 4}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class FormatError(ValueError):
    """Malformed file; carries the offending path and location."""

    def __init__(self, path, where, message):
        self.path = str(path)
        self.where = where
        super().__init__(f"{path}:{where}: {message}")


def _fmt(v: float) -> str:
    return f"{v:.9g}"


# -------------------------------------------------------------- recordings

def write_recording(path, rec: Recording) -> None:
    names = list(rec.channels)
    lines = [f"fs={_fmt(rec.fs)}", f"channels={','.join(names)}"]
    for name in names:
        role = rec.roles.get(name, "")
        if role:
            lines.append(f"role.{name}={role}")
    if rec.subject:
        lines.append(f"subject={rec.subject}")
    if rec.session:
        lines.append(f"session={rec.session}")
    cols = [np.asarray(rec.channels[n], dtype=np.float32) for n in names]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
        for row in zip(*cols) if cols else ():
            f.write(",".join(_fmt(v) for v in row) + "\n")


def read_recording(path) -> Recording:
    path = Path(path)
    fs = None
    names: list[str] = []
    roles: dict[str, str] = {}
    subject = session = ""
    rows: list[list[float]] = []
    with open(path) as f:
        in_header = True
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if in_header and "=" in line:
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip()
                if key == "fs":
                    try:
                        fs = float(value)
                    except ValueError:
                        raise FormatError(path, lineno, f"bad fs {value!r}")
                elif key == "channels":
                    names = [n.strip() for n in value.split(",") if n.strip()]
                elif key.startswith("role."):
                    roles[key[5:]] = value
                elif key == "subject":
                    subject = value
                elif key == "session":
                    session = value
                else:
                    raise FormatError(path, lineno, f"unknown header key {key!r}")
                continue
            in_header = False
            parts = line.split(",")
            if len(parts) != len(names):
                raise FormatError(
                    path, lineno,
                    f"expected {len(names)} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise FormatError(path, lineno, f"bad sample row {line!r}")
    if fs is None:
        raise FormatError(path, 1, "missing fs header")
    if fs <= 0:
        raise FormatError(path, 1, f"fs must be positive, got {fs}")
    if not names:
        raise FormatError(path, 1, "missing channels header")
    data = np.asarray(rows, dtype=np.float32).reshape(len(rows), len(names))
    channels = {n: np.ascontiguousarray(data[:, i]) for i, n in enumerate(names)}
    try:
        return Recording(fs=fs, channels=channels, roles=roles,
                         subject=subject, session=session)
    except ValueError as e:
        raise FormatError(path, 1, str(e))


# ------------------------------------------------------- peaks and vitals

def write_peaks(path, peaks) -> None:
    with open(path, "w") as f:
        f.write("sample_index\n")
        for p in np.asarray(peaks, dtype=int):
            f.write(f"{p}\n")


def read_peaks(path) -> np.ndarray:
    path = Path(path)
    out = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or (lineno == 1 and line == "sample_index"):
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError(path, lineno, f"bad peak index {line!r}")
    return np.asarray(out, dtype=int)


def write_vitals(path, samples) -> None:
    with open(path, "w") as f:
        f.write("t_s,hr_bpm,hrv_ms,valid\n")
        for s in samples:
            f.write(f"{_fmt(s.t)},{_fmt(s.hr)},{_fmt(s.hrv)},{int(s.valid)}\n")


def read_vitals(path) -> list[VitalsSample]:
    path = Path(path)
    out = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("t_s"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(path, lineno, f"expected 4 columns: {line!r}")
            try:
                t, hr, hrv = (float(np.float32(p)) for p in parts[:3])
                valid = bool(int(parts[3]))
            except ValueError:
                raise FormatError(path, lineno, f"bad vitals row {line!r}")
            out.append(VitalsSample(t=t, hr=hr, hrv=hrv, valid=valid))
    return out


def write_probabilities(path, probs) -> None:
    with open(path, "w") as f:
        for v in np.asarray(probs, dtype=float):
            f.write(_fmt(v) + "\n")


def read_probabilities(path) -> np.ndarray:
    path = Path(path)
    out = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                out.append(float(line))
            except ValueError:
                raise FormatError(path, lineno, f"bad probability {line!r}")
    return np.asarray(out, dtype=float)


def write_calibration(path, windows) -> None:
    """Calibration windows, one comma-separated 500-sample row per line."""
    windows = np.atleast_2d(np.asarray(windows, dtype=np.float32))
    with open(path, "w") as f:
        for row in windows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def read_calibration(path) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise FormatError(path, lineno,
                                  f"expected {width} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise FormatError(path, lineno, "bad calibration row")
    if not rows:
        raise FormatError(path, 1, "empty calibration file")
    return np.asarray(rows, dtype=np.float32)


def load_calibration_dir(dirpath) -> np.ndarray:
    files = sorted(p for p in Path(dirpath).iterdir()
                   if p.suffix in (".csv", ".txt"))
    if not files:
        raise FileNotFoundError(f"no calibration files under {dirpath}")
    return np.concatenate([read_calibration(p) for p in files], axis=0)


# ----------------------------------------------------------- model weights

def _pack_layer_header(layer) -> bytes:
    return struct.pack("<BIIIII", _KIND_CODES[layer.kind], layer.in_channels,
                       layer.out_channels, layer.kernel_size, layer.stride,
                       layer.padding)


def save_model(path, model: nn.ModelGraph) -> None:
    """EPW1: magic, version u32, then per part (encoder/decoder/classifier)
    a layer count u32 and per-layer records of header + float32 weights +
    float32 bias."""
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        for part in (model.encoder, model.decoder, model.classifier):
            f.write(struct.pack("<I", len(part)))
            for layer in part:
                f.write(_pack_layer_header(layer))
                if layer.kind not in nn.ACTIVATION_KINDS:
                    f.write(layer.weights.astype("<f4").tobytes())
                    f.write(layer.bias.astype("<f4").tobytes())


def save_quantized(path, qmodel: nn.QuantizedModel) -> None:
    """EPQ1: per-layer record adds weight scales (f32 x out_ch), activation
    scale/zero-point (f32, i32), int8 weights and int32 bias."""
    with open(path, "wb") as f:
        f.write(QUANT_MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        for part in (qmodel.encoder, qmodel.decoder, qmodel.classifier):
            f.write(struct.pack("<I", len(part)))
            for layer in part:
                f.write(_pack_layer_header(layer))
                f.write(struct.pack("<fi", layer.in_scale, layer.in_zero_point))
                if layer.kind not in nn.ACTIVATION_KINDS:
                    f.write(layer.w_scales.astype("<f4").tobytes())
                    f.write(layer.weights.astype(np.int8).tobytes())
                    f.write(layer.bias.astype("<i4").tobytes())
    size = Path(path).stat().st_size
    if size > QUANT_FILE_BUDGET:
        raise ValueError(
            f"quantized model file is {size} bytes, budget {QUANT_FILE_BUDGET}")


class _Reader:
    def __init__(self, path):
        self.path = Path(path)
        self.data = self.path.read_bytes()
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(self.path, f"byte {self.pos}",
                              f"truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def _read_layer_header(r: _Reader):
    kind_code, cin, cout, k, stride, pad = struct.unpack(
        "<BIIIII", r.take(21, "layer header"))
    if kind_code not in _CODE_KINDS:
        raise FormatError(r.path, f"byte {r.pos - 21}",
                          f"unknown layer kind code {kind_code}")
    return _CODE_KINDS[kind_code], cin, cout, k, stride, pad


def load_model(path):
    """Load an EPW1 or EPQ1 file, dispatching on the magic; the float form
    is budget- and shape-checked before it is returned."""
    r = _Reader(path)
    magic = r.take(4, "magic")
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise FormatError(r.path, "byte 4", f"unsupported version {version}")
    if magic == WEIGHT_MAGIC:
        return _load_float(r)
    if magic == QUANT_MAGIC:
        return _load_quant(r)
    raise FormatError(r.path, "byte 0", f"bad magic {magic!r}")


def _load_float(r: _Reader) -> nn.ModelGraph:
    parts = []
    for _ in range(3):
        n_layers = r.u32("layer count")
        layers = []
        for _ in range(n_layers):
            kind, cin, cout, k, stride, pad = _read_layer_header(r)
            if kind in nn.ACTIVATION_KINDS:
                layers.append(nn.LayerSpec(kind, cin, cout))
                continue
            n_w = cin * cout * k
            w = np.frombuffer(r.take(4 * n_w, "weights"), dtype="<f4")
            b = np.frombuffer(r.take(4 * cout, "bias"), dtype="<f4")
            try:
                layers.append(nn.LayerSpec(kind, cin, cout, k, stride, pad,
                                           weights=w.copy(), bias=b.copy()))
            except ValueError as e:
                raise FormatError(r.path, f"byte {r.pos}", str(e))
        parts.append(layers)
    if r.pos != len(r.data):
        raise FormatError(r.path, f"byte {r.pos}", "trailing bytes")
    model = nn.ModelGraph(encoder=parts[0], decoder=parts[1],
                          classifier=parts[2])
    try:
        nn.validate_budgets(model)
    except ValueError as e:
        raise FormatError(r.path, "model", str(e))
    return model


def _load_quant(r: _Reader) -> nn.QuantizedModel:
    parts = []
    for _ in range(3):
        n_layers = r.u32("layer count")
        layers = []
        for _ in range(n_layers):
            kind, cin, cout, k, stride, pad = _read_layer_header(r)
            scale, zp = struct.unpack("<fi", r.take(8, "activation params"))
            if kind in nn.ACTIVATION_KINDS:
                layers.append(nn.QuantLayer(kind, cin, cout, in_scale=scale,
                                            in_zero_point=zp))
                continue
            scales = np.frombuffer(r.take(4 * cout, "weight scales"), dtype="<f4")
            n_w = cin * cout * k
            w = np.frombuffer(r.take(n_w, "weights"), dtype=np.int8)
            shape = (cout, cin, k) if kind == nn.KIND_CONV else (cin, cout, k)
            b = np.frombuffer(r.take(4 * cout, "bias"), dtype="<i4")
            layers.append(nn.QuantLayer(
                kind, cin, cout, k, stride, pad,
                weights=w.reshape(shape).copy(), w_scales=scales.copy(),
                bias=b.copy(), in_scale=scale, in_zero_point=zp))
        parts.append(layers)
    if r.pos != len(r.data):
        raise FormatError(r.path, f"byte {r.pos}", "trailing bytes")
    return nn.QuantizedModel(encoder=parts[0], decoder=parts[1],
                             classifier=parts[2])


# ------------------------------------------------------------- key=value

def read_kv(path) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(path, lineno, f"expected key=value: {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
