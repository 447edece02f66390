"""Minimal 1-D convolutional inference engine.

Float path for desktop use, int8 path mirroring integer-only edge
execution: per-output-channel symmetric weight scales, per-tensor affine
activations, int32 bias, round-half-away-from-zero requantization with a
saturating int8 cast.  Tensors are (channels, length) row-major arrays;
the hot loop runs in (length, channels) layout so each kernel tap is one
BLAS matmul.

Weights are immutable once a model is built or loaded; forward passes are
reentrant and use a single thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KIND_CONV = "conv1d"
KIND_CONVT = "conv_transpose1d"
KIND_RELU = "relu"
KIND_TANH = "tanh"
KIND_SIGMOID = "sigmoid"
ACTIVATION_KINDS = (KIND_RELU, KIND_TANH, KIND_SIGMOID)

WINDOW_LEN = 500
PARAM_BUDGET = 10_000
MAC_RANGE = (2_800_000, 4_200_000)

_INT8_MIN, _INT8_MAX = -128, 127


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, np.floor(v + 0.5), np.ceil(v - 0.5))


@dataclass
class LayerSpec:
    """One layer: a convolution (with weights) or a pointwise activation.

    Conv weights are (out, in, K); transpose-conv weights are (in, out, K).
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    _wk: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind in ACTIVATION_KINDS:
            if self.in_channels != self.out_channels:
                raise ValueError(f"{self.kind} cannot change channel count")
            if self.weights is not None and np.asarray(self.weights).size:
                raise ValueError(f"{self.kind} takes no weights")
            return
        if self.kind not in (KIND_CONV, KIND_CONVT):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        expect = self.in_channels * self.out_channels * self.kernel_size
        w = np.asarray(self.weights, dtype=np.float32)
        if w.size != expect:
            raise ValueError(
                f"{self.kind} weight count {w.size} != "
                f"in*out*K = {expect}")
        shape = ((self.out_channels, self.in_channels, self.kernel_size)
                 if self.kind == KIND_CONV else
                 (self.in_channels, self.out_channels, self.kernel_size))
        self.weights = np.ascontiguousarray(w.reshape(shape))
        b = (np.zeros(self.out_channels, dtype=np.float32)
             if self.bias is None else np.asarray(self.bias, dtype=np.float32))
        if b.shape != (self.out_channels,):
            raise ValueError("bias must have one value per output channel")
        self.bias = b

    @property
    def param_count(self) -> int:
        if self.kind in ACTIVATION_KINDS:
            return 0
        return self.weights.size + self.bias.size

    def out_length(self, length: int) -> int:
        if self.kind == KIND_CONV:
            n = (length + 2 * self.padding - self.kernel_size) // self.stride + 1
            if n <= 0:
                raise ValueError(f"conv output collapses: L={length} {self}")
            return n
        if self.kind == KIND_CONVT:
            return (length - 1) * self.stride - 2 * self.padding + self.kernel_size
        return length

    def macs(self, length: int) -> int:
        """Multiply-accumulates for one pass at the given input length.

        Convolution counts per output position; transpose convolution counts
        each input element against the full kernel.
        """
        if self.kind == KIND_CONV:
            return self.out_length(length) * self.out_channels \
                * self.in_channels * self.kernel_size
        if self.kind == KIND_CONVT:
            return length * self.in_channels * self.out_channels * self.kernel_size
        return 0


def _prep(layer: LayerSpec):
    """Per-tap weight matrices for the (L, C) matmul formulation."""
    if layer._wk is not None:
        return layer._wk
    if layer.kind == KIND_CONV:
        w = layer.weights  # (out, in, K)
        taps = [np.ascontiguousarray(w[:, :, k].T) for k in range(layer.kernel_size)]
    else:
        # transpose conv == zero-stuffed conv with the kernel flipped and
        # the channel axes swapped
        w = layer.weights  # (in, out, K)
        taps = [np.ascontiguousarray(w[:, :, layer.kernel_size - 1 - k])
                for k in range(layer.kernel_size)]
    layer._wk = taps
    return taps


def _conv_core(x_lc: np.ndarray, taps, bias, kernel_size, stride, padding):
    if padding:
        x_lc = np.pad(x_lc, ((padding, padding), (0, 0)))
    n_out = (x_lc.shape[0] - kernel_size) // stride + 1
    if n_out <= 0:
        raise ValueError("convolution output collapses to zero length")
    span = n_out * stride
    y = x_lc[0:span:stride] @ taps[0]
    for k in range(1, kernel_size):
        y += x_lc[k:k + span:stride] @ taps[k]
    if bias is not None:
        y += bias
    return y


def _stuff(x_lc: np.ndarray, stride: int) -> np.ndarray:
    if stride == 1:
        return x_lc
    out = np.zeros(((x_lc.shape[0] - 1) * stride + 1, x_lc.shape[1]),
                   dtype=x_lc.dtype)
    out[::stride] = x_lc
    return out


def _apply_layer_lc(layer: LayerSpec, x_lc: np.ndarray) -> np.ndarray:
    if layer.kind == KIND_RELU:
        return np.maximum(x_lc, 0)
    if layer.kind == KIND_TANH:
        return np.tanh(x_lc)
    if layer.kind == KIND_SIGMOID:
        return 1.0 / (1.0 + np.exp(-x_lc))
    if x_lc.shape[1] != layer.in_channels:
        raise ValueError(
            f"channel mismatch: input has {x_lc.shape[1]}, layer expects "
            f"{layer.in_channels}")
    taps = _prep(layer)
    if layer.kind == KIND_CONV:
        return _conv_core(x_lc, taps, layer.bias, layer.kernel_size,
                          layer.stride, layer.padding)
    pad = layer.kernel_size - 1 - layer.padding
    if pad < 0:
        raise ValueError("padding larger than kernel_size - 1 is unsupported")
    return _conv_core(_stuff(x_lc, layer.stride), taps, layer.bias,
                      layer.kernel_size, 1, pad)


def _to_lc(x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float32)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"expected (channels, length) tensor, got shape {x.shape}")
    return np.ascontiguousarray(x.T)


def conv1d(x, layer: LayerSpec) -> np.ndarray:
    """Strided cross-correlation with symmetric zero padding; x is (C, L)."""
    if layer.kind != KIND_CONV:
        raise ValueError(f"conv1d called with {layer.kind!r} layer")
    return np.ascontiguousarray(_apply_layer_lc(layer, _to_lc(x)).T)


def conv_transpose1d(x, layer: LayerSpec) -> np.ndarray:
    """Gradient-of-conv upsampling; output length (L-1)*stride - 2*pad + K."""
    if layer.kind != KIND_CONVT:
        raise ValueError(f"conv_transpose1d called with {layer.kind!r} layer")
    return np.ascontiguousarray(_apply_layer_lc(layer, _to_lc(x)).T)


def forward(layers, x) -> np.ndarray:
    """Apply layers in order to a (C, L) tensor."""
    x_lc = _to_lc(x)
    for layer in layers:
        x_lc = _apply_layer_lc(layer, x_lc)
    return np.ascontiguousarray(x_lc.T)


# ------------------------------------------------------------------ graphs

@dataclass
class ModelGraph:
    """Encoder shared by a classifier head (sigmoid) and a decoder head
    (tanh); heads are cropped/padded back to the input window length."""

    encoder: list[LayerSpec]
    decoder: list[LayerSpec]
    classifier: list[LayerSpec]
    input_length: int = WINDOW_LEN

    @property
    def param_count(self) -> int:
        return count_params_and_macs(self)[0]

    @property
    def mac_count(self) -> int:
        return count_params_and_macs(self)[1]


def part_stats(layers, length: int) -> tuple[int, int, int]:
    """(params, macs, out_length) of one layer list at a given input length."""
    params = macs = 0
    for layer in layers:
        params += layer.param_count
        macs += layer.macs(length)
        length = layer.out_length(length)
    return params, macs, length


def count_params_and_macs(model: ModelGraph) -> tuple[int, int]:
    """Analytic parameter and MAC counts of the deployed path
    (encoder + classifier)."""
    p_enc, m_enc, latent_len = part_stats(model.encoder, model.input_length)
    p_cls, m_cls, _ = part_stats(model.classifier, latent_len)
    return p_enc + p_cls, m_enc + m_cls


def validate_budgets(model: ModelGraph) -> None:
    """Shape chaining plus the deployment envelope; raises on violation."""
    length = model.input_length
    for part_name, part in (("encoder", model.encoder),
                            ("decoder", model.decoder),
                            ("classifier", model.classifier)):
        chain = model.encoder + part if part_name != "encoder" else part
        n = length
        prev_out = 1
        for layer in chain:
            if layer.kind not in ACTIVATION_KINDS and layer.in_channels != prev_out:
                raise ValueError(
                    f"{part_name}: layer expects {layer.in_channels} channels, "
                    f"gets {prev_out}")
            n = layer.out_length(n)
            prev_out = layer.out_channels
        if part_name in ("decoder", "classifier"):
            if prev_out != 1:
                raise ValueError(f"{part_name} must end with 1 channel")
            if abs(n - model.input_length) > model.input_length // 8:
                raise ValueError(
                    f"{part_name} output length {n} too far from "
                    f"{model.input_length}")
    params, macs = count_params_and_macs(model)
    if params >= PARAM_BUDGET:
        raise ValueError(f"parameter budget exceeded: {params} >= {PARAM_BUDGET}")
    if not (MAC_RANGE[0] <= macs <= MAC_RANGE[1]):
        raise ValueError(f"mac count {macs} outside {MAC_RANGE}")


def _fit_length(y_lc: np.ndarray, n: int) -> np.ndarray:
    """Center-crop or zero-pad along the length axis."""
    length = y_lc.shape[0]
    if length == n:
        return y_lc
    if length > n:
        lo = (length - n) // 2
        return y_lc[lo:lo + n]
    lo = (n - length) // 2
    out = np.zeros((n, y_lc.shape[1]), dtype=y_lc.dtype)
    out[lo:lo + length] = y_lc
    return out


def encode(model: ModelGraph, window) -> np.ndarray:
    """Latent representation of one (1, 500) window; shared by both heads."""
    x_lc = _to_lc(window)
    if x_lc.shape[0] != model.input_length:
        raise ValueError(
            f"window length {x_lc.shape[0]} != {model.input_length}")
    for layer in model.encoder:
        x_lc = _apply_layer_lc(layer, x_lc)
    return np.ascontiguousarray(x_lc.T)


def _run_head(model: ModelGraph, head, latent) -> np.ndarray:
    x_lc = _to_lc(latent)
    for layer in head:
        x_lc = _apply_layer_lc(layer, x_lc)
    return _fit_length(x_lc, model.input_length)[:, 0].copy()


def infer_probabilities(model: ModelGraph, window) -> np.ndarray:
    """R-peak probability vector (length 500, values in [0, 1])."""
    return _run_head(model, model.classifier, encode(model, window))


def reconstruct(model: ModelGraph, window) -> np.ndarray:
    """Decoder-path waveform reconstruction (length 500, values in [-1, 1])."""
    return _run_head(model, model.decoder, encode(model, window))


def reference_model(seed: int = 0) -> ModelGraph:
    """The stock architecture: He-initialized, 9,609 deployed parameters,
    3,430,000 MACs per classifier inference."""
    rng = np.random.default_rng(seed)

    def conv(i, o, k, s, p):
        w = rng.standard_normal((o, i, k)) * np.sqrt(2.0 / (i * k))
        return LayerSpec(KIND_CONV, i, o, k, s, p,
                         weights=w.astype(np.float32),
                         bias=np.zeros(o, dtype=np.float32))

    def convt(i, o, k, s, p):
        w = rng.standard_normal((i, o, k)) * np.sqrt(2.0 / (i * k))
        return LayerSpec(KIND_CONVT, i, o, k, s, p,
                         weights=w.astype(np.float32),
                         bias=np.zeros(o, dtype=np.float32))

    def act(kind, ch):
        return LayerSpec(kind, ch, ch)

    encoder = [
        conv(1, 16, 7, 1, 3), act(KIND_RELU, 16),
        conv(16, 16, 7, 1, 3), act(KIND_RELU, 16),
        conv(16, 16, 7, 1, 3), act(KIND_RELU, 16),
        conv(16, 16, 7, 1, 3), act(KIND_RELU, 16),
        conv(16, 16, 5, 2, 2), act(KIND_RELU, 16),
        conv(16, 32, 3, 2, 1), act(KIND_RELU, 32),
    ]

    def head(final_kind):
        return [
            convt(32, 8, 4, 2, 1), act(KIND_RELU, 8),
            convt(8, 4, 4, 2, 1), act(KIND_RELU, 4),
            conv(4, 1, 7, 1, 3), act(final_kind, 1),
        ]

    return ModelGraph(encoder=encoder, decoder=head(KIND_TANH),
                      classifier=head(KIND_SIGMOID))


# ------------------------------------------------------------ quantization

@dataclass
class QTensor:
    """int8 tensor with its affine quantization parameters."""

    data: np.ndarray
    scale: float
    zero_point: int

    def dequantize(self) -> np.ndarray:
        return (self.data.astype(np.float32) - self.zero_point) * self.scale


@dataclass
class QuantLayer:
    """Quantized counterpart of LayerSpec.

    in_scale / in_zero_point describe this layer's input tensor; weights are
    per-output-channel symmetric int8, bias is int32 at in_scale * w_scale.
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    weights: np.ndarray | None = None
    w_scales: np.ndarray | None = None
    bias: np.ndarray | None = None
    in_scale: float = 1.0
    in_zero_point: int = 0

    def out_length(self, length: int) -> int:
        return LayerSpec.out_length(self, length)  # same arithmetic

    def macs(self, length: int) -> int:
        return LayerSpec.macs(self, length)


@dataclass
class QuantizedModel:
    encoder: list[QuantLayer]
    decoder: list[QuantLayer]
    classifier: list[QuantLayer]
    input_length: int = WINDOW_LEN

    @property
    def input_scale(self) -> float:
        return self.encoder[0].in_scale

    @property
    def input_zero_point(self) -> int:
        return self.encoder[0].in_zero_point

    @property
    def mac_count(self) -> int:
        macs = 0
        length = self.input_length
        for layer in self.encoder:
            macs += layer.macs(length)
            length = layer.out_length(length)
        for layer in self.classifier:
            macs += layer.macs(length)
            length = layer.out_length(length)
        return macs


def _affine_params(lo: float, hi: float) -> tuple[float, int]:
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi - lo < 1e-12:
        return 1.0, 0
    # scales live at float32 precision so in-memory and serialized models
    # produce identical bits
    scale = float(np.float32((hi - lo) / 255.0))
    zp = int(np.clip(round(-128.0 - lo / scale), _INT8_MIN, _INT8_MAX))
    return scale, zp


def quantize_array(x, scale: float, zero_point: int) -> np.ndarray:
    q = _round_half_away(np.asarray(x, dtype=np.float64) / scale) + zero_point
    return np.clip(q, _INT8_MIN, _INT8_MAX).astype(np.int8)


def _quantize_weights(layer: LayerSpec, in_scale: float) -> QuantLayer:
    w = layer.weights.astype(np.float64)
    axis = (1, 2) if layer.kind == KIND_CONV else (0, 2)
    absmax = np.max(np.abs(w), axis=axis)
    scales = np.where(absmax > 0, absmax / 127.0, 1.0).astype(np.float32)
    per_ch = scales.astype(np.float64)
    if layer.kind == KIND_CONV:
        per_ch = per_ch[:, None, None]
    else:
        per_ch = per_ch[None, :, None]
    wq = np.clip(_round_half_away(w / per_ch), -127, 127).astype(np.int8)
    bias_scale = scales.astype(np.float64) * in_scale
    bq = np.clip(_round_half_away(layer.bias.astype(np.float64) / bias_scale),
                 np.iinfo(np.int32).min, np.iinfo(np.int32).max).astype(np.int32)
    return QuantLayer(kind=layer.kind, in_channels=layer.in_channels,
                      out_channels=layer.out_channels,
                      kernel_size=layer.kernel_size, stride=layer.stride,
                      padding=layer.padding, weights=wq,
                      w_scales=scales, bias=bq)


def calibrate(model: ModelGraph, calib_windows) -> QuantizedModel:
    """Post-training quantization from calibration-window statistics.

    Weight scales are max|w|/127 per output channel (zeroed channels guard
    to scale 1); activation ranges come from the min/max of every tensor
    boundary over the calibration set.
    """
    calib = np.asarray(calib_windows, dtype=np.float32)
    if calib.ndim == 1:
        calib = calib[None, :]
    if calib.size == 0:
        raise ValueError("calibration set is empty")

    def track(ranges, idx, x_lc):
        lo, hi = ranges[idx]
        ranges[idx] = (min(lo, float(x_lc.min())), max(hi, float(x_lc.max())))

    enc_r = [(np.inf, -np.inf) for _ in range(len(model.encoder))]
    cls_r = [(np.inf, -np.inf) for _ in range(len(model.classifier))]
    dec_r = [(np.inf, -np.inf) for _ in range(len(model.decoder))]
    for row in calib:
        x_lc = _to_lc(row)
        for i, layer in enumerate(model.encoder):
            track(enc_r, i, x_lc)
            x_lc = _apply_layer_lc(layer, x_lc)
        latent = x_lc
        for ranges, part in ((cls_r, model.classifier), (dec_r, model.decoder)):
            x_lc = latent
            for i, layer in enumerate(part):
                track(ranges, i, x_lc)
                x_lc = _apply_layer_lc(layer, x_lc)

    def build(part, ranges):
        out = []
        for layer, (lo, hi) in zip(part, ranges):
            scale, zp = _affine_params(lo, hi)
            if layer.kind in ACTIVATION_KINDS:
                q = QuantLayer(kind=layer.kind, in_channels=layer.in_channels,
                               out_channels=layer.out_channels)
            else:
                q = _quantize_weights(layer, scale)
            q.in_scale, q.in_zero_point = scale, zp
            out.append(q)
        return out

    return QuantizedModel(encoder=build(model.encoder, enc_r),
                          decoder=build(model.decoder, dec_r),
                          classifier=build(model.classifier, cls_r),
                          input_length=model.input_length)


def _qconv_lc(layer: QuantLayer, q_lc, next_scale, next_zp):
    """Integer conv + requantization.  Accumulation is exact integer math
    (carried in float64, well inside the int32 range), so results are
    bit-stable across platforms."""
    x = q_lc.astype(np.float64) - float(layer.in_zero_point)
    w = layer.weights.astype(np.float64)
    if layer.kind == KIND_CONV:
        taps = [w[:, :, k].T for k in range(layer.kernel_size)]
        acc = _conv_core(x, taps, None, layer.kernel_size, layer.stride,
                         layer.padding)
    else:
        taps = [w[:, :, layer.kernel_size - 1 - k]
                for k in range(layer.kernel_size)]
        pad = layer.kernel_size - 1 - layer.padding
        acc = _conv_core(_stuff(x, layer.stride), taps, None,
                         layer.kernel_size, 1, pad)
    acc += layer.bias.astype(np.float64)
    if next_scale is None:
        # dequantize: leave the head in float
        return acc * (layer.w_scales.astype(np.float64) * layer.in_scale), None
    mult = (layer.w_scales.astype(np.float64) * layer.in_scale) / next_scale
    q = _round_half_away(acc * mult) + next_zp
    return np.clip(q, _INT8_MIN, _INT8_MAX).astype(np.int8), True


def _run_qpart(layers, q_lc, macs_box):
    """Run one quantized part; returns float (L, C) after a final tanh or
    sigmoid, else the dequantized linear output."""
    length = q_lc.shape[0]
    for i, layer in enumerate(layers):
        nxt = layers[i + 1] if i + 1 < len(layers) else None
        if layer.kind == KIND_RELU:
            v = np.maximum(q_lc.astype(np.float64) - layer.in_zero_point, 0.0)
            if nxt is None:
                return v * layer.in_scale
            ratio = layer.in_scale / nxt.in_scale
            q = _round_half_away(v * ratio) + nxt.in_zero_point
            q_lc = np.clip(q, _INT8_MIN, _INT8_MAX).astype(np.int8)
        elif layer.kind == KIND_TANH:
            x = (q_lc.astype(np.float64) - layer.in_zero_point) * layer.in_scale
            return np.tanh(x)
        elif layer.kind == KIND_SIGMOID:
            x = (q_lc.astype(np.float64) - layer.in_zero_point) * layer.in_scale
            return 1.0 / (1.0 + np.exp(-x))
        else:
            macs_box[0] += layer.macs(length)
            if nxt is None:
                deq, _ = _qconv_lc(layer, q_lc, None, None)
                return deq
            out, _ = _qconv_lc(layer, q_lc, nxt.in_scale, nxt.in_zero_point)
            q_lc = out
        length = layer.out_length(length)
    return q_lc


def forward_quantized(qmodel: QuantizedModel, window, part: str = "classifier",
                      return_macs: bool = False):
    """Integer inference on one window.

    `window` may be a float (1, 500) tensor (quantized here with the model
    input scale) or a QTensor already carrying matching parameters.
    """
    head = getattr(qmodel, part)
    if isinstance(window, QTensor):
        if (abs(window.scale - qmodel.input_scale)
                > 1e-6 * max(abs(qmodel.input_scale), 1e-30)
                or window.zero_point != qmodel.input_zero_point):
            raise ValueError(
                f"input quantized with scale {window.scale}/zp "
                f"{window.zero_point}, model expects {qmodel.input_scale}/"
                f"{qmodel.input_zero_point}")
        q_lc = np.ascontiguousarray(np.atleast_2d(window.data).T)
    else:
        x_lc = _to_lc(window)
        q_lc = quantize_array(x_lc, qmodel.input_scale, qmodel.input_zero_point)
    if q_lc.shape[0] != qmodel.input_length:
        raise ValueError(f"window length {q_lc.shape[0]} != {qmodel.input_length}")

    macs_box = [0]
    # one flat sequence so every boundary requantizes to its successor
    out_lc = _run_qpart(list(qmodel.encoder) + list(head), q_lc, macs_box)
    out = _fit_length(np.asarray(out_lc, dtype=np.float64), qmodel.input_length)
    probs = out[:, 0].copy()
    if return_macs:
        return probs, macs_box[0]
    return probs
