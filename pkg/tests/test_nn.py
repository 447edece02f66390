import hashlib

import numpy as np
import pytest

from earpipe import nn


# ---------------------------------------------------------------- oracles

def oracle_conv1d(x, w, b, stride, pad):
    """Triple-loop sliding dot product.  x (Cin, L), w (Cout, Cin, K)."""
    cin, length = x.shape
    cout, _, k = w.shape
    xp = np.zeros((cin, length + 2 * pad))
    xp[:, pad:pad + length] = x
    lo = (length + 2 * pad - k) // stride + 1
    y = np.zeros((cout, lo))
    for co in range(cout):
        for t in range(lo):
            acc = 0.0
            for ci in range(cin):
                for j in range(k):
                    acc += xp[ci, t * stride + j] * w[co, ci, j]
            y[co, t] = acc + b[co]
    return y


def oracle_conv_transpose1d(x, w, b, stride, pad):
    """Scatter-add.  x (Cin, L), w (Cin, Cout, K)."""
    cin, length = x.shape
    _, cout, k = w.shape
    full = (length - 1) * stride + k
    y = np.zeros((cout, full))
    for ci in range(cin):
        for t in range(length):
            for co in range(cout):
                for j in range(k):
                    y[co, t * stride + j] += x[ci, t] * w[ci, co, j]
    y = y[:, pad:full - pad] if pad else y
    return y + b[:, None]


def random_conv_case(rng, transpose=False):
    cin = int(rng.integers(1, 5))
    cout = int(rng.integers(1, 5))
    k = int(rng.integers(1, 8))
    stride = int(rng.integers(1, 4))
    pad = int(rng.integers(0, k))  # engine requires pad <= K-1
    length = int(rng.integers(k + stride, 40))
    x = rng.standard_normal((cin, length)).astype(np.float32)
    if transpose:
        w = rng.standard_normal((cin, cout, k)).astype(np.float32)
        kind = nn.KIND_CONVT
    else:
        w = rng.standard_normal((cout, cin, k)).astype(np.float32)
        kind = nn.KIND_CONV
    b = rng.standard_normal(cout).astype(np.float32)
    layer = nn.LayerSpec(kind, cin, cout, k, stride, pad, weights=w, bias=b)
    return x, w, b, layer


# -------------------------------------------------------------------- conv

class TestConv1d:
    def test_identity_kernel(self):
        x = np.arange(12, dtype=np.float32)[None, :]
        layer = nn.LayerSpec(nn.KIND_CONV, 1, 1, 1, 1, 0,
                             weights=np.ones((1, 1, 1)), bias=np.zeros(1))
        np.testing.assert_allclose(nn.conv1d(x, layer), x)

    def test_matches_bruteforce_fixed_case(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 16)).astype(np.float32)
        w = rng.standard_normal((3, 2, 5)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        layer = nn.LayerSpec(nn.KIND_CONV, 2, 3, 5, 2, 2, weights=w, bias=b)
        np.testing.assert_allclose(nn.conv1d(x, layer),
                                   oracle_conv1d(x, w, b, 2, 2), atol=1e-6)

    def test_channel_mismatch(self):
        layer = nn.LayerSpec(nn.KIND_CONV, 2, 1, 3, 1, 1,
                             weights=np.ones((1, 2, 3)), bias=np.zeros(1))
        with pytest.raises(ValueError):
            nn.conv1d(np.zeros((3, 10), dtype=np.float32), layer)

    def test_output_length_formula(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            x, _, _, layer = random_conv_case(rng)
            got = nn.conv1d(x, layer)
            want = (x.shape[1] + 2 * layer.padding - layer.kernel_size) \
                // layer.stride + 1
            assert got.shape == (layer.out_channels, want)

    def test_random_cases_match_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            x, w, b, layer = random_conv_case(rng)
            np.testing.assert_allclose(
                nn.conv1d(x, layer),
                oracle_conv1d(x, w, b, layer.stride, layer.padding),
                atol=1e-5)


class TestConvTranspose1d:
    def test_identity(self):
        x = np.arange(9, dtype=np.float32)[None, :]
        layer = nn.LayerSpec(nn.KIND_CONVT, 1, 1, 1, 1, 0,
                             weights=np.ones((1, 1, 1)), bias=np.zeros(1))
        np.testing.assert_allclose(nn.conv_transpose1d(x, layer), x)

    def test_length_doubling(self):
        layer = nn.LayerSpec(nn.KIND_CONVT, 1, 1, 4, 2, 1,
                             weights=np.ones((1, 1, 4)), bias=np.zeros(1))
        out = nn.conv_transpose1d(np.ones((1, 250), dtype=np.float32), layer)
        assert out.shape == (1, 500)
        assert layer.out_length(250) == 500

    def test_random_cases_match_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            x, w, b, layer = random_conv_case(rng, transpose=True)
            np.testing.assert_allclose(
                nn.conv_transpose1d(x, layer),
                oracle_conv_transpose1d(x, w, b, layer.stride, layer.padding),
                atol=1e-5)


class TestForward:
    def test_zero_model_gives_half_probability(self):
        model = nn.reference_model(seed=0)
        for layer in model.encoder + model.classifier:
            if layer.weights is not None:
                layer.weights = np.zeros_like(layer.weights)
                layer._wk = None
        probs = nn.infer_probabilities(model, np.zeros((1, 500), dtype=np.float32))
        np.testing.assert_allclose(probs, 0.5)

    def test_classifier_output_in_unit_interval(self):
        model = nn.reference_model(seed=1)
        rng = np.random.default_rng(4)
        probs = nn.infer_probabilities(model, rng.standard_normal((1, 500)))
        assert probs.shape == (500,)
        assert np.all(probs >= 0.0) and np.all(probs <= 1.0)

    def test_decoder_output_in_tanh_range(self):
        model = nn.reference_model(seed=1)
        rng = np.random.default_rng(5)
        recon = nn.reconstruct(model, rng.standard_normal((1, 500)))
        assert recon.shape == (500,)
        assert np.all(recon >= -1.0) and np.all(recon <= 1.0)

    def test_shared_latent(self):
        model = nn.reference_model(seed=2)
        rng = np.random.default_rng(6)
        window = rng.standard_normal((1, 500)).astype(np.float32)
        h1 = hashlib.sha256(nn.encode(model, window).tobytes()).hexdigest()
        h2 = hashlib.sha256(nn.encode(model, window).tobytes()).hexdigest()
        assert h1 == h2


class TestBudgets:
    def test_reference_architecture_counts(self):
        model = nn.reference_model()
        params, macs = nn.count_params_and_macs(model)
        assert params == 9609
        assert macs == 3_430_000
        assert params < 10_000
        assert 2_800_000 <= macs <= 4_200_000

    def test_single_conv_param_example(self):
        layer = nn.LayerSpec(nn.KIND_CONV, 1, 8, 7, 1, 3,
                             weights=np.zeros((8, 1, 7)), bias=np.zeros(8))
        assert layer.param_count == 64

    def test_validate_budgets_accepts_reference(self):
        nn.validate_budgets(nn.reference_model())

    def test_validate_budgets_rejects_fat_model(self):
        model = nn.reference_model()
        fat = nn.LayerSpec(nn.KIND_CONV, 16, 16, 7, 1, 3,
                           weights=np.zeros((16, 16, 7)), bias=np.zeros(16))
        model.classifier.insert(4, fat)
        model.classifier.insert(4, nn.LayerSpec(nn.KIND_RELU, 16, 16))
        with pytest.raises(ValueError):
            nn.validate_budgets(model)


# ------------------------------------------------------------ quantization

def calib_set(rng, n=32):
    return rng.standard_normal((n, 500)).astype(np.float32)


class TestCalibrate:
    def test_zero_channel_guard(self):
        model = nn.reference_model(seed=3)
        model.encoder[0].weights[0] = 0.0
        model.encoder[0]._wk = None
        qm = nn.calibrate(model, calib_set(np.random.default_rng(7)))
        assert qm.encoder[0].w_scales[0] == 1.0
        assert np.all(qm.encoder[0].weights[0] == 0)

    def test_weight_roundtrip_error_bound(self):
        model = nn.reference_model(seed=4)
        qm = nn.calibrate(model, calib_set(np.random.default_rng(8)))
        for lf, lq in zip(model.encoder, qm.encoder):
            if lf.weights is None:
                continue
            scales = lq.w_scales[:, None, None] if lf.kind == nn.KIND_CONV \
                else lq.w_scales[None, :, None]
            err = np.abs(lq.weights.astype(np.float64) * scales - lf.weights)
            assert np.all(err <= scales / 2 + 1e-12)

    def test_empty_calibration_rejected(self):
        with pytest.raises(ValueError):
            nn.calibrate(nn.reference_model(), np.zeros((0, 500)))


class TestForwardQuantized:
    def test_identity_kernel_requant_within_one_step(self):
        layer = nn.QuantLayer(nn.KIND_CONV, 1, 1, 1, 1, 0,
                              weights=np.array([[[127]]], dtype=np.int8),
                              w_scales=np.array([1 / 127], dtype=np.float32),
                              bias=np.zeros(1, dtype=np.int32),
                              in_scale=0.05, in_zero_point=3)
        nxt = nn.QuantLayer(nn.KIND_RELU, 1, 1, in_scale=0.05, in_zero_point=3)
        q_in = np.arange(-50, 50, dtype=np.int8)[:, None]
        out, _ = nn._qconv_lc(layer, q_in, nxt.in_scale, nxt.in_zero_point)
        assert np.all(np.abs(out.astype(int) - q_in.astype(int)) <= 1)

    def test_bit_deterministic(self):
        model = nn.reference_model(seed=5)
        rng = np.random.default_rng(9)
        qm = nn.calibrate(model, calib_set(rng))
        x = rng.standard_normal((1, 500)).astype(np.float32)
        a = nn.forward_quantized(qm, x)
        b = nn.forward_quantized(qm, x)
        assert a.tobytes() == b.tobytes()

    def test_close_to_float_on_random_model(self):
        model = nn.reference_model(seed=6)
        rng = np.random.default_rng(10)
        calib = calib_set(rng, n=48)
        qm = nn.calibrate(model, calib)
        diffs = []
        for row in calib[:16]:
            pf = nn.infer_probabilities(model, row[None, :])
            pq = nn.forward_quantized(qm, row[None, :])
            diffs.append(np.mean(np.abs(pf - pq)))
        assert float(np.mean(diffs)) <= 0.02

    def test_mac_counter_matches_metadata(self):
        model = nn.reference_model(seed=7)
        qm = nn.calibrate(model, calib_set(np.random.default_rng(11), n=4))
        _, macs = nn.forward_quantized(
            qm, np.zeros((1, 500), dtype=np.float32), return_macs=True)
        assert macs == qm.mac_count == model.mac_count

    def test_scale_mismatch_rejected(self):
        model = nn.reference_model(seed=8)
        qm = nn.calibrate(model, calib_set(np.random.default_rng(12), n=4))
        bad = nn.QTensor(data=np.zeros((1, 500), dtype=np.int8),
                         scale=qm.input_scale * 2.0,
                         zero_point=qm.input_zero_point)
        with pytest.raises(ValueError):
            nn.forward_quantized(qm, bad)

    def test_qtensor_input_accepted(self):
        model = nn.reference_model(seed=8)
        rng = np.random.default_rng(13)
        qm = nn.calibrate(model, calib_set(rng, n=4))
        x = rng.standard_normal((1, 500)).astype(np.float32)
        qt = nn.QTensor(nn.quantize_array(x, qm.input_scale, qm.input_zero_point),
                        qm.input_scale, qm.input_zero_point)
        np.testing.assert_array_equal(nn.forward_quantized(qm, qt),
                                      nn.forward_quantized(qm, x))


class TestLayerSpecValidation:
    def test_weight_count_checked(self):
        with pytest.raises(ValueError):
            nn.LayerSpec(nn.KIND_CONV, 2, 3, 5, 1, 0,
                         weights=np.zeros((3, 2, 4)), bias=np.zeros(3))

    def test_stride_floor(self):
        with pytest.raises(ValueError):
            nn.LayerSpec(nn.KIND_CONV, 1, 1, 3, 0, 0,
                         weights=np.zeros((1, 1, 3)), bias=np.zeros(1))

    def test_activation_channel_preserving(self):
        with pytest.raises(ValueError):
            nn.LayerSpec(nn.KIND_RELU, 4, 8)
