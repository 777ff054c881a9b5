import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import direct_conv, fast_direct_conv, rel_err, sliding_windows
from tinyzone.errors import DomainError, FormatError, ProtocolError, ShapeError
from tinyzone.genmodel import random_weights
from tinyzone.netspec import LayerSpec, NetworkSpec, resolve
from tinyzone.stinylib import (
    BN_EPSILON, activate, build_network, forward, forward_layer, gemm, im2col, load_layer_weights,
    softmax, top_k,
)


def f32(a):
    return np.asarray(a, dtype=np.float32)


def load_all(net, weights):
    weighted = [i for i, layer in enumerate(net.layers) if layer.spec.weighted]
    for i, data in zip(weighted, weights.layers):
        load_layer_weights(net, i, data)


class TestIm2col:
    def test_two_by_two_window(self):
        x = f32(np.arange(1, 10)).reshape(1, 3, 3)
        expected = [[1, 2, 4, 5], [2, 3, 5, 6], [4, 5, 7, 8], [5, 6, 8, 9]]
        np.testing.assert_array_equal(im2col(x, 2, 1, 0), expected)

    def test_identity_window(self, rng):
        x = f32(rng.standard_normal((3, 4, 5)))
        np.testing.assert_array_equal(im2col(x, 1, 1, 0), x.reshape(3, 20))

    def test_padding(self):
        cols = im2col(f32([[[7]]]), 3, 1, 1)
        expected = np.zeros((9, 1))
        expected[4] = 7
        np.testing.assert_array_equal(cols, expected)

    def test_degenerate(self):
        with pytest.raises(ShapeError):
            im2col(f32(np.zeros((1, 2, 2))), 3, 1, 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 7), st.integers(1, 7), st.integers(1, 3), st.integers(1, 3),
           st.integers(0, 1), st.integers(0, 2 ** 31))
    def test_matches_enumeration(self, c, h, w, size, stride, pad, seed):
        if h + 2 * pad < size or w + 2 * pad < size:
            return
        x = f32(np.random.default_rng(seed).standard_normal((c, h, w)))
        np.testing.assert_array_equal(im2col(x, size, stride, pad), sliding_windows(x, size, stride, pad))


class TestGemm:
    def test_identity(self, rng):
        b = f32(rng.standard_normal((2, 3)))
        c = f32(np.full((2, 3), 9.0))
        np.testing.assert_array_equal(gemm(f32(np.eye(2)), b, 0.0, c), b)

    def test_small(self):
        c = f32(np.zeros((2, 2)))
        np.testing.assert_array_equal(gemm(f32([[1, 2], [3, 4]]), f32([[5, 6], [7, 8]]), 0.0, c),
                                      [[19, 22], [43, 50]])

    def test_accumulate(self, rng):
        b = f32(rng.standard_normal((2, 3)))
        c = f32(np.zeros((2, 3)))
        gemm(f32(np.eye(2)), b, 0.0, c)
        gemm(f32(np.eye(2)), b, 1.0, c)
        np.testing.assert_array_equal(c, 2 * b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            gemm(f32(np.zeros((2, 3))), f32(np.zeros((2, 2))), 0.0, f32(np.zeros((2, 2))))

    def test_k_order_accumulation(self, rng):
        a = f32(rng.standard_normal((3, 50)))
        b = f32(rng.standard_normal((50, 4)))
        expected = np.zeros((3, 4), dtype=np.float32)
        for i in range(3):
            for j in range(4):
                acc = np.float32(0)
                for k in range(50):
                    acc = np.float32(acc + a[i, k] * b[k, j])
                expected[i, j] = acc
        np.testing.assert_array_equal(gemm(a, b, 0.0, np.zeros((3, 4), np.float32)), expected)


def single_layer_net(layer, dims):
    spec = NetworkSpec(*dims, [layer])
    return spec, build_network(spec)


class TestLayers:
    def test_identity_conv(self, rng):
        spec, net = single_layer_net(LayerSpec("convolutional", filters=1, size=1), (1, 3, 3))
        load_layer_weights(net, 0, f32([0.0, 1.0]).tobytes())
        x = f32(rng.standard_normal((1, 3, 3)))
        np.testing.assert_array_equal(forward(net, x), x)

    def test_batchnorm_scalar(self):
        spec, net = single_layer_net(LayerSpec("convolutional", filters=1, size=1, batch_normalize=1), (1, 1, 1))
        # biases, scales, mean, variance, weights
        load_layer_weights(net, 0, f32([0.5, 2.0, 1.0, 3.0, 1.0]).tobytes())
        out = forward(net, f32([[[2.0]]]))
        assert out.item() == pytest.approx(2 * (2 - 1) / np.sqrt(3 + 1e-6) + 0.5, abs=1e-5)
        assert out.item() == pytest.approx(1.654700, abs=1e-5)

    def test_batchnorm_identity_stats(self, rng):
        spec, net = single_layer_net(LayerSpec("convolutional", filters=1, size=1, batch_normalize=1), (1, 4, 4))
        load_layer_weights(net, 0, f32([0.0, 1.0, 0.0, 1.0, 1.0]).tobytes())
        x = f32(rng.standard_normal((1, 4, 4)) * 10)
        out = forward(net, x)
        # epsilon effect plus the single float32 rounding of the quotient
        assert np.all(np.abs(out - x) <= np.abs(x) * 5e-7 + np.spacing(np.abs(x)) / 2)

    def test_maxpool(self):
        spec, net = single_layer_net(LayerSpec("maxpool", size=2, stride=2), (1, 2, 2))
        assert forward(net, f32([[[1, 2], [3, 4]]])).ravel().tolist() == [4]

    def test_avgpool(self):
        spec, net = single_layer_net(LayerSpec("avgpool"), (2, 2, 2))
        out = forward(net, f32([[[1, 2], [3, 4]], [[0, 0], [0, 8]]]))
        assert out.ravel().tolist() == [2.5, 2.0]

    def test_softmax_values(self):
        out = softmax(f32([[[1]], [[2]], [[3]]]))
        np.testing.assert_allclose(out.ravel(), [0.09003057, 0.24472847, 0.66524096], atol=1e-6)

    def test_softmax_symmetric(self):
        np.testing.assert_array_equal(softmax(f32([[[0, 0]]])).ravel(), [0.5, 0.5])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
    def test_softmax_is_distribution(self, values):
        out = softmax(f32(values).reshape(-1, 1, 1))
        assert abs(float(out.sum(dtype=np.float64)) - 1) <= 1e-5
        assert np.all((out >= 0) & (out <= 1))

    def test_shortcut_with_zero(self, rng):
        spec = NetworkSpec(2, 3, 3, [
            LayerSpec("convolutional", filters=2, size=1),
            LayerSpec("shortcut", from_=-1),
        ])
        net = build_network(spec)
        load_layer_weights(net, 0, f32([0, 0] + [0] * 4).tobytes())
        x = f32(rng.standard_normal((2, 3, 3)))
        zero = forward_layer(net, 0, x)
        assert not zero.any()
        np.testing.assert_array_equal(forward_layer(net, 1, zero.copy()), zero)
        net.layers[0].output[...] = 0
        np.testing.assert_array_equal(forward_layer(net, 1, x), x)

    def test_connected(self):
        spec, net = single_layer_net(LayerSpec("connected", outputs=2, activation="relu"), (3, 1, 1))
        load_layer_weights(net, 0, f32([1, -10, 1, 2, 3, 0, 0, 1]).tobytes())
        assert forward(net, f32([1, 1, 1]).reshape(3, 1, 1)).ravel().tolist() == [7, 0]

    def test_depthwise_identity(self, rng):
        spec, net = single_layer_net(LayerSpec("convolutional", filters=4, size=1, groups=4), (4, 3, 3))
        load_layer_weights(net, 0, f32([0] * 4 + [1] * 4).tobytes())
        x = f32(rng.standard_normal((4, 3, 3)))
        np.testing.assert_array_equal(forward(net, x), x)

    def test_weights_not_loaded(self):
        spec, net = single_layer_net(LayerSpec("convolutional", filters=1, size=1), (1, 2, 2))
        with pytest.raises(ProtocolError):
            forward_layer(net, 0, f32(np.zeros((1, 2, 2))))


class TestActivations:
    @given(st.lists(st.floats(-1e6, 1e6, width=32), min_size=1, max_size=20))
    def test_relu_idempotent(self, values):
        once = activate(f32(values), "relu")
        np.testing.assert_array_equal(activate(once.copy(), "relu"), once)

    @given(st.lists(st.floats(-1e6, 1e6, width=32), min_size=1, max_size=20))
    def test_leaky_exact(self, values):
        x = f32(values)
        expected = np.array([v if v >= 0 else np.float32(0.1) * v for v in x], dtype=np.float32)
        np.testing.assert_array_equal(activate(x.copy(), "leaky"), expected)


class TestLoadWeights:
    def conv_net(self):
        return build_network(NetworkSpec(3, 4, 4, [
            LayerSpec("convolutional", filters=2, size=3, pad=1, batch_normalize=1),
            LayerSpec("connected", outputs=3),
        ]))

    def test_conv_bn_length(self):
        net = self.conv_net()
        assert net.expected_bytes(0) == 4 * (2 + 2 + 2 + 2 + 54) == 248

    def test_connected_length(self):
        spec, net = single_layer_net(LayerSpec("connected", outputs=3), (4, 1, 1))
        assert net.expected_bytes(0) == 60

    def test_wrong_length(self):
        with pytest.raises(FormatError):
            load_layer_weights(self.conv_net(), 0, bytes(247))

    def test_bad_index(self):
        with pytest.raises(IndexError):
            load_layer_weights(self.conv_net(), 7, b"")

    def test_fill_order(self):
        net = self.conv_net()
        load_layer_weights(net, 0, f32(np.arange(62)).tobytes())
        p = net.layers[0].params
        assert p["biases"].tolist() == [0, 1]
        assert p["scales"].tolist() == [2, 3]
        assert p["rolling_mean"].tolist() == [4, 5]
        assert p["rolling_variance"].tolist() == [6, 7]
        assert p["weights"][0] == 8 and p["weights"][-1] == 61


class TestBuild:
    def test_conv_dims(self):
        spec = NetworkSpec(3, 224, 224, [LayerSpec("convolutional", filters=16, size=3, stride=2, pad=1),
                                          LayerSpec("maxpool", size=2, stride=2)])
        layers = resolve(spec)
        assert layers[0].out_dims == (16, 112, 112)
        assert layers[1].out_dims == (16, 56, 56)

    def test_inconsistent(self):
        with pytest.raises(ShapeError):
            build_network(NetworkSpec(3, 4, 4, [LayerSpec("shortcut", from_=0)]))

    def test_default_build_is_zeroed(self):
        net = build_network(NetworkSpec(3, 4, 4, [LayerSpec("convolutional", filters=2, size=3)]))
        assert not net.layers[0].params["weights"].any()

    def test_legacy_build_then_load_matches(self, rng):
        spec = NetworkSpec(3, 8, 8, [
            LayerSpec("convolutional", filters=4, size=3, pad=1, batch_normalize=1, activation="leaky"),
            LayerSpec("connected", outputs=5),
            LayerSpec("softmax"),
        ])
        weights = random_weights(spec, rng)
        x = f32(rng.random((3, 8, 8)))
        outs = []
        for legacy in (False, True):
            net = build_network(spec, legacy_random_init=legacy)
            if legacy:
                assert net.layers[0].params["weights"].any()
            load_all(net, weights)
            outs.append(forward(net, x))
        assert outs[0].tobytes() == outs[1].tobytes()


def random_conv_case(rng):
    groups_dw = rng.random() < 0.5
    c = int(rng.integers(1, 9))
    h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
    size = int(rng.choice([1, 2, 3, 5]))
    pad = int(rng.integers(0, size // 2 + 1))
    if h + 2 * pad < size or w + 2 * pad < size:
        size, pad = 1, 0
    stride = int(rng.integers(1, 3))
    groups = c if groups_dw else 1
    filters = c if groups_dw else int(rng.integers(1, 9))
    return c, h, w, filters, size, stride, pad, groups


def run_conv(x, weights, filters, size, stride, pad, groups):
    c, h, w = x.shape
    spec = NetworkSpec(c, h, w, [LayerSpec("convolutional", filters=filters, size=size, stride=stride,
                                           pad=pad, groups=groups)])
    net = build_network(spec)
    load_layer_weights(net, 0, np.concatenate([np.zeros(filters, np.float32), weights]).tobytes())
    return forward(net, x)


def test_conv_matches_nested_loops(rng):
    for _ in range(10):
        c, h, w, filters, size, stride, pad, groups = random_conv_case(rng)
        x = f32(rng.standard_normal((c, h, w)))
        wts = f32(rng.standard_normal(filters * (c // groups) * size * size))
        got = run_conv(x, wts, filters, size, stride, pad, groups)
        assert rel_err(got, direct_conv(x, wts, filters, size, stride, pad, groups)) <= 1e-4


def test_fast_oracle_agrees_with_nested_loops(rng):
    for _ in range(5):
        c, h, w, filters, size, stride, pad, groups = random_conv_case(rng)
        x = f32(rng.standard_normal((c, h, w)))
        wts = f32(rng.standard_normal(filters * (c // groups) * size * size))
        np.testing.assert_allclose(fast_direct_conv(x, wts, filters, size, stride, pad, groups),
                                   direct_conv(x, wts, filters, size, stride, pad, groups), rtol=1e-12, atol=1e-12)


def three_layer_model(rng):
    spec = NetworkSpec(3, 9, 9, [
        LayerSpec("convolutional", filters=6, size=3, stride=1, pad=1, activation="relu"),
        LayerSpec("convolutional", filters=4, size=3, stride=2, pad=0, activation="leaky"),
        LayerSpec("convolutional", filters=5, size=1),
    ])
    return spec, random_weights(spec, rng)


def test_three_layer_net_matches_direct_oracle(rng):
    spec, weights = three_layer_model(rng)
    net = build_network(spec)
    load_all(net, weights)
    x = f32(rng.standard_normal((3, 9, 9)))
    ref = x.astype(np.float64)
    for layer, data in zip(spec.layers, weights.arrays()):
        bias, wts = data[:layer.filters], data[layer.filters:]
        ref = fast_direct_conv(ref, wts, layer.filters, layer.size, layer.stride, layer.pad, layer.groups)
        ref += bias[:, None, None]
        if layer.activation == "relu":
            ref = np.maximum(ref, 0)
        elif layer.activation == "leaky":
            ref = np.where(ref > 0, ref, 0.1 * ref)
    assert rel_err(forward(net, x), ref) <= 1e-4


def test_forward_is_bitwise_deterministic(rng):
    spec, weights = three_layer_model(rng)
    net = build_network(spec)
    load_all(net, weights)
    x = f32(rng.standard_normal((3, 9, 9)))
    assert forward(net, x).tobytes() == forward(net, x).tobytes()


def test_single_softmax_net():
    spec, net = single_layer_net(LayerSpec("softmax"), (3, 1, 1))
    x = f32([1, 2, 3]).reshape(3, 1, 1)
    np.testing.assert_array_equal(forward(net, x), softmax(x))


def test_bn_epsilon():
    assert BN_EPSILON == 1e-6


class TestTopK:
    def test_basic(self):
        got = top_k(f32([0.1, 0.7, 0.2]), ["a", "b", "c"], 2)
        assert [g[0] for g in got] == ["b", "c"]
        assert got[0][1] == pytest.approx(0.7)

    def test_ties(self):
        assert [g[0] for g in top_k(f32([0.25] * 4), list("abcd"), 2)] == ["a", "b"]

    @given(st.lists(st.floats(0, 1, width=32), min_size=1, max_size=30))
    def test_full_sort(self, values):
        labels = [str(i) for i in range(len(values))]
        got = top_k(f32(values), labels, len(values))
        expected = sorted(enumerate(values), key=lambda p: (-p[1], p[0]))
        assert [int(g[0]) for g in got] == [i for i, _ in expected]

    @pytest.mark.parametrize("k", [0, 4])
    def test_k_range(self, k):
        with pytest.raises(DomainError):
            top_k(f32([0.1, 0.2, 0.7]), list("abc"), k)
