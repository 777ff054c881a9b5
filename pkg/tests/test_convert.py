import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generic_models import random_generic_model, run_engine
from oracles import rel_err
from tinyzone.convert import (
    CaffeIR, GenericModel, Op, convert, fold_to_tinylib, load_manifest, lower_to_caffe, read_tensors,
    reference_forward, save_manifest, write_tensors,
)
from tinyzone.errors import ConversionError, FormatError, StructureError


def f32(*v):
    return np.asarray(v, dtype=np.float32)


def scalar_model():
    return GenericModel((1, 1, 1), [
        Op("conv2d", {}, {"weight": f32(1).reshape(1, 1, 1, 1), "bias": f32(1)}),
        Op("batchnorm2d", {}, {"weight": f32(2), "bias": f32(0), "running_mean": f32(3), "running_var": f32(1)}),
    ])


class TestLower:
    def test_conv_bn_relu(self, rng):
        model = GenericModel((2, 3, 3), [
            Op("conv2d", {}, {"weight": rng.random((4, 2, 3, 3)), "bias": rng.random(4)}),
            Op("batchnorm2d", {}, {"weight": np.ones(4), "bias": np.zeros(4),
                                   "running_mean": np.zeros(4), "running_var": np.ones(4)}),
            Op("relu"),
        ])
        ir = lower_to_caffe(model)
        assert [op.kind for op in ir.ops] == ["convolution", "batchnorm", "scale", "relu"]
        assert set(ir.ops[1].tensors) == {"mean", "variance"}
        assert set(ir.ops[2].tensors) == {"gamma", "beta"}

    def test_softmax_only(self):
        ir = lower_to_caffe(GenericModel((3, 1, 1), [Op("softmax")]))
        assert [op.kind for op in ir.ops] == ["softmax"]

    def test_unsupported(self):
        with pytest.raises(ConversionError, match="lstm"):
            lower_to_caffe(GenericModel((1, 1, 1), [Op("lstm")]))

    def test_dropout_dropped(self):
        assert lower_to_caffe(GenericModel((1, 1, 1), [Op("dropout"), Op("softmax")])).ops[0].kind == "softmax"

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_idempotent(self, seed):
        ir = lower_to_caffe(random_generic_model(np.random.default_rng(seed)))
        again = lower_to_caffe(ir)
        assert [op.kind for op in again.ops] == [op.kind for op in ir.ops]
        assert all(a is b for a, b in zip(again.ops, ir.ops))


class TestFold:
    def test_scalar_example(self):
        model = scalar_model()
        spec, weights = convert(model)
        layer = spec.layers[0]
        assert (layer.kind, layer.batch_normalize) == ("convolutional", 1)
        (packed,) = weights.arrays()
        beta, gamma, mean, var, w = packed
        assert (float(mean), float(gamma), float(beta), float(var), float(w)) == (2.0, 2.0, 0.0, 1.0, 1.0)
        x = f32(4).reshape(1, 1, 1)
        assert float(reference_forward(model, x, eps=0.0).item()) == 4.0
        assert float(run_engine(spec, weights, x).item()) == pytest.approx(4.0, rel=1e-6)

    def test_fused_activation(self):
        model = scalar_model()
        model.ops.append(Op("leaky_relu", {"negative_slope": 0.1}))
        spec, _ = convert(model)
        assert [layer.kind for layer in spec.layers] == ["convolutional"]
        assert spec.layers[0].activation == "leaky"

    def test_conv_without_bias(self, rng):
        model = GenericModel((2, 4, 4), [Op("conv2d", {"padding": 1}, {"weight": rng.random((3, 2, 3, 3))})])
        spec, weights = convert(model)
        assert spec.layers[0].batch_normalize == 0
        (packed,) = weights.arrays()
        biases, w = packed[:3], packed[3:]
        assert not biases.any()
        assert np.array_equal(w, model.ops[0].tensors["weight"].astype(np.float32).ravel())

    def test_dangling_scale(self):
        ir = CaffeIR((1, 1, 1), [Op("scale", {}, {"gamma": f32(1), "beta": f32(0)})])
        with pytest.raises(StructureError):
            fold_to_tinylib(ir)

    def test_batchnorm_without_scale(self):
        ir = lower_to_caffe(scalar_model())
        ir.ops.pop()
        with pytest.raises(StructureError):
            fold_to_tinylib(ir)

    def test_unsupported_leaky_slope(self):
        model = scalar_model()
        model.ops.append(Op("leaky_relu", {"negative_slope": 0.2}))
        with pytest.raises(ConversionError):
            convert(model)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        model = random_generic_model(rng)
        x = rng.random(model.input).astype(np.float32)
        spec, weights = convert(model)
        assert rel_err(run_engine(spec, weights, x), reference_forward(model, x)) <= 1e-5


class TestManifest:
    def test_round_trip(self, tmp_path, rng):
        model = random_generic_model(rng)
        save_manifest(model, tmp_path / "m.json")
        loaded = load_manifest(tmp_path / "m.json")
        assert loaded.input == model.input
        assert [(op.kind, op.attrs) for op in loaded.ops] == [(op.kind, op.attrs) for op in model.ops]
        for a, b in zip(loaded.ops, model.ops):
            assert a.tensors.keys() == b.tensors.keys()
            for k in a.tensors:
                assert np.array_equal(a.tensors[k], b.tensors[k])

    def test_tensor_file(self, tmp_path, rng):
        tensors = {"a": rng.random((2, 3)).astype(np.float32), "b": np.zeros(0, np.float32)}
        write_tensors(tmp_path / "t.bin", tensors)
        back = read_tensors(tmp_path / "t.bin")
        assert back["a"].shape == (2, 3) and np.array_equal(back["a"], tensors["a"])
        assert back["b"].size == 0

    def test_truncated_tensor_file(self, tmp_path, rng):
        write_tensors(tmp_path / "t.bin", {"a": rng.random(10).astype(np.float32)})
        data = (tmp_path / "t.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(data[:-4])
        with pytest.raises(FormatError):
            read_tensors(tmp_path / "t.bin")

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text('{"ops": []}')
        with pytest.raises(FormatError):
            load_manifest(tmp_path / "m.json")
