"""Two-stage model conversion.

Framework-style ops (conv2d, batchnorm2d, linear, ...) are first lowered to a
Caffe-like IR in which batch normalisation is split into ``batchnorm`` (mean,
variance) followed by ``scale`` (gamma, beta). The IR is then folded into
tinylib layers: a convolution with its batchnorm/scale/relu tail becomes one
``convolutional`` layer with ``batch_normalize=1``.

The tinylib layer normalises before adding its bias::

    y = scales * (conv(x) - rolling_mean) / sqrt(rolling_variance + eps) + biases

so a convolution bias ``b`` is folded as ``rolling_mean = mu - b``.

Generic models are stored as a JSON manifest plus a sidecar tensor file
(``TZTB``: u32 count, then per tensor u16 name length, name, u32 ndim, u32
dims, followed by all float32 data in TOC order; little-endian throughout).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConversionError, FormatError, StructureError
from .netspec import LayerSpec, NetworkSpec
from .stinylib.network import BN_EPSILON
from .weightfile import WeightFile

GENERIC_KINDS = ("conv2d", "batchnorm2d", "linear", "maxpool2d", "avgpool2d", "relu",
                 "leaky_relu", "softmax", "dropout")
IR_KINDS = ("convolution", "batchnorm", "scale", "pooling", "innerproduct", "relu", "softmax")
LEAKY_SLOPE = 0.1


@dataclass
class Op:
    kind: str
    attrs: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)


@dataclass
class GenericModel:
    input: tuple[int, int, int]
    ops: list[Op]


@dataclass
class CaffeIR:
    input: tuple[int, int, int]
    ops: list[Op]


def _f32(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float32)


def _lower_op(op: Op) -> list[Op]:
    k, a, t = op.kind, op.attrs, op.tensors
    if k in IR_KINDS:
        return [op]
    if k == "conv2d":
        tensors = {"weight": _f32(t["weight"])}
        if t.get("bias") is not None:
            tensors["bias"] = _f32(t["bias"])
        return [Op("convolution", dict(a), tensors)]
    if k == "batchnorm2d":
        return [Op("batchnorm", {}, {"mean": _f32(t["running_mean"]), "variance": _f32(t["running_var"])}),
                Op("scale", {}, {"gamma": _f32(t["weight"]), "beta": _f32(t["bias"])})]
    if k == "linear":
        return [Op("innerproduct", {}, {"weight": _f32(t["weight"]), "bias": _f32(t["bias"])})]
    if k == "maxpool2d":
        return [Op("pooling", {"pool": "max", "kernel": a["kernel"], "stride": a.get("stride", a["kernel"]),
                               "pad": a.get("padding", 0)})]
    if k == "avgpool2d":
        return [Op("pooling", {"pool": "ave", "global": True})]
    if k == "relu":
        return [Op("relu", {"negative_slope": 0.0})]
    if k == "leaky_relu":
        return [Op("relu", {"negative_slope": float(a.get("negative_slope", LEAKY_SLOPE))})]
    if k == "softmax":
        return [Op("softmax")]
    if k == "dropout":
        return []
    raise ConversionError(f"unsupported op {k!r}")


def lower_to_caffe(model: GenericModel | CaffeIR) -> CaffeIR:
    """Layer and weight transition into the split Caffe form. IR ops pass through."""
    ops = []
    for op in model.ops:
        ops.extend(_lower_op(op))
    return CaffeIR(tuple(model.input), ops)


def _activation(op: Op | None) -> str:
    if op is None or op.kind != "relu":
        return "linear"
    slope = op.attrs.get("negative_slope", 0.0)
    if slope == 0:
        return "relu"
    if abs(slope - LEAKY_SLOPE) < 1e-12:
        return "leaky"
    raise ConversionError(f"relu negative_slope {slope} not supported (only 0 or {LEAKY_SLOPE})")


def fold_to_tinylib(ir: CaffeIR) -> tuple[NetworkSpec, WeightFile]:
    c, h, w = ir.input
    spec = NetworkSpec(c, h, w)
    arrays = []
    ops = ir.ops
    i = 0

    def peek(j):
        return ops[j] if j < len(ops) else None

    while i < len(ops):
        op = ops[i]
        if op.kind == "convolution":
            weight = _f32(op.tensors["weight"])
            filters, _, k, _ = weight.shape
            bias = _f32(op.tensors.get("bias", np.zeros(filters)))
            layer = LayerSpec("convolutional", filters=filters, size=k,
                              stride=op.attrs.get("stride", 1), pad=op.attrs.get("padding", 0),
                              groups=op.attrs.get("groups", 1))
            i += 1
            nxt = peek(i)
            if nxt is not None and nxt.kind == "batchnorm":
                sc = peek(i + 1)
                if sc is None or sc.kind != "scale":
                    raise StructureError(f"op {i}: batchnorm must be followed by scale")
                layer.batch_normalize = 1
                arrays.append([_f32(sc.tensors["beta"]), _f32(sc.tensors["gamma"]),
                               _f32(nxt.tensors["mean"]) - bias, _f32(nxt.tensors["variance"]),
                               weight.ravel()])
                i += 2
            else:
                arrays.append([bias, weight.ravel()])
            if peek(i) is not None and peek(i).kind == "relu":
                layer.activation = _activation(peek(i))
                i += 1
            spec.layers.append(layer)
        elif op.kind == "innerproduct":
            weight = _f32(op.tensors["weight"])
            layer = LayerSpec("connected", outputs=weight.shape[0])
            arrays.append([_f32(op.tensors["bias"]), weight.ravel()])
            i += 1
            if peek(i) is not None and peek(i).kind == "relu":
                layer.activation = _activation(peek(i))
                i += 1
            spec.layers.append(layer)
        elif op.kind == "pooling":
            if op.attrs.get("pool") == "max":
                spec.layers.append(LayerSpec("maxpool", size=op.attrs["kernel"], stride=op.attrs["stride"],
                                             pad=op.attrs.get("pad", 0)))
            elif op.attrs.get("global"):
                spec.layers.append(LayerSpec("avgpool"))
            else:
                raise ConversionError("only global average pooling is supported")
            i += 1
        elif op.kind == "softmax":
            spec.layers.append(LayerSpec("softmax"))
            i += 1
        elif op.kind == "batchnorm":
            raise StructureError(f"op {i}: batchnorm without a preceding convolution")
        elif op.kind == "scale":
            raise StructureError(f"op {i}: scale without a preceding batchnorm")
        elif op.kind == "relu":
            raise StructureError(f"op {i}: relu must follow a convolution or innerproduct")
        else:
            raise ConversionError(f"unsupported IR op {op.kind!r}")
    weights = WeightFile.from_arrays([np.concatenate(parts) for parts in arrays])
    return spec, weights


def convert(model: GenericModel) -> tuple[NetworkSpec, WeightFile]:
    return fold_to_tinylib(lower_to_caffe(model))


# reference evaluation of the unconverted model, float64, direct loops

def _ref_conv(x, weight, bias, stride, pad, groups):
    c, h, w = x.shape
    f, cg, k, _ = weight.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.zeros((f, oh, ow))
    fg = f // groups
    for o in range(f):
        g = o // fg
        for i in range(oh):
            for j in range(ow):
                win = xp[g * cg:(g + 1) * cg, i * stride:i * stride + k, j * stride:j * stride + k]
                out[o, i, j] = np.sum(win * weight[o])
    if bias is not None:
        out += bias[:, None, None]
    return out


def reference_forward(model: GenericModel, x: np.ndarray, eps: float = BN_EPSILON) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    for op in model.ops:
        k, a, t = op.kind, op.attrs, op.tensors
        if k == "conv2d":
            bias = t.get("bias")
            x = _ref_conv(x, np.asarray(t["weight"], np.float64), None if bias is None else np.asarray(bias, np.float64),
                          a.get("stride", 1), a.get("padding", 0), a.get("groups", 1))
        elif k == "batchnorm2d":
            mu, var = np.asarray(t["running_mean"], np.float64), np.asarray(t["running_var"], np.float64)
            gamma, beta = np.asarray(t["weight"], np.float64), np.asarray(t["bias"], np.float64)
            x = gamma[:, None, None] * (x - mu[:, None, None]) / np.sqrt(var[:, None, None] + eps) + beta[:, None, None]
        elif k == "linear":
            x = (np.asarray(t["weight"], np.float64) @ x.reshape(-1) + np.asarray(t["bias"], np.float64))
            x = x.reshape(-1, 1, 1)
        elif k == "maxpool2d":
            size, stride, pad = a["kernel"], a.get("stride", a["kernel"]), a.get("padding", 0)
            c, h, w = x.shape
            xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
            oh, ow = (h + 2 * pad - size) // stride + 1, (w + 2 * pad - size) // stride + 1
            x = np.array([[[xp[ch, i * stride:i * stride + size, j * stride:j * stride + size].max()
                            for j in range(ow)] for i in range(oh)] for ch in range(c)])
        elif k == "avgpool2d":
            x = x.mean(axis=(1, 2)).reshape(-1, 1, 1)
        elif k == "relu":
            x = np.maximum(x, 0)
        elif k == "leaky_relu":
            x = np.where(x > 0, x, a.get("negative_slope", LEAKY_SLOPE) * x)
        elif k == "softmax":
            e = np.exp(x - x.max())
            x = e / e.sum()
        elif k == "dropout":
            pass
        else:
            raise ConversionError(f"unsupported op {k!r}")
    return x


# manifest + sidecar tensor file

_TB_MAGIC = b"TZTB"


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    head = [_TB_MAGIC, struct.pack("<I", len(tensors))]
    body = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        body.append(arr.tobytes())
    Path(path).write_bytes(b"".join(head + body))


def read_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != _TB_MAGIC:
        raise FormatError(f"{path}: bad tensor file magic {data[:4]!r}")
    try:
        (count,) = struct.unpack_from("<I", data, 4)
        pos = 8
        toc = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (ndim,) = struct.unpack_from("<I", data, pos)
            shape = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            toc.append((name, shape))
        out = {}
        for name, shape in toc:
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(data):
                raise FormatError(f"{path}: tensor {name!r} truncated")
            out[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * size
    except struct.error as exc:
        raise FormatError(f"{path}: truncated table of contents") from exc
    return out


def save_manifest(model: GenericModel, path) -> None:
    path = Path(path)
    tensor_file = path.with_suffix(".bin")
    tensors = {}
    ops = []
    for i, op in enumerate(model.ops):
        refs = {}
        for name, arr in op.tensors.items():
            key = f"op{i}.{name}"
            tensors[key] = arr
            refs[name] = key
        ops.append({"kind": op.kind, "attrs": op.attrs, "tensor_refs": refs})
    c, h, w = model.input
    manifest = {"input": {"c": c, "h": h, "w": w}, "tensor_file": tensor_file.name, "ops": ops}
    path.write_text(json.dumps(manifest, indent=2))
    write_tensors(tensor_file, tensors)


def load_manifest(path) -> GenericModel:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
        dims = manifest["input"]
        tensor_file = path.parent / manifest.get("tensor_file", path.with_suffix(".bin").name)
        tensors = read_tensors(tensor_file) if any(op.get("tensor_refs") for op in manifest["ops"]) else {}
        ops = []
        for entry in manifest["ops"]:
            refs = entry.get("tensor_refs", {})
            missing = [r for r in refs.values() if r not in tensors]
            if missing:
                raise FormatError(f"{path}: tensors {missing} not found in {tensor_file.name}")
            ops.append(Op(entry["kind"], dict(entry.get("attrs", {})), {n: tensors[r] for n, r in refs.items()}))
        return GenericModel((dims["c"], dims["h"], dims["w"]), ops)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from exc
