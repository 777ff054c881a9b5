"""Kernels of the secure-side engine: im2col, gemm, activations, softmax, top-k.

Tensors are float32 numpy arrays in CHW order. Only arithmetic numpy calls
are used; every transcendental goes through tinylibm.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from ..tinylibm import t_exp

F32 = np.float32
LEAKY_SLOPE = F32(0.1)


def conv_out_dim(extent: int, size: int, stride: int, pad: int) -> int:
    return (extent + 2 * pad - size) // stride + 1


def im2col(x: np.ndarray, size: int, stride: int, pad: int, out: np.ndarray | None = None) -> np.ndarray:
    """Unroll sliding windows of ``x`` (c, h, w) into a (c*size*size, oh*ow) matrix.

    Rows run over (channel, kh, kw), columns over output positions row-major.
    Reads falling in the padding are zero.
    """
    c, h, w = x.shape
    if size < 1 or stride < 1 or h + 2 * pad < size or w + 2 * pad < size:
        raise ShapeError(f"im2col: window {size}/stride {stride}/pad {pad} degenerate on {h}x{w}")
    oh = conv_out_dim(h, size, stride, pad)
    ow = conv_out_dim(w, size, stride, pad)
    rows = c * size * size
    if out is None:
        cols = np.empty((rows, oh * ow), dtype=F32)
    else:
        cols = out[: rows * oh * ow].reshape(rows, oh * ow)
    if pad:
        padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=F32)
        padded[:, pad:pad + h, pad:pad + w] = x
    else:
        padded = x
    view = cols.reshape(c, size, size, oh, ow)
    hi = stride * (oh - 1) + 1
    wi = stride * (ow - 1) + 1
    for kh in range(size):
        for kw in range(size):
            view[:, kh, kw] = padded[:, kh:kh + hi:stride, kw:kw + wi:stride]
    return cols


def gemm(a: np.ndarray, b: np.ndarray, beta: float, c: np.ndarray) -> np.ndarray:
    """In-place ``c <- a @ b + beta * c`` with a fixed k-innermost accumulation order.

    Each output element sums its K products strictly in k order, so results are
    bitwise repeatable and independent of any BLAS threading.
    """
    m, k = a.shape
    k2, n = b.shape
    if k != k2 or c.shape != (m, n):
        raise ShapeError(f"gemm: cannot combine {a.shape} x {b.shape} into {c.shape}")
    if beta == 0:
        c.fill(0)
    elif beta != 1:
        c *= F32(beta)
    for i in range(k):
        c += a[:, i:i + 1] * b[i:i + 1, :]
    return c


def activate(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        np.maximum(x, F32(0), out=x)
    elif kind == "leaky":
        np.multiply(x, LEAKY_SLOPE, out=x, where=x < 0)
    elif kind != "linear":
        raise ShapeError(f"unknown activation {kind!r}")
    return x


def softmax(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over every element of ``x``."""
    flat = x.reshape(-1)
    top = float(flat.max())
    e = [t_exp(float(v) - top) for v in flat]
    total = sum(e)
    return np.array([v / total for v in e], dtype=F32).reshape(x.shape)


def maxpool(x: np.ndarray, size: int, stride: int, pad: int) -> np.ndarray:
    c, h, w = x.shape
    oh = conv_out_dim(h, size, stride, pad)
    ow = conv_out_dim(w, size, stride, pad)
    if pad:
        padded = np.full((c, h + 2 * pad, w + 2 * pad), -np.inf, dtype=F32)
        padded[:, pad:pad + h, pad:pad + w] = x
    else:
        padded = x
    out = np.full((c, oh, ow), -np.inf, dtype=F32)
    hi = stride * (oh - 1) + 1
    wi = stride * (ow - 1) + 1
    for kh in range(size):
        for kw in range(size):
            np.maximum(out, padded[:, kh:kh + hi:stride, kw:kw + wi:stride], out=out)
    return out


def avgpool(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return (x.reshape(c, h * w).sum(axis=1, dtype=F32) / F32(h * w)).reshape(c, 1, 1)


def top_k(probs, labels: list[str], k: int) -> list[tuple[str, float]]:
    """The ``k`` most probable labels, descending; ties keep index order."""
    values = [float(p) for p in np.asarray(probs).reshape(-1)]
    if len(labels) != len(values):
        raise DomainError(f"{len(labels)} labels for {len(values)} probabilities")
    if not 1 <= k <= len(values):
        raise DomainError(f"k={k} outside [1, {len(values)}]")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return [(labels[i], values[i]) for i in order[:k]]
