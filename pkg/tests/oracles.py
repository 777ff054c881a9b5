"""Independent reference implementations used only by the tests.

None of these call into the code paths they check.
"""

import math

import numpy as np

MASK = (1 << 64) - 1


def splitmix64_ref(seed):
    """Textbook splitmix64 generator, scalar, yields 64-bit outputs."""
    x = seed
    while True:
        x = (x + 0x9E3779B97F4A7C15) & MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def keystream_ref(key, nonce, n):
    out = bytearray()
    for word in splitmix64_ref(key ^ nonce):
        if len(out) >= n:
            break
        out += word.to_bytes(8, "little")
    return bytes(out[:n])


def fnv1a64_ref(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) % (1 << 64)
    return h


def direct_conv(x, weights, filters, size, stride, pad, groups):
    """Nested-loop convolution in float64, no unrolling."""
    c, h, w = x.shape
    cg = c // groups
    fg = filters // groups
    wt = np.asarray(weights, dtype=np.float64).reshape(filters, cg, size, size)
    oh = (h + 2 * pad - size) // stride + 1
    ow = (w + 2 * pad - size) // stride + 1
    out = np.zeros((filters, oh, ow))
    for f in range(filters):
        g = f // fg
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(cg):
                    for kh in range(size):
                        for kw in range(size):
                            y = i * stride + kh - pad
                            xx = j * stride + kw - pad
                            if 0 <= y < h and 0 <= xx < w:
                                acc += float(x[g * cg + ci, y, xx]) * wt[f, ci, kh, kw]
                out[f, i, j] = acc
    return out


def fast_direct_conv(x, weights, filters, size, stride, pad, groups):
    """Same as :func:`direct_conv` but vectorised over the window only."""
    c, h, w = x.shape
    cg = c // groups
    fg = filters // groups
    wt = np.asarray(weights, dtype=np.float64).reshape(filters, cg, size, size)
    xp = np.pad(np.asarray(x, dtype=np.float64), ((0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - size) // stride + 1
    ow = (w + 2 * pad - size) // stride + 1
    out = np.zeros((filters, oh, ow))
    for f in range(filters):
        g = f // fg
        chans = xp[g * cg:(g + 1) * cg]
        for i in range(oh):
            for j in range(ow):
                out[f, i, j] = np.sum(chans[:, i * stride:i * stride + size, j * stride:j * stride + size] * wt[f])
    return out


def sliding_windows(x, size, stride, pad):
    """im2col by explicit enumeration of every (window, channel, kh, kw)."""
    c, h, w = x.shape
    oh = (h + 2 * pad - size) // stride + 1
    ow = (w + 2 * pad - size) // stride + 1
    m = np.zeros((c * size * size, oh * ow))
    for ch in range(c):
        for kh in range(size):
            for kw in range(size):
                row = (ch * size + kh) * size + kw
                for i in range(oh):
                    for j in range(ow):
                        y, xx = i * stride + kh - pad, j * stride + kw - pad
                        if 0 <= y < h and 0 <= xx < w:
                            m[row, i * ow + j] = x[ch, y, xx]
    return m


def bilinear_ref(img, out_h, out_w):
    """Corner-aligned bilinear resize written per output pixel."""
    c, h, w = img.shape
    out = np.zeros((c, out_h, out_w))
    for i in range(out_h):
        sy = 0.0 if out_h == 1 else i * (h - 1) / (out_h - 1)
        y0 = min(int(math.floor(sy)), h - 1)
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(out_w):
            sx = 0.0 if out_w == 1 else j * (w - 1) / (out_w - 1)
            x0 = min(int(math.floor(sx)), w - 1)
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for ch in range(c):
                top = img[ch, y0, x0] * (1 - fx) + img[ch, y0, x1] * fx
                bot = img[ch, y1, x0] * (1 - fx) + img[ch, y1, x1] * fx
                out[ch, i, j] = top * (1 - fy) + bot * fy
    return out


def param_lengths(kind, **p):
    """Per-layer parameter tensor lengths by enumeration of the named tensors."""
    if kind == "convolutional":
        f = p["filters"]
        tensors = {"biases": f, "weights": f * (p["c_in"] // p.get("groups", 1)) * p["size"] ** 2}
        if p.get("batch_normalize"):
            tensors.update(scales=f, rolling_mean=f, rolling_variance=f)
        return tensors
    if kind == "connected":
        return {"biases": p["outputs"], "weights": p["outputs"] * p["inputs"]}
    return {}


def rel_err(actual, expected):
    """Normwise relative error: max abs difference over max abs reference."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(float(np.max(np.abs(expected))), 1e-30)
    return float(np.max(np.abs(actual - expected))) / scale
