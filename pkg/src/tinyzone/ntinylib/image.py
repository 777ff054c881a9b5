"""Binary PPM (P6) reading/writing and bilinear resizing."""

from __future__ import annotations

import numpy as np

from ..errors import FormatError


def _header_tokens(data: bytes, count: int):
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("PPM header truncated")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode P6 bytes into an (h, w, 3) uint8 array."""
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM (magic {data[:2]!r})")
    tokens, pos = _header_tokens(data, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("PPM header has a non-numeric field") from None
    if maxval != 255:
        raise FormatError(f"PPM maxval must be 255, got {maxval}")
    if w < 1 or h < 1:
        raise FormatError(f"PPM dimensions {w}x{h} invalid")
    pos += 1  # single whitespace byte before the raster
    need = w * h * 3
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise FormatError(f"PPM raster truncated: {len(raster)} of {need} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_ppm(path, pixels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(pixels))


def _axis(n_in: int, n_out: int):
    # corner-aligned: first and last output samples hit the first and last input samples
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(pos.astype(np.int64), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize a (c, h, w) float image with corner-aligned bilinear sampling."""
    c, h, w = img.shape
    if (h, w) == (height, width):
        return img.copy()
    y0, y1, fy = _axis(h, height)
    x0, x1, fx = _axis(w, width)
    img = img.astype(np.float64)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bottom = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return top * (1 - fy) + bottom * fy


def load_image(path, dims=None) -> np.ndarray:
    """Read a P6 file as a (3, h, w) float32 tensor in [0, 1].

    ``dims`` is the network's (c, h, w); the image is resized to it.
    """
    with open(path, "rb") as fh:
        pixels = decode_ppm(fh.read())
    img = pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    if dims is not None:
        c, h, w = dims
        if c != 3:
            raise FormatError(f"network expects {c} channels, PPM images have 3")
        img = resize_bilinear(img, h, w)
    return np.clip(img, 0.0, 1.0).astype(np.float32)
