"""Normal-world client library."""

from ..weightfile import WeightFile
from .cfg import load_cfg, parse_cfg, serialize_cfg
from .client import (
    build_model, chunk_count, classify, encrypt_weights, fetch_result, run_inference, send_input,
    stream_weights,
)
from .image import decode_ppm, encode_ppm, load_image, resize_bilinear, write_ppm

__all__ = [
    "WeightFile", "load_cfg", "parse_cfg", "serialize_cfg", "build_model", "chunk_count", "classify",
    "encrypt_weights", "fetch_result", "run_inference", "send_input", "stream_weights",
    "decode_ppm", "encode_ppm", "load_image", "resize_bilinear", "write_ppm",
]
