"""Secure-side tiny inference engine."""

from .network import (
    BN_EPSILON, Layer, Network, build_network, forward, forward_layer, load_layer_weights,
)
from .ops import activate, avgpool, conv_out_dim, gemm, im2col, maxpool, softmax, top_k

__all__ = [
    "BN_EPSILON", "Layer", "Network", "build_network", "forward", "forward_layer",
    "load_layer_weights", "activate", "avgpool", "conv_out_dim", "gemm", "im2col",
    "maxpool", "softmax", "top_k",
]
