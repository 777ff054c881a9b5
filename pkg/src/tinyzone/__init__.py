"""tinyzone: a desk-scale simulator of TrustZone-style secure DNN inference."""

__version__ = "0.1.0"
