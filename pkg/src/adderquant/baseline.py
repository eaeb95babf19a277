"""Single shared-scale quantization of an adder layer.

This is the scheme the grouped pipeline improves on: one step size for
all weights and activations of a layer, taken from either range.  It is
written independently of ``pipeline`` so the two can check each other.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .kernels import ConvConfig, quantized_adder_conv
from .quantizer import QuantSpec, dequantize, quantize, scale_from_range

SOURCES = ("weights", "activations")


def shared_scale(w, x_range: float, b: int, source: str) -> float:
    """Step size from ``max|W|`` (weights) or from the activation range."""
    if source == "weights":
        return scale_from_range(float(np.abs(w).max()), b)
    if source == "activations":
        return scale_from_range(float(x_range), b)
    raise ConfigError(f"scale source must be one of {SOURCES}, got {source!r}")


def shared_scale_adder(x, w, b: int, scale: float, cfg: ConvConfig = ConvConfig(), bias=None) -> np.ndarray:
    spec = QuantSpec(b, scale)
    acc = quantized_adder_conv(quantize(x, spec), quantize(w, spec), cfg)
    y = dequantize(acc, spec)
    if bias is not None:
        y = y + np.asarray(bias, dtype=np.float64)
    return y
