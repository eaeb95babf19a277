"""Uniform symmetric quantization without zero point."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import FLOAT, INT

MIN_BITS = 2
MAX_BITS = 16
SCALE_FLOOR = 1e-12
# quotients this close (relative) to a half-integer are treated as exact ties
TIE_RTOL = 1e-13


def check_bits(b: int) -> int:
    if isinstance(b, bool) or int(b) != b or not MIN_BITS <= b <= MAX_BITS:
        raise ConfigError(f"bit-width must be an integer in [{MIN_BITS}, {MAX_BITS}], got {b}")
    return int(b)


def code_bounds(b: int) -> tuple[int, int]:
    b = check_bits(b)
    return -(2 ** (b - 1)), 2 ** (b - 1) - 1


@dataclass(frozen=True)
class QuantSpec:
    """One uniform symmetric quantizer: bit-width plus step size."""

    bits: int
    scale: float

    def __post_init__(self):
        check_bits(self.bits)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ConfigError(f"scale must be positive and finite, got {self.scale}")

    @property
    def q_n(self) -> int:
        return -(2 ** (self.bits - 1))

    @property
    def q_p(self) -> int:
        return 2 ** (self.bits - 1) - 1


def scale_from_range(max_abs: float, b: int) -> float:
    """Step size ``2 * max_abs / (2**b - 1)``, floored at 1e-12 for an all-zero range.

    With this step, ``+max_abs`` lands on ``q_p + 0.5`` and is rounded up and
    then clamped back to ``q_p``.
    """
    b = check_bits(b)
    if max_abs < 0 or not np.isfinite(max_abs):
        raise ConfigError(f"range must be finite and non-negative, got {max_abs}")
    if max_abs == 0:
        return SCALE_FLOOR
    return 2.0 * float(max_abs) / (2**b - 1)


def round_half_away(z) -> np.ndarray:
    a = np.abs(z)
    r = np.floor(a)
    r = r + (a - r >= 0.5)
    return np.copysign(r, z)


def _snap_ties(z: np.ndarray) -> np.ndarray:
    """Pull quotients within a few ulps of ``k + 0.5`` onto the tie.

    ``max_abs / scale_from_range(max_abs, b)`` is mathematically
    ``q_p + 0.5`` but lands an ulp either side in floating point; without
    this, whether ``-max_abs`` reaches ``q_n`` would depend on the range's
    bit pattern.
    """
    half = np.round(z * 2.0) / 2.0
    tie = (half != np.round(half)) & (np.abs(z - half) <= TIE_RTOL * np.abs(z))
    return np.where(tie, half, z)


def raw_codes(v, scale: float) -> np.ndarray:
    """Rounded but unclamped codes ``round(v / scale)`` as int64."""
    return round_half_away(_snap_ties(np.asarray(v, dtype=FLOAT) / scale)).astype(np.int64)


def quantize(v, spec: QuantSpec) -> np.ndarray:
    return np.clip(raw_codes(v, spec.scale), spec.q_n, spec.q_p).astype(INT)


def dequantize(v_bar, spec: QuantSpec) -> np.ndarray:
    return np.asarray(v_bar, dtype=FLOAT) * spec.scale


def quant_loss(v, spec: QuantSpec) -> np.ndarray:
    """Elementwise ``|dequantize(quantize(v)) - v|``."""
    v = np.asarray(v, dtype=FLOAT)
    return np.abs(dequantize(quantize(v, spec), spec) - v)
