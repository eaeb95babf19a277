"""Weight range clamp with bias folding, and activation outlier clamping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ConfigError
from .quantizer import round_half_away
from .tensor import FLOAT, check_weight


@dataclass
class ClampedLayer:
    w_clamped: np.ndarray
    bias_fold: np.ndarray
    r_x: float


@dataclass(frozen=True)
class ActRange:
    r_x: float
    alpha: float
    n: int


def _check_range(r_x):
    if not (np.isfinite(r_x) and r_x > 0):
        raise ConfigError(f"activation range must be positive and finite, got {r_x}")


def clamp_weights(w_c, r_x: float) -> tuple[np.ndarray, float]:
    """Clip one output channel's weights to ``[-r_x, r_x]``.

    Returns the clipped weights and the constant ``b`` such that, for any
    input whose entries all lie in ``[-r_x, r_x]``,
    ``adder_conv(x, w_c) == adder_conv(x, clipped) + b``.
    """
    _check_range(r_x)
    w_c = np.asarray(w_c, dtype=FLOAT)
    excess = np.maximum(np.abs(w_c) - r_x, 0.0)
    return np.clip(w_c, -r_x, r_x), -float(excess.sum())


def clamp_layer(w, r_x: float) -> ClampedLayer:
    """``clamp_weights`` applied to every output channel of a rank-4 weight."""
    _check_range(r_x)
    w = np.asarray(w, dtype=FLOAT)
    check_weight(w)
    excess = np.maximum(np.abs(w) - r_x, 0.0)
    # one contiguous row per channel keeps each sum independent of channel order
    per_channel = np.ascontiguousarray(excess.reshape(-1, w.shape[3]).T)
    return ClampedLayer(np.clip(w, -r_x, r_x), -per_channel.sum(axis=1), float(r_x))


def _check_alpha(alpha):
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")


def activation_range(abs_values, alpha: float = 0.999) -> ActRange:
    """Range at the ``alpha`` quantile of the sorted absolute activations.

    The selected element is ``sorted[round(alpha * (n - 1))]`` with ties
    rounded away from zero, so ``alpha == 1`` picks the maximum.
    """
    _check_alpha(alpha)
    v = np.sort(np.abs(np.asarray(abs_values, dtype=FLOAT)).ravel())
    if v.size == 0:
        raise CalibrationError("empty calibration set")
    idx = int(round_half_away(alpha * (v.size - 1)))
    return ActRange(float(v[idx]), float(alpha), int(v.size))


def scaled_max_range(abs_values, alpha: float = 0.999) -> ActRange:
    """Alternative range ``max|x| * alpha``, kept for comparison only."""
    _check_alpha(alpha)
    v = np.abs(np.asarray(abs_values, dtype=FLOAT)).ravel()
    if v.size == 0:
        raise CalibrationError("empty calibration set")
    return ActRange(float(v.max() * alpha), float(alpha), int(v.size))


class RangeObserver:
    """Accumulates absolute activations from calibration batches.

    Observers merge by concatenation, so batches may be collected in
    parallel and combined afterwards with identical results.
    """

    def __init__(self):
        self._chunks: list[np.ndarray] = []

    def observe(self, x) -> None:
        self._chunks.append(np.abs(np.asarray(x, dtype=FLOAT)).ravel())

    def merge(self, other: "RangeObserver") -> "RangeObserver":
        out = RangeObserver()
        out._chunks = self._chunks + other._chunks
        return out

    @property
    def n(self) -> int:
        return int(sum(c.size for c in self._chunks))

    def values(self) -> np.ndarray:
        if not self._chunks:
            return np.zeros(0)
        return np.concatenate(self._chunks)

    def range(self, alpha: float = 0.999) -> ActRange:
        return activation_range(self.values(), alpha)


def clamp_activations(x, r_x: float) -> np.ndarray:
    _check_range(r_x)
    return np.clip(np.asarray(x, dtype=FLOAT), -r_x, r_x)
