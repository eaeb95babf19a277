"""Convolution kernels: the multiply reference, the l1 adder layer, and its
integer counterpart.

All three share zero padding and the output size rule
``h_out = (h - d + 2 * padding) // stride + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError
from .tensor import FLOAT, INT, check_activation, check_weight


@dataclass(frozen=True)
class ConvConfig:
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigError(f"stride must be a positive integer, got {self.stride}")
        if int(self.padding) != self.padding or self.padding < 0:
            raise ConfigError(f"padding must be a non-negative integer, got {self.padding}")

    def out_size(self, n: int, d: int) -> int:
        span = n - d + 2 * self.padding
        if span < 0:
            raise ShapeError(f"kernel {d} larger than padded input {n + 2 * self.padding}")
        return span // self.stride + 1


def output_shape(x_shape, w_shape, cfg: ConvConfig) -> tuple[int, int, int]:
    d = w_shape[0]
    return (cfg.out_size(x_shape[0], d), cfg.out_size(x_shape[1], d), w_shape[3])


def _windows(x: np.ndarray, d: int, cfg: ConvConfig) -> np.ndarray:
    """(h_out, w_out, d, d, c_in) view of every receptive field."""
    p = cfg.padding
    if p:
        x = np.pad(x, ((p, p), (p, p), (0, 0)))
    win = sliding_window_view(x, (d, d), axis=(0, 1))  # (H', W', c_in, d, d)
    win = win[:: cfg.stride, :: cfg.stride]
    return win.transpose(0, 1, 3, 4, 2)


def _prepare(x, w, cfg, dtype):
    x = np.asarray(x)
    w = np.asarray(w)
    check_activation(x)
    check_weight(w)
    if x.shape[2] != w.shape[2]:
        raise ShapeError(f"input has {x.shape[2]} channels, weights expect {w.shape[2]}")
    output_shape(x.shape, w.shape, cfg)
    return x.astype(dtype, copy=False), w.astype(dtype, copy=False)


def vanilla_conv(x, w, cfg: ConvConfig = ConvConfig()) -> np.ndarray:
    """Cross-correlation ``Y(m,n,c) = sum X(m+i,n+j,k) * W(i,j,k,c)``."""
    x, w = _prepare(x, w, cfg, FLOAT)
    win = _windows(x, w.shape[0], cfg)
    return np.tensordot(win, w, axes=([2, 3, 4], [0, 1, 2]))


def _l1_conv(win: np.ndarray, w: np.ndarray, acc_dtype) -> np.ndarray:
    h_out, w_out = win.shape[:2]
    out = np.empty((h_out, w_out, w.shape[3]), dtype=acc_dtype)
    for c in range(w.shape[3]):
        out[:, :, c] = -np.abs(win - w[:, :, :, c]).sum(axis=(2, 3, 4), dtype=acc_dtype)
    return out


def adder_conv(x, w, cfg: ConvConfig = ConvConfig()) -> np.ndarray:
    """Negated l1 distance between each receptive field and each filter.

    Every output element is <= 0.
    """
    x, w = _prepare(x, w, cfg, FLOAT)
    return _l1_conv(_windows(x, w.shape[0], cfg), w, FLOAT)


def quantized_adder_conv(x_bar, w_bar, cfg: ConvConfig = ConvConfig(), wide: bool = False) -> np.ndarray:
    """Integer adder convolution with 64-bit accumulation.

    The result is narrowed to int32 and OverflowError is raised when it does
    not fit; pass ``wide=True`` to get the int64 accumulator instead.
    """
    x_bar = np.asarray(x_bar)
    w_bar = np.asarray(w_bar)
    for t in (x_bar, w_bar):
        if t.dtype.kind not in "iu":
            raise TypeError(f"integer tensors required, got {t.dtype}")
    x, w = _prepare(x_bar, w_bar, cfg, np.int64)
    acc = _l1_conv(_windows(x, w.shape[0], cfg), w, np.int64)
    if wide:
        return acc
    if acc.size and acc.min() < np.iinfo(np.int32).min:
        raise OverflowError("adder accumulator exceeds the int32 output range")
    return acc.astype(INT)
