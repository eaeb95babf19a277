"""Dense tensor helpers.

Tensors are plain read-only numpy arrays in one of two modes: float64 or
int32.  Activations use the (H, W, c_in) layout and weights use
(d, d, c_in, c_out), so ``w[i, j, k, c]`` reads the same as the kernel
index order of the convolution loop nests.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

FLOAT = np.dtype("<f8")
INT = np.dtype("<i4")

_INT_MIN = np.iinfo(np.int32).min
_INT_MAX = np.iinfo(np.int32).max


def _freeze(a: np.ndarray) -> np.ndarray:
    if any(n < 1 for n in a.shape):
        raise ShapeError(f"all dims must be >= 1, got {a.shape}")
    a.setflags(write=False)
    return a


def float_tensor(data, shape=None) -> np.ndarray:
    """Build an immutable float64 tensor, optionally reshaping a flat sequence."""
    a = np.array(data, dtype=FLOAT)
    if shape is not None:
        a = _reshape(a, shape)
    return _freeze(a)


def int_tensor(data, shape=None) -> np.ndarray:
    """Build an immutable int32 tensor; values outside 32 bits are rejected."""
    src = np.asarray(data)
    if src.dtype.kind == "f":
        if not np.all(np.equal(np.round(src), src)):
            raise ValueError("integer tensor built from non-integral values")
    wide = src.astype(np.int64)
    if wide.size and (wide.min() < _INT_MIN or wide.max() > _INT_MAX):
        raise OverflowError("value not representable in 32 bits")
    a = wide.astype(INT)
    if shape is not None:
        a = _reshape(a, shape)
    return _freeze(a)


def _reshape(a: np.ndarray, shape) -> np.ndarray:
    shape = tuple(int(n) for n in shape)
    if a.size != int(np.prod(shape)):
        raise ShapeError(f"{a.size} elements cannot fill shape {shape}")
    return a.reshape(shape)


def mode(t: np.ndarray) -> str:
    if t.dtype == FLOAT:
        return "float"
    if t.dtype == INT:
        return "int"
    raise TypeError(f"unsupported tensor dtype {t.dtype}")


def at(t: np.ndarray, idx) -> float | int:
    """Return the element at a multi-index; negative or overflowing indices raise."""
    idx = tuple(idx)
    if len(idx) != t.ndim:
        raise IndexError(f"index of rank {len(idx)} for tensor of rank {t.ndim}")
    for i, n in zip(idx, t.shape):
        if not 0 <= i < n:
            raise IndexError(f"index {idx} out of bounds for shape {t.shape}")
    return t[idx].item()


def check_activation(x: np.ndarray) -> None:
    if x.ndim != 3:
        raise ShapeError(f"activation must be rank-3 (H, W, c_in), got shape {x.shape}")


def check_weight(w: np.ndarray) -> None:
    if w.ndim != 4:
        raise ShapeError(f"weight must be rank-4 (d, d, c_in, c_out), got shape {w.shape}")
    if w.shape[0] != w.shape[1]:
        raise ShapeError(f"kernel must be square, got {w.shape[0]}x{w.shape[1]}")


def channel_slice(w: np.ndarray, c: int) -> np.ndarray:
    """The d x d x c_in weights of output channel ``c``."""
    check_weight(w)
    if not 0 <= c < w.shape[3]:
        raise IndexError(f"output channel {c} out of range for c_out={w.shape[3]}")
    return w[:, :, :, c]
