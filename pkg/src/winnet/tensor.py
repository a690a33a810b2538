"""Rank-4 float64 arrays in (n, c, h, w) order.

Tensors are plain C-contiguous ``numpy.ndarray`` objects; this module only
adds the validation the rest of the package relies on (rank 4, positive
dims, matching shapes) and a handful of named elementwise helpers.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

DTYPE = np.float64
_MAX_ELEMENTS = 2**40


class ShapeError(ValueError):
    """Raised for invalid tensor shapes or mismatched operands."""


class Shape(NamedTuple):
    n: int
    c: int
    h: int
    w: int

    @property
    def size(self) -> int:
        return self.n * self.c * self.h * self.w


def as_shape(shape) -> Shape:
    if len(shape) != 4:
        raise ShapeError(f"expected 4 dims (n, c, h, w), got {tuple(shape)}")
    s = Shape(*(int(d) for d in shape))
    if any(d < 1 for d in s):
        raise ShapeError(f"all dims must be >= 1, got {tuple(s)}")
    if s.size > _MAX_ELEMENTS:
        raise ShapeError(f"tensor of shape {tuple(s)} is too large")
    return s


def check(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Return ``x`` if it is a valid rank-4 tensor, else raise ShapeError."""
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a rank-4 array, got {getattr(x, 'shape', type(x))}")
    as_shape(x.shape)
    return x


def tensor(data, shape=None) -> np.ndarray:
    arr = np.array(data, dtype=DTYPE)
    if shape is not None:
        s = as_shape(shape)
        if arr.size != s.size:
            raise ShapeError(f"{arr.size} values cannot fill shape {tuple(s)}")
        arr = arr.reshape(s)
    return np.ascontiguousarray(check(arr))


def zeros(shape) -> np.ndarray:
    return np.zeros(as_shape(shape), dtype=DTYPE)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    check(a, "a")
    check(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a - b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return check(a) * s


def total(a: np.ndarray) -> float:
    return float(np.sum(check(a)))


def mean(a: np.ndarray) -> float:
    return float(np.mean(check(a)))


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(check(a))))
