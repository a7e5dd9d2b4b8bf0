"""Dense float64 tensors.

Arrays are plain ``numpy.ndarray`` objects in float64, row-major. The helpers
here add the strict shape checking the layers rely on: no broadcasting, every
mismatch raises :class:`ShapeError`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError

_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = _check_shape(shape)
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} values cannot fill shape {list(shape)}")
        arr = arr.reshape(shape)
    return arr


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ShapeError("shape must have at least one extent")
    if any(s < 1 for s in shape):
        raise ShapeError(f"extents must be >= 1, got {list(shape)}")
    return shape


def zeros(shape: Sequence[int]) -> np.ndarray:
    return np.zeros(_check_shape(shape), dtype=np.float64)


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_OPS)}")
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")
    return _OPS[op](np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b
