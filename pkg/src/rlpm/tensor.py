"""Tensor helpers.

Tensors throughout the package are plain numpy arrays: 64-bit floats,
row-major (C order). These helpers coerce inputs into that form and
enforce the finiteness contract of the public operations.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericsError, ShapeError


def as_tensor(values, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Coerce ``values`` to a float64 C-contiguous array, optionally reshaped."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        if arr.size != int(np.prod(shape)):
            raise ShapeError(
                f"cannot view {arr.size} values as shape {tuple(shape)}"
            )
        arr = arr.reshape(shape)
    return arr


def require_finite(arr: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {context}")
    return arr


def require_shape(arr: np.ndarray, shape: tuple[int, ...], context: str) -> np.ndarray:
    if tuple(arr.shape) != tuple(shape):
        raise ShapeError(f"{context}: expected shape {tuple(shape)}, got {tuple(arr.shape)}")
    return arr


def frozen(arr: np.ndarray) -> np.ndarray:
    """Return ``arr`` as float64 with writes disabled (shared-safe)."""
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out
