"""Flat parameter-vector arithmetic shared by every other module.

Parameter vectors are 1-D float64 numpy arrays, frozen read-only once they
become part of trajectory state. All operations are pure.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


class DimensionError(ValueError):
    """Operands of an elementwise operation have mismatched lengths."""


class DegenerateVectorError(ValueError):
    """A zero-norm vector where a direction is required."""


class NonFiniteError(ValueError):
    """NaN/Inf reached a place that requires finite values."""


def freeze(x: np.ndarray) -> np.ndarray:
    """Mark an array read-only and return it (no copy)."""
    x.flags.writeable = False
    return x


def as_params(values: Sequence[float] | np.ndarray, *, check_finite: bool = True) -> np.ndarray:
    """Build a parameter vector: 1-D float64, read-only copy of `values`.

    Raises NonFiniteError if `check_finite` and any element is NaN/Inf.
    Vectors produced by extrapolation may legitimately contain non-finite
    values; build those with check_finite=False and test with is_finite().
    """
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if arr.size == 0:
        raise ValueError("parameter vector must be non-empty")
    if check_finite and not np.all(np.isfinite(arr)):
        raise NonFiniteError("parameter vector contains NaN/Inf")
    return freeze(arr)


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return a*x + y elementwise; inputs unmodified."""
    _check_same_length(x, y)
    return a * x + y


def l2_norm(x: np.ndarray) -> float:
    """Euclidean norm."""
    return float(np.linalg.norm(x))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """(a.b) / (|a||b|), in [-1, 1].

    Raises DegenerateVectorError on a zero-norm input rather than silently
    returning 0.
    """
    _check_same_length(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero-norm vector")
    s = float(np.dot(a, b) / (na * nb))
    # rounding can push |s| a hair past 1
    return max(-1.0, min(1.0, s))


def is_finite(x: np.ndarray) -> bool:
    """True iff every element is finite."""
    return bool(np.all(np.isfinite(x)))
