"""Dense-vector helpers, seeded random streams and a finite-difference oracle.

Vectors are plain 1-D ``float64`` numpy arrays. The helpers here only add the
length checks and the fixed summation order used for reductions, so traces are
reproducible bit for bit.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "as_vector",
    "add",
    "sub",
    "scale",
    "axpy",
    "dot",
    "norm_sq",
    "norm",
    "ordered_mean",
    "finite_diff_gradient",
    "derive_stream",
]


def as_vector(values) -> np.ndarray:
    """Copy ``values`` into a finite 1-D float64 array."""
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def add(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    _check_pair(a, b)
    return a + b


def sub(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    _check_pair(a, b)
    return a - b


def scale(alpha: float, a):
    return float(alpha) * np.asarray(a, float)


def axpy(alpha: float, a, b):
    """Return ``alpha * a + b``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    _check_pair(a, b)
    return alpha * a + b


def dot(a, b) -> float:
    """Inner product summed strictly left to right."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    _check_pair(a, b)
    if a.size == 0:
        return 0.0
    # cumsum is a sequential scan, unlike np.dot / np.sum (BLAS / pairwise)
    return float(np.cumsum(a * b)[-1])


def norm_sq(a) -> float:
    return dot(a, a)


def norm(a) -> float:
    return float(np.sqrt(norm_sq(a)))


def ordered_mean(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Average of ``vectors`` accumulated in index order.

    Used wherever the server aggregates client messages, so the result does not
    depend on the order in which clients finished.
    """
    if len(vectors) == 0:
        raise ValueError("cannot average an empty collection")
    acc = np.array(vectors[0], dtype=np.float64, copy=True)
    for v in vectors[1:]:
        _check_pair(acc, v)
        acc += v
    acc /= len(vectors)
    return acc


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field.

    Each coordinate is ``(f(x + h e_j) - f(x - h e_j)) / (2h)``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    probe = x.copy()
    for j in range(x.size):
        probe[j] = x[j] + h
        fp = float(f(probe))
        probe[j] = x[j] - h
        fm = float(f(probe))
        probe[j] = x[j]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value near coordinate {j}")
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


def derive_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_id)``.

    Streams are derived through ``SeedSequence`` so any number of clients can
    get their own generator without shared state.
    """
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream_id)])))
