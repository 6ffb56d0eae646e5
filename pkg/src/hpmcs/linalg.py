"""Dense vector/matrix primitives, thresholding operators and support algebra.

Vectors and matrices are plain ``float64`` numpy arrays. The helpers
:func:`as_vector` and :func:`as_matrix` validate inputs at API boundaries;
everything else is a pure function returning a fresh array.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "as_vector",
    "as_matrix",
    "matvec",
    "matvec_transpose",
    "soft_threshold",
    "hard_threshold_top_s",
    "top_s_indices",
    "support",
    "Norms",
    "norms",
    "set_difference_size",
]


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Return `v` as a finite, non-empty 1-D float64 array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def matvec(U: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Compute ``U @ x``; raises ``ValueError`` on a dimension mismatch."""
    if x.shape[0] != U.shape[1]:
        raise ValueError(f"dimension mismatch: U is {U.shape}, x has length {x.shape[0]}")
    return U @ x


def matvec_transpose(U: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Compute ``U.T @ r``; raises ``ValueError`` on a dimension mismatch."""
    if r.shape[0] != U.shape[0]:
        raise ValueError(f"dimension mismatch: U is {U.shape}, r has length {r.shape[0]}")
    return U.T @ r


def soft_threshold(v: np.ndarray, lam: float) -> np.ndarray:
    """Proximal operator of ``lam * ||.||_1``.

    Each entry becomes ``sign(v_i) * max(|v_i| - lam, 0)``, so entries with
    ``|v_i| <= lam`` come out as exact zeros.

    Parameters
    ----------
    v : ndarray
        Input vector.
    lam : float
        Threshold, must be nonnegative.

    Returns
    -------
    ndarray
        Shrunk copy of `v`.
    """
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def top_s_indices(v: np.ndarray, s: int) -> np.ndarray:
    """Indices of the `s` largest-magnitude entries, sorted ascending.

    Ties at the boundary go to the lowest index: a stable sort on ``-|v|``
    keeps equal magnitudes in index order.
    """
    if not 1 <= s <= v.shape[0]:
        raise ValueError(f"s must lie in [1, {v.shape[0]}], got {s}")
    order = np.argsort(-np.abs(v), kind="stable")
    return np.sort(order[:s])


def hard_threshold_top_s(v: np.ndarray, s: int) -> np.ndarray:
    """Keep the `s` largest-magnitude entries of `v` and zero the rest."""
    keep = top_s_indices(v, s)
    out = np.zeros_like(v, dtype=np.float64)
    out[keep] = v[keep]
    return out


def support(v: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Sorted indices with ``|v_i| > tol``."""
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    return np.flatnonzero(np.abs(v) > tol).astype(np.int64)


class Norms(NamedTuple):
    l0: int
    l1: float
    l2: float
    linf: float


def norms(v: np.ndarray) -> Norms:
    a = np.abs(v)
    return Norms(
        l0=int(np.count_nonzero(v)),
        l1=float(a.sum()),
        l2=float(np.linalg.norm(v)),
        linf=float(a.max()) if a.size else 0.0,
    )


def set_difference_size(a, b) -> int:
    """Return ``|a \\ b|`` for two index sets."""
    return int(np.setdiff1d(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)).size)
