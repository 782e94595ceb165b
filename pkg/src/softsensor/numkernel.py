"""Dense linear-algebra primitives shared by the design methods.

Thin, contract-checked wrappers over LAPACK via numpy: symmetric
eigendecomposition with descending eigenvalues, SVD, and minimum-norm
least squares. All inputs are validated for finiteness so failures
surface here rather than deep inside a fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SymEigen:
    values: np.ndarray   # descending
    vectors: np.ndarray  # column-orthonormal, vectors[:, i] pairs with values[i]


@dataclass(frozen=True)
class Svd:
    u: np.ndarray
    s: np.ndarray  # descending, nonnegative
    vt: np.ndarray


def eigh(S: np.ndarray) -> SymEigen:
    """Spectral decomposition of a symmetric matrix, eigenvalues descending."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise DataError("eigh: non-finite entries")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError("eigh: input must be square")
    if np.max(np.abs(S - S.T)) > 1e-10:
        raise DataError("eigh: input is not symmetric within 1e-10")
    w, v = np.linalg.eigh(S)
    return SymEigen(values=w[::-1].copy(), vectors=v[:, ::-1].copy())


def svd(A: np.ndarray) -> Svd:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise DataError("svd: non-finite entries")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    return Svd(u=u, s=s, vt=vt)


def solve_ls(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-squares solution of A x = b; minimum-norm when rank-deficient."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise DataError("solve_ls: non-finite entries")
    if A.ndim == 1:
        A = A[:, None]
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x
