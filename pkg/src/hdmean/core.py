"""Numeric foundations: validated containers, SPD factorizations, seeded streams.

Data matrices and symmetric matrices are plain ``numpy`` arrays; the
``as_*`` helpers validate them at module boundaries so the statistics code
can assume finite, correctly shaped input.
"""

from __future__ import annotations

from dataclasses import dataclass
from os import PathLike

import numpy as np
import scipy.linalg

from .exceptions import DimensionMismatch, NotPositiveDefinite, NotPSD

PIVOT_RTOL = 1e-12
PSD_RTOL = 1e-8


def as_data_matrix(X, min_rows: int = 2) -> np.ndarray:
    """Return ``X`` as a finite float64 array of shape (n, p) with n >= min_rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"data matrix must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < min_rows or p < 1:
        raise DimensionMismatch(f"data matrix needs n >= {min_rows} and p >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data matrix contains non-finite entries")
    return X


def as_symmetric(A, atol: float = 0.0) -> np.ndarray:
    """Return a square float array, symmetrized from its lower triangle.

    Storing a single triangle makes symmetry exact. When ``atol`` is
    positive, inputs whose two triangles differ by more than ``atol`` are
    rejected rather than silently overwritten.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(np.diag(A))):
        raise ValueError("matrix diagonal contains non-finite entries")
    if atol > 0 and np.max(np.abs(A - A.T), initial=0.0) > atol:
        raise ValueError("matrix is not symmetric within tolerance")
    lower = np.tril(A)
    return lower + np.tril(A, -1).T


def cholesky_spd(A) -> np.ndarray:
    """Lower-triangular ``L`` with ``A = L @ L.T``.

    Raises
    ------
    NotPositiveDefinite
        If the factorization breaks down or a squared pivot falls below
        ``1e-12`` times the largest diagonal entry.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    scale = np.max(np.diag(A), initial=0.0)
    if scale <= 0:
        raise NotPositiveDefinite("matrix has no positive diagonal entry")
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.diag(L) ** 2
    if np.any(pivots <= PIVOT_RTOL * scale):
        j = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {j} = {pivots[j]:.3e} is degenerate")
    return L


def spd_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``."""
    L = cholesky_spd(A)
    return scipy.linalg.cho_solve((L, True), np.asarray(b, dtype=float))


def ridge_solve(A, b) -> np.ndarray:
    """Solve ``A x = b``, adding ``1e-8 * trace(A) / p`` to the diagonal if A is not PD.

    Estimated precision blocks need not be positive definite after
    symmetrization; this is the fallback used by every subset solve.
    """
    A = np.asarray(A, dtype=float)
    try:
        return spd_solve(A, b)
    except NotPositiveDefinite:
        p = A.shape[0]
        ridge = 1e-8 * abs(np.trace(A)) / p
        try:
            return spd_solve(A + ridge * np.eye(p), b)
        except NotPositiveDefinite:
            return scipy.linalg.lstsq(A + ridge * np.eye(p), b)[0]


def matrix_sqrt_sym(A) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    A = as_symmetric(A)
    w, V = scipy.linalg.eigh(A)
    norm2 = np.max(np.abs(w), initial=0.0)
    if norm2 > 0 and w[0] < -PSD_RTOL * norm2:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative")
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return as_symmetric(root)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by ``(master_seed, stream_index)``.

    Two streams with the same address produce bitwise-identical draws, no
    matter how many other streams were created before them.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.PCG64(seq))

    def child_seed(self) -> int:
        """A 63-bit integer seed derived from this stream's address."""
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


def read_matrix_csv(path: str | PathLike) -> np.ndarray:
    """Read a headerless comma-separated matrix, one row per line."""
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))


def write_matrix_csv(path: str | PathLike, A, header: str = "") -> None:
    """Write ``A`` as CSV; a non-empty ``header`` goes first as ``#`` comment lines."""
    # repr-precision keeps the round trip exact
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=float)), delimiter=",", fmt="%.17g",
               header=header, comments="# ")
