"""One-sample statistics built on the transformed mean ``Z = Gamma @ Xbar``.

All sum-of-top-k evaluations go through :func:`top_k_prefix`, which sums
values in descending order. Bootstrap replicates and the observed statistic
therefore share one arithmetic path, and prefix-sum and per-k evaluations
agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import as_data_matrix, ridge_solve, spd_solve
from .exceptions import BadK, BadM, DimensionMismatch, NonPositiveDiagonal, NotPositiveDefinite, Singular, TooLarge

EDGE_TOL = 1e-12
LR_MAX_P = 20
MAX_SUBSETS = 1_000_000
SCREEN_MAX = 25

FAMILIES = ("T", "LR_exact", "Thred", "Dense", "DenseU", "Graph", "Screened", "Modified", "Hotelling")


@dataclass(frozen=True)
class ScoreVector:
    """Transformed mean ``z`` with studentized squares ``xi_sq = z**2 / diag``.

    ``n`` is the factor multiplying every quadratic form (the sample size in
    the one-sample problem, ``n1 n2 / (n1 + n2)`` for two samples).
    """

    z: np.ndarray
    xi_sq: np.ndarray
    n: float

    @property
    def p(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class StatValue:
    value: float
    family: str
    k_used: int = 0
    support: tuple = field(default=(), compare=False)


def _gamma_diag(gamma) -> np.ndarray:
    d = np.diag(np.asarray(gamma, dtype=float)).copy()
    if np.any(~(d > 0)):
        j = int(np.argmin(np.where(np.isnan(d), -np.inf, d)))
        raise NonPositiveDiagonal(f"precision diagonal entry {j} is {d[j]:.3e}")
    return d


def scores_from_mean(xbar, gamma, n: float) -> ScoreVector:
    gamma = np.asarray(gamma, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    if gamma.shape != (xbar.shape[0], xbar.shape[0]):
        raise DimensionMismatch(f"precision {gamma.shape} does not match mean of length {xbar.shape[0]}")
    d = _gamma_diag(gamma)
    z = gamma @ xbar
    return ScoreVector(z, z * z / d, float(n))


def scores(X, gamma) -> ScoreVector:
    """Scores ``z = gamma @ Xbar`` and ``xi_sq_j = z_j**2 / gamma_jj``."""
    X = as_data_matrix(X, min_rows=1)
    return scores_from_mean(X.mean(axis=0), gamma, X.shape[0])


def top_k_prefix(xi_sq, kmax: int) -> np.ndarray:
    """Prefix sums of the ``kmax`` largest entries along the last axis."""
    xi_sq = np.asarray(xi_sq, dtype=float)
    desc = -np.sort(-xi_sq, axis=-1)[..., :kmax]
    return np.cumsum(desc, axis=-1)


def _top_k_support(xi_sq, k) -> tuple:
    # stable sort: equal values resolve to the lowest coordinate index
    return tuple(int(i) for i in np.sort(np.argsort(-xi_sq, kind="stable")[:k]))


def _check_k(k, p):
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= p):
        raise BadK(f"k must be an integer in [1, {p}], got {k!r}")


def t_stat(sc: ScoreVector, k: int) -> StatValue:
    """``n`` times the sum of the ``k`` largest studentized squares."""
    _check_k(k, sc.p)
    value = sc.n * top_k_prefix(sc.xi_sq, k)[k - 1]
    return StatValue(float(value), "T", int(k), _top_k_support(sc.xi_sq, k))


def modified_weights(kmax: int, size: float) -> np.ndarray:
    ks = np.arange(1, kmax + 1)
    return np.sqrt((1.0 - ks / size) / (2.0 * ks))


def modified_from_t(t_values, size: float) -> tuple[np.ndarray, np.ndarray]:
    """Weighted maximum over k of ``sqrt((1 - k/size) / (2k)) (T(k) - k)``.

    ``t_values[..., k-1]`` holds ``T(k)``. Returns the maxima and the
    argmax ``k`` (smallest on ties) along the last axis.
    """
    t_values = np.asarray(t_values, dtype=float)
    kmax = t_values.shape[-1]
    ks = np.arange(1, kmax + 1)
    centred = modified_weights(kmax, size) * (t_values - ks)
    arg = np.argmax(centred, axis=-1)
    return np.take_along_axis(centred, arg[..., None], axis=-1)[..., 0], arg + 1


def modified_stat(sc: ScoreVector, M: int, size: float | None = None) -> StatValue:
    """Adaptive statistic ``max_{k<=M} sqrt((1-k/n)/(2k)) (T(k) - k)``.

    ``size`` defaults to the sample size ``n``; two-sample callers pass
    ``n1 + n2 - 2``.
    """
    size = sc.n if size is None else float(size)
    if not (isinstance(M, (int, np.integer)) and 1 <= M <= sc.p and M < size):
        raise BadM(f"M must be an integer in [1, min(p, n-1)], got {M!r}")
    t_values = sc.n * top_k_prefix(sc.xi_sq, M)
    value, k_used = modified_from_t(t_values, size)
    return StatValue(float(value), "Modified", int(k_used), _top_k_support(sc.xi_sq, int(k_used)))


def _quad_forms(z, gamma, subsets: np.ndarray) -> np.ndarray:
    """``z_S' gamma_SS^{-1} z_S`` for every row ``S`` of ``subsets``."""
    k = subsets.shape[1]
    if k == 1:
        j = subsets[:, 0]
        return z[j] * z[j] / np.diag(gamma)[j]
    blocks = gamma[subsets[:, :, None], subsets[:, None, :]]
    zs = z[subsets]
    try:
        L = np.linalg.cholesky(blocks)
        # L y = z_S, value = |y|^2
        y = np.linalg.solve(L, zs[..., None])[..., 0]
        return np.einsum("ij,ij->i", y, y)
    except np.linalg.LinAlgError:
        out = np.empty(subsets.shape[0])
        for i in range(subsets.shape[0]):
            out[i] = zs[i] @ ridge_solve(blocks[i], zs[i])
        return out


def _best_subset(z, gamma, pool, k, chunk=20_000):
    """Exhaustive maximum of ``z_S' gamma_SS^{-1} z_S`` over ``S`` in ``pool`` of size k."""
    best_val, best_set = -np.inf, ()
    it = combinations(pool, k)
    while True:
        block = np.array([c for _, c in zip(range(chunk), it)], dtype=np.intp)
        if block.size == 0:
            break
        vals = _quad_forms(z, gamma, block.reshape(-1, k))
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_set = float(vals[i]), tuple(int(v) for v in block[i])
    return best_val, best_set


def _subset_value(z, gamma, subset) -> float:
    idx = np.asarray(subset, dtype=np.intp)
    if idx.size == 1:
        j = idx[0]
        return float(z[j] * z[j] / gamma[j, j])
    block = gamma[np.ix_(idx, idx)]
    return float(z[idx] @ ridge_solve(block, z[idx]))


def lr_exact(sc: ScoreVector, gamma, k: int) -> StatValue:
    """Exact likelihood-ratio statistic ``n max_{|S|=k} Z_S' Gamma_SS^{-1} Z_S``.

    Enumerates every subset, so it is limited to ``p <= 20`` and at most a
    million subsets.
    """
    gamma = np.asarray(gamma, dtype=float)
    p = sc.p
    _check_k(k, p)
    if p > LR_MAX_P or comb(p, k) > MAX_SUBSETS:
        raise TooLarge(f"exact LR over C({p},{k}) subsets exceeds the enumeration guard")
    if k == 1:
        # singleton blocks invert to 1 / gamma_jj: reuse xi_sq so LR(1) == T(1) exactly
        j = int(np.argmax(sc.xi_sq))
        return StatValue(float(sc.n * sc.xi_sq[j]), "LR_exact", 1, (j,))
    best, subset = _best_subset(sc.z, gamma, range(p), k)
    return StatValue(float(sc.n * best), "LR_exact", int(k), subset)


def thred_stat(X, delta: float) -> StatValue:
    """Thresholded sum ``n sum_j xbar_j**2 1{|xbar_j| > delta}``."""
    X = as_data_matrix(X, min_rows=1)
    xbar = X.mean(axis=0)
    kept = np.abs(xbar) > delta
    value = X.shape[0] * top_k_prefix(xbar[kept] ** 2, int(kept.sum()))[-1] if kept.any() else 0.0
    return StatValue(float(value), "Thred", int(kept.sum()), tuple(int(i) for i in np.flatnonzero(kept)))


def dense_stat(X, gamma) -> tuple[StatValue, StatValue]:
    """Dense quadratic form ``n Xbar' Gamma Xbar`` and its U-statistic version."""
    X = as_data_matrix(X)
    gamma = np.asarray(gamma, dtype=float)
    n, p = X.shape
    if gamma.shape != (p, p):
        raise DimensionMismatch(f"precision {gamma.shape} does not match p={p}")
    xbar = X.mean(axis=0)
    lr = n * float(xbar @ gamma @ xbar)
    s = X.sum(axis=0)
    # sum_{k != l} x_ki x_lj = s_i s_j - sum_k x_ki x_kj
    off_diag = float(s @ gamma @ s) - float(np.einsum("ki,ij,kj->", X, gamma, X))
    return StatValue(lr, "Dense", p), StatValue(off_diag / (n - 1), "DenseU", p)


def graph_components(gamma, tol: float = EDGE_TOL) -> list[np.ndarray]:
    """Connected components of the graph with an edge wherever ``|gamma_ij| > tol``."""
    A = np.abs(np.asarray(gamma, dtype=float)) > tol
    A = A | A.T
    ncomp, labels = connected_components(A, directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def graph_stat(sc: ScoreVector, gamma, k: int) -> StatValue:
    """Best packing of whole graph components with total size at most ``k``.

    Solved exactly as a 0/1 knapsack over capacity ``k``; the chosen items'
    values are then summed in descending order, so a diagonal precision
    reproduces :func:`t_stat` bit for bit.
    """
    gamma = np.asarray(gamma, dtype=float)
    _check_k(k, sc.p)
    items = [c for c in graph_components(gamma) if c.size <= k]
    if not items:
        return StatValue(0.0, "Graph", 0, ())
    weights = [int(c.size) for c in items]
    values = [_subset_value(sc.z, gamma, c) for c in items]
    # dp[c] = best value with capacity c; keep[i][c] marks item i taken at capacity c
    dp = np.zeros(k + 1)
    keep = np.zeros((len(items), k + 1), dtype=bool)
    for i, (w, v) in enumerate(zip(weights, values)):
        for cap in range(k, w - 1, -1):
            cand = dp[cap - w] + v
            if cand > dp[cap]:
                dp[cap] = cand
                keep[i, cap] = True
    chosen, cap = [], k
    for i in range(len(items) - 1, -1, -1):
        if keep[i, cap]:
            chosen.append(i)
            cap -= weights[i]
    if not chosen:
        return StatValue(0.0, "Graph", 0, ())
    picked = np.array([values[i] for i in chosen])
    support = tuple(sorted(int(j) for i in chosen for j in items[i]))
    value = sc.n * top_k_prefix(picked, picked.size)[-1]
    return StatValue(float(value), "Graph", len(support), support)


def screened_stat(sc: ScoreVector, gamma, k: int, delta: float) -> StatValue:
    """Exact LR restricted to coordinates whose studentized score exceeds ``delta``."""
    gamma = np.asarray(gamma, dtype=float)
    _check_k(k, sc.p)
    kept = np.flatnonzero(np.sqrt(sc.xi_sq) > delta)
    if kept.size == 0:
        return StatValue(0.0, "Screened", 0, ())
    if kept.size > SCREEN_MAX:
        raise TooLarge(f"{kept.size} coordinates survive screening (limit {SCREEN_MAX})")
    size = min(k, kept.size)
    if size == 1:
        j = int(kept[np.argmax(sc.xi_sq[kept])])
        return StatValue(float(sc.n * sc.xi_sq[j]), "Screened", 1, (j,))
    best, subset = _best_subset(sc.z, gamma, [int(j) for j in kept], size)
    return StatValue(float(sc.n * best), "Screened", size, subset)


def hotelling(X) -> StatValue:
    """Hotelling's ``n Xbar' S^{-1} Xbar`` with the unbiased sample covariance."""
    X = as_data_matrix(X)
    n, p = X.shape
    if n <= p + 1:
        raise Singular(f"Hotelling's statistic needs n > p + 1 (n={n}, p={p})")
    xbar = X.mean(axis=0)
    S = np.cov(X, rowvar=False, ddof=1).reshape(p, p)
    try:
        return StatValue(float(n * xbar @ spd_solve(S, xbar)), "Hotelling", p)
    except NotPositiveDefinite as exc:
        raise Singular(f"sample covariance is not positive definite: {exc}") from exc
