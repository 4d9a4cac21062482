"""Nodewise (square-root) Lasso estimation of a precision matrix.

Every node regression works on the sample Gram matrix of the centered data,
so one ``p x p`` matrix serves all ``p`` regressions and every grid point.
The per-node objective is

    |x_j - X_{-j} g|^2 / n + 2 lam |g|_1,

solved by cyclic coordinate descent with an active-set inner loop. The
square-root variant replaces ``lam`` by ``sigma * lam0`` and alternates with
``sigma <- |residual| / sqrt(n)`` until the noise level stops moving.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .core import as_data_matrix, as_symmetric
from .exceptions import DegenerateNode, DimensionMismatch, HDMeanError, NoConvergence

MAX_SWEEPS = 10_000
COEF_TOL = 1e-9
KKT_TOL = 1e-8
SIGMA_TOL = 1e-6
MAX_OUTER = 100
TAU_FLOOR = 1e-12

METHODS = ("lasso", "sqrt_lasso", "oracle")


# ---------------------------------------------------------------------------
# coordinate descent kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _sweep(S, j, lam, beta, grad, active_only):
    p = S.shape[0]
    maxchg = 0.0
    for k in range(p):
        if k == j:
            continue
        if active_only and beta[k] == 0.0:
            continue
        skk = S[k, k]
        if skk <= 0.0:
            continue
        old = beta[k]
        z = grad[k] + skk * old
        if z > lam:
            new = (z - lam) / skk
        elif z < -lam:
            new = (z + lam) / skk
        else:
            new = 0.0
        d = new - old
        if d != 0.0:
            beta[k] = new
            for m in range(p):
                grad[m] -= S[m, k] * d
            if abs(d) > maxchg:
                maxchg = abs(d)
    return maxchg


@nb.njit(cache=True, nogil=True)
def _kkt_violation(S, j, lam, beta, grad):
    p = S.shape[0]
    worst = 0.0
    for k in range(p):
        if k == j or S[k, k] <= 0.0:
            continue
        if beta[k] == 0.0:
            v = abs(grad[k]) - lam
        elif beta[k] > 0.0:
            v = abs(grad[k] - lam)
        else:
            v = abs(grad[k] + lam)
        if v > worst:
            worst = v
    return worst


@nb.njit(cache=True, nogil=True)
def _solve_node(S, j, lam, beta, grad, max_sweeps, tol, kkt_tol):
    """Lasso of node ``j`` on the others; ``beta``/``grad`` are warm state.

    ``grad`` must equal ``S[:, j] - S @ beta`` on entry and is kept in sync.
    Returns the number of sweeps used, or -1 when the cap was hit.
    """
    sweeps = 0
    while sweeps < max_sweeps:
        chg = _sweep(S, j, lam, beta, grad, False)
        sweeps += 1
        if chg < tol:
            # refresh the gradient to shed accumulated rounding before the KKT check
            p = S.shape[0]
            for m in range(p):
                acc = S[m, j]
                for k in range(p):
                    acc -= S[m, k] * beta[k]
                grad[m] = acc
            if _kkt_violation(S, j, lam, beta, grad) <= kkt_tol:
                return sweeps
            continue
        while sweeps < max_sweeps:
            chg = _sweep(S, j, lam, beta, grad, True)
            sweeps += 1
            if chg < tol:
                break
    return -1


@nb.njit(cache=True, nogil=True)
def _rss(S, j, beta, grad):
    # |x_j - X beta|^2 / n = S_jj - beta'S_j - beta'grad, with grad = S_j - S beta
    acc = S[j, j]
    for k in range(S.shape[0]):
        acc -= beta[k] * (S[k, j] + grad[k])
    return max(acc, 0.0)


@nb.njit(cache=True, nogil=True)
def _nodewise_path(S, levels, lam_scale, sqrt_mode, max_sweeps, tol, kkt_tol, sigma_tol, max_outer):
    """Fit every node at every penalty level (levels sorted descending).

    ``lam_scale[j]`` multiplies the level for node ``j`` (all ones in the
    usual shared-penalty case). Returns coefficients ``(L, p, p)`` with row
    ``j`` holding node ``j``'s regression, residual mean squares ``(L, p)``,
    the effective lasso penalty ``(L, p)`` and a status code ``(L, p)``:
    0 ok, 1 coordinate descent cap, 2 noise-level iteration cap.
    """
    p = S.shape[0]
    L = levels.shape[0]
    coef = np.zeros((L, p, p))
    rss = np.zeros((L, p))
    lam_eff = np.zeros((L, p))
    status = np.zeros((L, p), dtype=np.int64)
    for j in range(p):
        beta = np.zeros(p)
        grad = S[:, j].copy()
        sigma = np.sqrt(max(S[j, j], 0.0))
        sig_tol = sigma_tol * max(sigma, 1e-300)
        for li in range(L):
            level = levels[li] * lam_scale[j]
            if not sqrt_mode:
                lam = level
                if _solve_node(S, j, lam, beta, grad, max_sweeps, tol, kkt_tol) < 0:
                    status[li, j] = 1
                r = _rss(S, j, beta, grad)
            else:
                lam = sigma * level
                r = 0.0
                done = False
                for _ in range(max_outer):
                    lam = sigma * level
                    if _solve_node(S, j, lam, beta, grad, max_sweeps, tol, kkt_tol) < 0:
                        status[li, j] = 1
                    r = _rss(S, j, beta, grad)
                    new_sigma = np.sqrt(r)
                    moved = abs(new_sigma - sigma)
                    sigma = new_sigma
                    if moved < sig_tol or sigma == 0.0:
                        done = True
                        break
                if not done:
                    status[li, j] = 2
            coef[li, j, :] = beta
            rss[li, j] = r
            lam_eff[li, j] = lam
    return coef, rss, lam_eff, status


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrecisionEstimate:
    """Nodewise estimate ``Gamma_hat = T^-2 C`` with its fit metadata.

    ``gamma_hat`` may be asymmetric; ``symmetrize`` produces a symmetric
    version. ``lambdas`` holds the penalty each node's lasso actually used
    (``sigma_j * lam0`` for the square-root variant).
    """

    gamma_hat: np.ndarray
    tau_sq: np.ndarray
    lambdas: np.ndarray
    method: str
    level: float | None = None

    @classmethod
    def oracle(cls, gamma) -> "PrecisionEstimate":
        G = np.asarray(gamma, dtype=float)
        d = np.diag(G)
        if np.any(d <= 0):
            raise DegenerateNode(int(np.argmin(d)), float(np.min(d)))
        return cls(G.copy(), 1.0 / d, np.zeros(G.shape[0]), "oracle")

    @property
    def p(self) -> int:
        return self.gamma_hat.shape[0]


@dataclass(frozen=True)
class PrecisionDiagnostics:
    fit_supnorm: float
    max_diag_err: float | None = None
    max_row_l1_err: float | None = None


def centered(X) -> np.ndarray:
    X = as_data_matrix(X)
    return X - X.mean(axis=0)


def sample_gram(Xc: np.ndarray) -> np.ndarray:
    """``Xc' Xc / n`` for already-centered data (the divisor-n covariance)."""
    return as_symmetric(Xc.T @ Xc / Xc.shape[0])


def default_lambda(n: int, p: int) -> float:
    return float(np.sqrt(np.log(max(p, 2)) / n))


def default_lambda_grid(n: int, p: int, num: int = 10) -> np.ndarray:
    """Log-spaced grid over ``[0.1, 2] * sqrt(log p / n)``."""
    return np.geomspace(0.1, 2.0, num) * default_lambda(n, p)


def _assemble(coef, rss, penalty, lam_eff, method, level) -> PrecisionEstimate:
    tau_sq = rss + penalty
    bad = np.flatnonzero(~(tau_sq > TAU_FLOOR))
    if bad.size:
        raise DegenerateNode(int(bad[0]), float(tau_sq[bad[0]]))
    C = -coef
    np.fill_diagonal(C, 1.0)
    return PrecisionEstimate(C / tau_sq[:, None], tau_sq, lam_eff.copy(), method, level)


def _fit_path(S, levels, sqrt_mode, lam_scale=None):
    """Nodewise fits at every level, in the caller's level order.

    Returns ``(coef, rss, penalty, lam_eff, status)`` where ``penalty`` is
    the l1 term that enters ``tau_sq``. The square-root variant works on the
    correlation-scaled Gram matrix, i.e. each coefficient is penalized in
    units of its column's standard deviation, which makes the fit
    equivariant to rescaling the variables; results are mapped back to the
    original scale, with ``lam_eff`` in original units.
    """
    levels = np.asarray(levels, dtype=float)
    order = np.argsort(-levels, kind="stable")
    p = S.shape[0]
    scale = np.ones(p) if lam_scale is None else np.asarray(lam_scale, dtype=float)
    sd = np.ones(p)
    if sqrt_mode:
        d = np.diag(S)
        sd = np.where(d > 0, np.sqrt(np.clip(d, 0.0, None)), 1.0)
        S = S / np.outer(sd, sd)
    coef, rss, lam_eff, status = _nodewise_path(
        np.ascontiguousarray(S), levels[order], scale, bool(sqrt_mode),
        MAX_SWEEPS, COEF_TOL, KKT_TOL, SIGMA_TOL, MAX_OUTER,
    )
    penalty = lam_eff * np.abs(coef).sum(axis=2)
    if sqrt_mode:
        coef = coef * (sd[:, None] / sd[None, :])
        rss = rss * sd**2
        penalty = penalty * sd**2
        lam_eff = lam_eff * sd
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return coef[inv], rss[inv], penalty[inv], lam_eff[inv], status[inv]


def _check_status(status, what):
    if np.any(status == 1):
        raise NoConvergence(f"{what}: coordinate descent exceeded {MAX_SWEEPS} sweeps")
    if np.any(status == 2):
        raise NoConvergence(f"{what}: noise-level iteration exceeded {MAX_OUTER} steps")


def lasso_cd(design, response, lam: float) -> np.ndarray:
    """Minimize ``|y - A g|^2 / n + 2 lam |g|_1`` by coordinate descent.

    The solution satisfies ``|A'(y - A g) / n|_k <= lam`` on every
    coordinate, with equality and matching sign on the active set.
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"design has {A.shape[0]} rows, response has {y.shape[0]}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
        raise ValueError("design and response must be finite")
    Z = np.column_stack([y, A])
    S = Z.T @ Z / A.shape[0]
    beta = np.zeros(S.shape[0])
    grad = S[:, 0].copy()
    if _solve_node(S, 0, float(lam), beta, grad, MAX_SWEEPS, COEF_TOL, KKT_TOL) < 0:
        raise NoConvergence(f"coordinate descent exceeded {MAX_SWEEPS} sweeps")
    return beta[1:]


def nodewise_lasso(X, lambdas=None) -> PrecisionEstimate:
    """Nodewise Lasso estimate of the precision matrix.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Observations; centered internally at their sample mean.
    lambdas : float or array_like of shape (p,), optional
        Per-node penalties. Defaults to ``sqrt(log p / n)`` for every node.
    """
    Xc = centered(X)
    n, p = Xc.shape
    if n < 3:
        raise DimensionMismatch("nodewise regression needs n >= 3")
    if lambdas is None:
        lambdas = default_lambda(n, p)
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float), (p,))
    if np.any(lam < 0):
        raise ValueError("penalties must be non-negative")
    level = float(lam[0]) if np.all(lam == lam[0]) else None
    # a per-node penalty vector is a shared unit level scaled node by node
    coef, rss, pen, lam_eff, status = _fit_path(sample_gram(Xc), np.array([1.0]), False, lam_scale=lam)
    _check_status(status, "nodewise lasso")
    return _assemble(coef[0], rss[0], pen[0], lam_eff[0], "lasso", level)


def sqrt_lasso_nodewise(X, lambda0: float | None = None) -> PrecisionEstimate:
    """Nodewise square-root Lasso via the scaled-Lasso alternation.

    Node ``j`` minimizes ``|x_j - X_{-j} g| / sqrt(n) + lambda0 sum_k s_k |g_k|``
    with ``s_k`` the sample standard deviation of column ``k``. The weights
    make the estimate equivariant to rescaling any variable. ``lambdas`` on
    the result holds ``sigma_j * lambda0`` with ``sigma_j`` the fitted noise
    level, so every node satisfies ``|X_{-j}' r / n|_k <= lambdas[j] * s_k``.
    """
    Xc = centered(X)
    n, p = Xc.shape
    if n < 3:
        raise DimensionMismatch("nodewise regression needs n >= 3")
    if lambda0 is None:
        lambda0 = default_lambda(n, p)
    if lambda0 < 0:
        raise ValueError("lambda0 must be non-negative")
    coef, rss, pen, lam_eff, status = _fit_path(sample_gram(Xc), np.array([float(lambda0)]), True)
    _check_status(status, "square-root lasso")
    return _assemble(coef[0], rss[0], pen[0], lam_eff[0], "sqrt_lasso", float(lambda0))


def fit_supnorm(gamma_hat, sigma_hat) -> float:
    """``max |G S G' - G'|`` : how far ``G`` is from inverting ``S``."""
    G = np.asarray(gamma_hat, dtype=float)
    return float(np.max(np.abs(G @ np.asarray(sigma_hat) @ G.T - G.T)))


def fit_path(X, grid, method: str = "sqrt_lasso", gram=None):
    """Estimates along a penalty grid, sharing warm starts.

    Returns a list aligned with ``grid``; entries whose nodes degenerate or
    fail to converge are the raised exception instead of an estimate.
    ``gram`` overrides the Gram matrix (used for pooled two-sample fits).
    """
    if method not in ("lasso", "sqrt_lasso"):
        raise ValueError(f"unknown estimation method {method!r}")
    S = sample_gram(centered(X)) if gram is None else as_symmetric(gram)
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("penalty grid is empty")
    if np.any(grid < 0):
        raise ValueError("penalties must be non-negative")
    coef, rss, pen, lam_eff, status = _fit_path(S, grid, method == "sqrt_lasso")
    out = []
    for i, level in enumerate(grid):
        try:
            _check_status(status[i], f"{method} at level {level:.4g}")
            out.append(_assemble(coef[i], rss[i], pen[i], lam_eff[i], method, float(level)))
        except HDMeanError as exc:
            out.append(exc)
    return out


def select_lambda(X_pooled, grid, method: str = "sqrt_lasso", gram=None, return_estimate: bool = False):
    """Pick the grid level minimizing ``max |G S G' - G|``.

    ``X_pooled`` must already be centered (sample by sample) when it
    concatenates several samples; ``S`` is its divisor-n Gram matrix. Ties
    go to the largest level. Grid points whose fit fails are skipped with a
    warning; if all fail the first failure is raised.
    """
    if gram is None:
        X_pooled = as_data_matrix(X_pooled)
        gram = sample_gram(X_pooled - X_pooled.mean(axis=0))
    S = as_symmetric(gram)
    grid = np.asarray(grid, dtype=float).ravel()
    fits = fit_path(None, grid, method, gram=S)
    best = None
    for level, est in zip(grid, fits):
        if isinstance(est, Exception):
            warnings.warn(f"skipping penalty level {level:.4g}: {est}", RuntimeWarning, stacklevel=2)
            continue
        crit = fit_supnorm(est.gamma_hat, S)
        if best is None or crit < best[0] or (crit == best[0] and level > best[1]):
            best = (crit, level, est)
    if best is None:
        raise next(e for e in fits if isinstance(e, Exception))
    if return_estimate:
        return float(best[1]), best[2]
    return float(best[1])


def symmetrize(est) -> np.ndarray:
    """Symmetric version keeping, per pair, the entry of smaller magnitude.

    Exact ties in magnitude keep the upper-triangle entry.
    """
    G = est.gamma_hat if isinstance(est, PrecisionEstimate) else np.asarray(est, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {G.shape}")
    keep_upper = np.abs(G) <= np.abs(G.T)
    M = np.where(keep_upper, G, G.T)
    upper = np.triu(M)
    return upper + np.triu(M, 1).T


def diagnostics(est, sigma_hat, gamma_true=None) -> PrecisionDiagnostics:
    """Sup-norm error summaries of an estimate.

    ``fit_supnorm`` is always reported; diagonal and row-wise l1 errors
    need ``gamma_true``.
    """
    G = est.gamma_hat if isinstance(est, PrecisionEstimate) else np.asarray(est, dtype=float)
    S = np.asarray(sigma_hat, dtype=float)
    if S.shape != G.shape:
        raise DimensionMismatch(f"estimate {G.shape} vs covariance {S.shape}")
    fit = fit_supnorm(G, S)
    if gamma_true is None:
        return PrecisionDiagnostics(fit)
    T = np.asarray(gamma_true, dtype=float)
    if T.shape != G.shape:
        raise DimensionMismatch(f"estimate {G.shape} vs truth {T.shape}")
    diag_err = float(np.max(np.abs(np.diag(G) - np.diag(T))))
    row_err = float(np.max(np.abs(G - T).sum(axis=1)))
    return PrecisionDiagnostics(fit, diag_err, row_err)


@dataclass(frozen=True)
class PrecisionSpec:
    """How a test obtains its precision matrix.

    ``method`` is ``"sqrt_lasso"``, ``"lasso"`` or ``"oracle"``. A fixed
    ``level`` wins; otherwise a ``grid`` is searched with
    :func:`select_lambda`; with neither, the penalty is
    ``sqrt(log p / n)``. Selection is opt-in because its criterion rewards
    fits close to the sample inverse, which over-reject when ``n`` is not
    much larger than ``p``. ``gamma`` holds the supplied matrix for the
    oracle method.
    """

    method: str = "sqrt_lasso"
    level: float | None = None
    grid: tuple | None = None
    symmetrize: bool = False
    gamma: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown precision method {self.method!r}; expected one of {METHODS}")
        if self.method == "oracle" and self.gamma is None:
            raise ValueError("oracle precision needs a gamma matrix")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "level": self.level,
            "grid": None if self.grid is None else [float(g) for g in self.grid],
            "symmetrize": self.symmetrize,
        }


def estimate_from_gram(gram, n: int, spec: PrecisionSpec) -> PrecisionEstimate:
    """Fit ``spec`` to a divisor-``n`` Gram matrix of centered data."""
    if spec.method == "oracle":
        return PrecisionEstimate.oracle(spec.gamma)
    p = gram.shape[0]
    if spec.level is not None:
        fits = fit_path(None, [spec.level], spec.method, gram=gram)
        if isinstance(fits[0], Exception):
            raise fits[0]
        return fits[0]
    if spec.grid is None:
        return estimate_from_gram(gram, n, replace(spec, level=default_lambda(n, p)))
    return select_lambda(None, np.asarray(spec.grid, dtype=float), spec.method, gram=gram, return_estimate=True)[1]


def estimate_precision(X, spec: PrecisionSpec | None = None) -> PrecisionEstimate:
    spec = PrecisionSpec() if spec is None else spec
    if spec.method == "oracle":
        return PrecisionEstimate.oracle(spec.gamma)
    Xc = centered(X)
    return estimate_from_gram(sample_gram(Xc), Xc.shape[0], spec)


def precision_matrix(est: PrecisionEstimate, symmetric: bool) -> np.ndarray:
    return symmetrize(est) if symmetric else est.gamma_hat
