"""Two-sample maximum sum-of-squares tests, with equal or unequal covariances."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg

from . import onesample as one
from .bootstrap import (
    BootstrapConfig,
    BootstrapResult,
    StatisticSpec,
    TestOutcome,
    replicate_multipliers,
    run_chunks,
    summarize,
)
from .core import as_data_matrix, cholesky_spd
from .exceptions import (
    BadK,
    BadM,
    BadSpec,
    DimensionMismatch,
    NonPositiveDiagonal,
    NotPositiveDefinite,
    Singular,
    TooLarge,
)
from .precision import (
    PrecisionEstimate,
    PrecisionSpec,
    estimate_from_gram,
    estimate_precision,
    precision_matrix,
    sample_gram,
)

IDENTITY_TOL = 1e-8
TWO_SAMPLE_FAMILIES = ("T", "Modified")


def _pair(X, Y):
    X, Y = as_data_matrix(X), as_data_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"samples have p={X.shape[1]} and p={Y.shape[1]}")
    return X, Y


def pooled_centered(X, Y) -> np.ndarray:
    """Both samples centered at their own means, stacked row-wise."""
    X, Y = _pair(X, Y)
    return np.vstack([X - X.mean(axis=0), Y - Y.mean(axis=0)])


def pooled_gram(X, Y) -> np.ndarray:
    return sample_gram(pooled_centered(X, Y))


def equal_cov_scores(X, Y, gamma) -> one.ScoreVector:
    """Scores of ``Gamma (Xbar - Ybar)`` with factor ``n1 n2 / (n1 + n2)``."""
    X, Y = _pair(X, Y)
    n1, n2 = X.shape[0], Y.shape[0]
    return one.scores_from_mean(X.mean(axis=0) - Y.mean(axis=0), gamma, n1 * n2 / (n1 + n2))


def equal_cov_stat(X, Y, gamma_hat, k: int) -> one.StatValue:
    return one.t_stat(equal_cov_scores(X, Y, gamma_hat), k)


def lr_exact_equal(X, Y, gamma, k: int) -> one.StatValue:
    """Exact likelihood ratio with a shared precision, by subset enumeration."""
    return one.lr_exact(equal_cov_scores(X, Y, gamma), gamma, k)


def _solve(A, B):
    """``A^{-1} B`` for the weighted precision sum, with the ridge fallback."""
    p = A.shape[0]
    if np.array_equal(A, A.T):
        try:
            return scipy.linalg.cho_solve((cholesky_spd(A), True), B)
        except NotPositiveDefinite:
            ridge = 1e-8 * abs(np.trace(A)) / p
            try:
                return scipy.linalg.cho_solve((cholesky_spd(A + ridge * np.eye(p)), True), B)
            except NotPositiveDefinite:
                pass
    try:
        return scipy.linalg.solve(A, B)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise Singular(f"n1 Gamma1 + n2 Gamma2 cannot be inverted: {exc}") from exc


@dataclass(frozen=True)
class UnequalComponents:
    """Ingredients of the unequal-covariance statistic.

    ``g_map_x`` and ``g_map_y`` express ``g_hat`` as a linear function of the
    two sample means, which is what the bootstrap perturbs.
    """

    psi_hat: np.ndarray
    g_hat: np.ndarray
    theta_hat: np.ndarray
    c1_hat: np.ndarray
    c2_hat: np.ndarray
    g_map_x: np.ndarray
    g_map_y: np.ndarray
    n1: int
    n2: int

    @property
    def p(self) -> int:
        return self.g_hat.shape[0]

    def scores(self, g=None) -> one.ScoreVector:
        g = self.g_hat if g is None else g
        d = np.diag(self.psi_hat)
        if np.any(~(d > 0)):
            raise NonPositiveDiagonal("diagonal of Psi_hat must be positive")
        return one.ScoreVector(g, g * g / d, 1.0)


def unequal_components(X, Y, gamma1, gamma2) -> UnequalComponents:
    X, Y = _pair(X, Y)
    n1, n2 = X.shape[0], Y.shape[0]
    G1, G2 = np.asarray(gamma1, dtype=float), np.asarray(gamma2, dtype=float)
    p = X.shape[1]
    if G1.shape != (p, p) or G2.shape != (p, p):
        raise DimensionMismatch("precision matrices must be p x p")
    A = n1 * G1 + n2 * G2
    C1 = _solve(A, n1 * G1)
    C2 = _solve(A, n2 * G2)
    I = np.eye(p)
    err = np.max(np.abs(C1 + C2 - I))
    if not err <= IDENTITY_TOL:
        raise Singular(f"C1 + C2 deviates from the identity by {err:.2e}")
    xbar, ybar = X.mean(axis=0), Y.mean(axis=0)
    theta = C1 @ xbar + C2 @ ybar
    W1 = C2.T @ G1  # X-hat = W1 (Xbar - theta)
    W2 = C1.T @ G2  # Y-hat = W2 (Ybar - theta)
    omega21 = W1 @ C2
    omega12 = W2 @ C1
    psi = n1 * omega21 + n2 * omega12
    g = n1 * W1 @ (xbar - theta) - n2 * W2 @ (ybar - theta)
    map_x = n1 * W1 @ (I - C1) + n2 * W2 @ C1
    map_y = -n1 * W1 @ C2 - n2 * W2 @ (I - C2)
    return UnequalComponents(psi, g, theta, C1, C2, map_x, map_y, n1, n2)


def unequal_cov_stat(comp: UnequalComponents, k: int) -> one.StatValue:
    return one.t_stat(comp.scores(), k)


def lr_exact_two_sample(X, Y, gamma1, gamma2, k: int) -> one.StatValue:
    """Exact two-sample likelihood ratio for supplied precision matrices."""
    comp = unequal_components(X, Y, gamma1, gamma2)
    p = comp.p
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= p):
        raise BadK(f"k must be an integer in [1, {p}], got {k!r}")
    if p > one.LR_MAX_P or comb(p, k) > one.MAX_SUBSETS:
        raise TooLarge(f"exact LR over C({p},{k}) subsets exceeds the enumeration guard")
    return one.lr_exact(comp.scores(), comp.psi_hat, k)


def _check_bound(M, p, N):
    if not (isinstance(M, (int, np.integer)) and 1 <= M <= min(p, N - 1)):
        raise BadM(f"bound must be an integer in [1, min(p, N-1)] = [1, {min(p, N - 1)}], got {M!r}")


def select_k(X, Y, gamma_hat, M: int) -> int:
    """Data-driven ``k``: argmax of ``sqrt((N-k)/(2k)) (T(k) - k)``, ``N = n1+n2-2``."""
    X, Y = _pair(X, Y)
    N = X.shape[0] + Y.shape[0] - 2
    sc = equal_cov_scores(X, Y, gamma_hat)
    _check_bound(M, sc.p, N)
    ks = np.arange(1, M + 1)
    t_values = sc.n * one.top_k_prefix(sc.xi_sq, M)
    return int(np.argmax(np.sqrt((N - ks) / (2.0 * ks)) * (t_values - ks))) + 1


def modified_two_sample(X, Y, M: int, gamma=None, components: UnequalComponents | None = None) -> one.StatValue:
    """Adaptive statistic with weights ``sqrt((1 - k/N) / (2k))``.

    Pass ``gamma`` for the equal-covariance version or ``components`` for the
    unequal-covariance one.
    """
    X, Y = _pair(X, Y)
    N = X.shape[0] + Y.shape[0] - 2
    sc = equal_cov_scores(X, Y, gamma) if components is None else components.scores()
    _check_bound(M, sc.p, N)
    return one.modified_stat(sc, M, size=N)


class _TwoSampleStatistic:
    def __init__(self, X, Y, spec: StatisticSpec, gamma=None, components: UnequalComponents | None = None):
        if spec.family not in TWO_SAMPLE_FAMILIES:
            raise BadSpec(f"two-sample tests support families {TWO_SAMPLE_FAMILIES}, got {spec.family}")
        if (gamma is None) == (components is None):
            raise BadSpec("give exactly one of gamma (equal covariance) or components (unequal)")
        self.X, self.Y = _pair(X, Y)
        self.n1, self.n2 = self.X.shape[0], self.Y.shape[0]
        self.N = self.n1 + self.n2 - 2
        self.spec = spec
        self.gamma = None if gamma is None else np.asarray(gamma, dtype=float)
        self.comp = components
        if spec.family == "Modified":
            _check_bound(spec.M, self.X.shape[1], self.N)

    def _scores(self):
        if self.comp is None:
            return equal_cov_scores(self.X, self.Y, self.gamma)
        return self.comp.scores()

    def observed(self) -> one.StatValue:
        sc = self._scores()
        if self.spec.family == "T":
            return one.t_stat(sc, self.spec.k)
        return one.modified_stat(sc, self.spec.M, size=self.N)

    def replicates(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if self.comp is None:
            z = (xs - ys) @ self.gamma.T
            xi = z * z / np.diag(self.gamma)
            factor = self.n1 * self.n2 / (self.n1 + self.n2)
        else:
            g = xs @ self.comp.g_map_x.T + ys @ self.comp.g_map_y.T
            xi = g * g / np.diag(self.comp.psi_hat)
            factor = 1.0
        s = self.spec
        if s.family == "T":
            return factor * one.top_k_prefix(xi, s.k)[:, s.k - 1]
        return one.modified_from_t(factor * one.top_k_prefix(xi, s.M), self.N)[0]


def _replicate_values(stat: _TwoSampleStatistic, cfg: BootstrapConfig) -> np.ndarray:
    Xc = stat.X - stat.X.mean(axis=0)
    Yc = stat.Y - stat.Y.mean(axis=0)
    n1, n2 = stat.n1, stat.n2

    def chunk(start, stop):
        E = replicate_multipliers(cfg.seed, start, stop, n1 + n2)
        # X* divides by n1 and Y* by n2
        return stat.replicates(E[:, :n1] @ Xc / n1, E[:, n1:] @ Yc / n2)

    return run_chunks(chunk, int(cfg.replications), int(cfg.workers))


def two_sample_bootstrap(X, Y, spec: StatisticSpec, cfg: BootstrapConfig, gamma=None,
                         components: UnequalComponents | None = None) -> BootstrapResult:
    stat = _TwoSampleStatistic(X, Y, spec, gamma, components)
    return summarize(_replicate_values(stat, cfg), stat.observed().value, cfg.alpha)


def estimate_equal(X, Y, spec: PrecisionSpec) -> PrecisionEstimate:
    """Precision fitted to the pooled sample, each part centered at its own mean."""
    Z = pooled_centered(X, Y)
    return estimate_from_gram(sample_gram(Z), Z.shape[0], spec)


def run_two_sample_test(X, Y, precision: PrecisionSpec | None = None, statistic: StatisticSpec | None = None,
                        cfg: BootstrapConfig | None = None, equal_cov: bool = True,
                        select_bound: int | None = None, precision2: PrecisionSpec | None = None,
                        return_replicates: bool = False):
    """End-to-end two-sample test.

    With ``select_bound`` set, ``k`` is chosen by :func:`select_k` (equal
    covariance) before calibrating ``T(k_hat)``. For unequal covariances each
    sample gets its own estimate; ``precision2`` overrides the second one.
    ``return_replicates`` adds the bootstrap values to the return value.
    """
    precision = PrecisionSpec() if precision is None else precision
    statistic = StatisticSpec() if statistic is None else statistic
    cfg = BootstrapConfig() if cfg is None else cfg
    X, Y = _pair(X, Y)
    extra = {}
    if equal_cov:
        est = estimate_equal(X, Y, precision)
        gamma = precision_matrix(est, precision.symmetrize)
        comp = None
        extra["lambda"] = est.level
        if select_bound is not None:
            k_hat = select_k(X, Y, gamma, select_bound)
            statistic = StatisticSpec("T", k=k_hat)
            extra["k_hat"] = k_hat
    else:
        if select_bound is not None:
            raise BadSpec("k selection is defined for the equal-covariance statistic")
        est1 = estimate_precision(X, precision)
        est2 = estimate_precision(Y, precision if precision2 is None else precision2)
        gamma = None
        comp = unequal_components(X, Y, precision_matrix(est1, precision.symmetrize),
                                  precision_matrix(est2, precision.symmetrize))
        extra["lambda"] = [est1.level, est2.level]
    stat = _TwoSampleStatistic(X, Y, statistic, gamma, comp)
    obs = stat.observed()
    res = summarize(_replicate_values(stat, cfg), obs.value, cfg.alpha)
    extra["support"] = list(obs.support)
    outcome = TestOutcome(
        statistic=obs.value,
        family=statistic.family,
        critical_value=res.critical_value,
        p_value=res.p_value,
        reject=bool(obs.value > res.critical_value),
        alpha=cfg.alpha,
        replications=int(cfg.replications),
        k_used=obs.k_used,
        extra=extra,
    )
    return (outcome, res.replicate_values) if return_replicates else outcome
