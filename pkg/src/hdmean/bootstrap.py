"""Multiplier-bootstrap calibration of the one-sample statistics.

Replicate ``r`` perturbs the centered observations with standard normal
multipliers drawn from ``RngStream(seed, r)``. Replicates are evaluated in
fixed-size chunks whose boundaries never depend on the worker count, so a
run is bitwise reproducible however it is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import onesample as one
from .core import RngStream, as_data_matrix, spd_solve
from .exceptions import BadSpec, NotPositiveDefinite, Singular
from .precision import PrecisionEstimate, PrecisionSpec, estimate_precision, precision_matrix

DEFAULT_SEED = 20160101
CHUNK = 64

# families whose statistic needs Gamma_SS solves, hence a symmetric precision
BLOCK_FAMILIES = ("LR_exact", "Graph", "Screened")


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 500
    alpha: float = 0.05
    seed: int = DEFAULT_SEED
    workers: int = 1

    def __post_init__(self):
        if int(self.replications) < 1:
            raise BadSpec("bootstrap needs at least one replication")
        if not 0 < self.alpha <= 1:
            raise BadSpec(f"alpha must lie in (0, 1], got {self.alpha}")
        if int(self.workers) < 1:
            raise BadSpec("workers must be positive")


@dataclass(frozen=True)
class StatisticSpec:
    """Which statistic to compute: a family plus its tuning constants."""

    family: str = "T"
    k: int | None = 4
    M: int | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.family not in one.FAMILIES:
            raise BadSpec(f"unknown statistic family {self.family!r}")
        if self.family in ("T", "LR_exact", "Graph", "Screened") and self.k is None:
            raise BadSpec(f"family {self.family} needs k")
        if self.family == "Modified" and self.M is None:
            raise BadSpec("the modified statistic needs an upper bound M")
        if self.family in ("Thred", "Screened") and self.delta is None:
            raise BadSpec(f"family {self.family} needs a threshold delta")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BootstrapResult:
    replicate_values: np.ndarray = field(repr=False)
    critical_value: float
    p_value: float


@dataclass
class TestOutcome:
    statistic: float
    family: str
    critical_value: float
    p_value: float
    reject: bool
    alpha: float
    replications: int
    k_used: int = 0
    extra: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TestOutcome":
        return cls(**d)


def empirical_critical_value(values, alpha: float) -> float:
    """The ``ceil((1 - alpha) B)``-th smallest replicate (inf-type quantile)."""
    v = np.sort(np.asarray(values, dtype=float))
    B = v.size
    # the tiny slack keeps e.g. 0.95 * 500 from rounding up to 476
    m = math.ceil((1.0 - alpha) * B - 1e-9)
    return float(v[min(max(m, 1), B) - 1])


def bootstrap_p_value(values, observed: float) -> float:
    v = np.asarray(values, dtype=float)
    return float((1 + np.count_nonzero(v >= observed)) / (v.size + 1))


def summarize(values, observed: float, alpha: float) -> BootstrapResult:
    values = np.asarray(values, dtype=float)
    return BootstrapResult(values, empirical_critical_value(values, alpha), bootstrap_p_value(values, observed))


def replicate_multipliers(seed: int, start: int, stop: int, n: int, count: int = 1) -> np.ndarray:
    """Rows ``start..stop-1`` of the multiplier matrix, shape ``(stop-start, count*n)``.

    Each row comes from its own ``RngStream(seed, r)``; ``count > 1`` draws
    several independent length-``n`` sequences back to back.
    """
    out = np.empty((stop - start, count * n))
    for i, r in enumerate(range(start, stop)):
        out[i] = RngStream(seed, r).generator().standard_normal(count * n)
    return out


def run_chunks(fn, B: int, workers: int) -> np.ndarray:
    """Evaluate ``fn(start, stop)`` over fixed chunks of ``range(B)`` and concatenate."""
    bounds = [(s, min(s + CHUNK, B)) for s in range(0, B, CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: fn(*b), bounds))
    return np.concatenate(parts)


def multiplier_scores(X, gamma_hat, stream: RngStream | None = None, multipliers=None) -> one.ScoreVector:
    """Scores of ``Z* = Gamma_hat sum_i (X_i - Xbar) e_i / n``.

    ``multipliers`` overrides the draws from ``stream`` (mainly for tests).
    """
    X = as_data_matrix(X, min_rows=1)
    n = X.shape[0]
    if multipliers is None:
        multipliers = stream.generator().standard_normal(n)
    e = np.asarray(multipliers, dtype=float)
    xstar = (X - X.mean(axis=0)).T @ e / n
    return one.scores_from_mean(xstar, gamma_hat, n)


class _OneSampleStatistic:
    """Evaluates one statistic family on the observed mean and on batches of replicate means."""

    def __init__(self, X, gamma, spec: StatisticSpec):
        if spec.family == "DenseU":
            raise BadSpec("the U-statistic has no mean-replacement analog; bootstrap family Dense instead")
        self.X = as_data_matrix(X)
        self.n, self.p = self.X.shape
        self.gamma = np.asarray(gamma, dtype=float)
        self.spec = spec
        self.diag = one._gamma_diag(self.gamma)
        if spec.family == "Hotelling":
            if self.n <= self.p + 1:
                raise Singular(f"Hotelling's statistic needs n > p + 1 (n={self.n}, p={self.p})")
            self.S = np.cov(self.X, rowvar=False, ddof=1).reshape(self.p, self.p)
            try:
                spd_solve(self.S, np.zeros(self.p))
            except NotPositiveDefinite as exc:
                raise Singular(str(exc)) from exc

    def observed(self) -> one.StatValue:
        s, X, g = self.spec, self.X, self.gamma
        if s.family == "Thred":
            return one.thred_stat(X, s.delta)
        if s.family in ("Dense", "DenseU"):
            lr, lru = one.dense_stat(X, g)
            return lr if s.family == "Dense" else lru
        if s.family == "Hotelling":
            return one.hotelling(X)
        return self._from_scores(one.scores(X, g))

    def _from_scores(self, sc: one.ScoreVector) -> one.StatValue:
        s, g = self.spec, self.gamma
        if s.family == "T":
            return one.t_stat(sc, s.k)
        if s.family == "Modified":
            return one.modified_stat(sc, s.M)
        if s.family == "LR_exact":
            return one.lr_exact(sc, g, s.k)
        if s.family == "Graph":
            return one.graph_stat(sc, g, s.k)
        if s.family == "Screened":
            return one.screened_stat(sc, g, s.k, s.delta)
        raise BadSpec(f"family {s.family} is not score based")

    def replicates(self, means: np.ndarray) -> np.ndarray:
        """Statistic values with ``Xbar`` replaced by each row of ``means``."""
        s, n = self.spec, self.n
        if s.family == "Thred":
            sq = np.where(np.abs(means) > s.delta, means * means, 0.0)
            return n * one.top_k_prefix(sq, self.p)[:, -1]
        if s.family == "Dense":
            return n * np.einsum("bi,ij,bj->b", means, self.gamma, means)
        if s.family == "Hotelling":
            sol = spd_solve(self.S, means.T).T
            return n * np.einsum("bi,bi->b", means, sol)
        z = means @ self.gamma.T
        xi = z * z / self.diag
        if s.family == "T":
            return n * one.top_k_prefix(xi, s.k)[:, s.k - 1]
        if s.family == "Modified":
            return one.modified_from_t(n * one.top_k_prefix(xi, s.M), n)[0]
        return np.array([self._from_scores(one.ScoreVector(z[b], xi[b], n)).value for b in range(z.shape[0])])


def _replicate_values(stat: _OneSampleStatistic, cfg: BootstrapConfig) -> np.ndarray:
    Xc = stat.X - stat.X.mean(axis=0)
    n = stat.n

    def chunk(start, stop):
        E = replicate_multipliers(cfg.seed, start, stop, n)
        return stat.replicates(E @ Xc / n)

    return run_chunks(chunk, int(cfg.replications), int(cfg.workers))


def critical_value(X, gamma_hat, spec: StatisticSpec, cfg: BootstrapConfig, observed: float | None = None) -> BootstrapResult:
    """Bootstrap distribution, critical value and p-value for one statistic.

    ``gamma_hat`` is held fixed across replicates. When ``observed`` is not
    given it is computed from ``X``.
    """
    gamma = gamma_hat.gamma_hat if isinstance(gamma_hat, PrecisionEstimate) else gamma_hat
    stat = _OneSampleStatistic(X, gamma, spec)
    if observed is None:
        observed = stat.observed().value
    return summarize(_replicate_values(stat, cfg), observed, cfg.alpha)


def run_test(X, precision: PrecisionSpec | None = None, statistic: StatisticSpec | None = None,
             cfg: BootstrapConfig | None = None, return_replicates: bool = False):
    """Estimate the precision matrix, compute the statistic and calibrate it.

    Returns a :class:`TestOutcome`, or ``(outcome, replicate_values)`` when
    ``return_replicates`` is set.
    """
    precision = PrecisionSpec() if precision is None else precision
    statistic = StatisticSpec() if statistic is None else statistic
    cfg = BootstrapConfig() if cfg is None else cfg
    X = as_data_matrix(X)
    if statistic.family == "Hotelling" or statistic.family == "Thred":
        gamma = np.eye(X.shape[1])
        est = None
    else:
        est = estimate_precision(X, precision)
        gamma = precision_matrix(est, precision.symmetrize or statistic.family in BLOCK_FAMILIES)
    stat = _OneSampleStatistic(X, gamma, statistic)
    obs = stat.observed()
    res = summarize(_replicate_values(stat, cfg), obs.value, cfg.alpha)
    extra = {"support": list(obs.support)}
    if est is not None and est.level is not None:
        extra["lambda"] = est.level
    if statistic.family in ("Dense", "DenseU"):
        lr, lru = one.dense_stat(X, gamma)
        extra["dense"], extra["dense_u"] = lr.value, lru.value
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
