"""Monte Carlo machinery: covariance models, signal schemes, samplers, power studies.

A :class:`Scenario` fully describes an experiment. Replication ``r`` draws
everything it needs (signal locations, data, bootstrap seed) from
``RngStream(seed, r)``, so results do not depend on how replications are
scheduled across workers.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.stats

from . import onesample as one
from .bootstrap import (
    BootstrapConfig,
    StatisticSpec,
    _OneSampleStatistic,
    empirical_critical_value,
    replicate_multipliers,
)
from .core import RngStream, as_symmetric, cholesky_spd, matrix_sqrt_sym, spd_solve
from .exceptions import BadSpec, HDMeanError, NotPositiveDefinite
from .precision import PrecisionSpec, estimate_from_gram, precision_matrix, sample_gram
from .twosample import _TwoSampleStatistic, pooled_centered, select_k

COV_MODELS = ("a", "b", "c", "d")
SIGNALS = ("none", "case1", "case2", "case3", "alloc_sqrt", "alloc_linear", "alloc_rational", "alloc_random")
DISTS = ("gaussian", "gamma41")

# stream index reserved for scenario-level draws (model (d)'s diagonal)
SCENARIO_STREAM = 10**12
FAIL_FRACTION = 0.01

# Penalty levels, in units of sqrt(log p / n) with n the pooled row count,
# used by the Table 1 reproduction. Under the block models the selection
# criterion keeps improving as the penalty drops toward the sample inverse
# and jumps to the diagonal estimate once the grid reaches it, so the grid
# ends are the effective tuning. They were fixed by pilot runs on the H0
# and Case 1 cells; lower ends over-reject at n = 80.
TABLE1_GRID = tuple(np.round(np.geomspace(2.0, 4.0, 7), 6))


# ---------------------------------------------------------------------------
# covariance models and signals
# ---------------------------------------------------------------------------


def _block_pairs(p: int, within: float) -> np.ndarray:
    A = np.eye(p)
    for start in range(0, p - 1, 2):
        A[start, start + 1] = A[start + 1, start] = within
    return A


def _ar1_precision(p: int, rho: float) -> np.ndarray:
    G = np.zeros((p, p))
    idx = np.arange(p)
    G[idx, idx] = (1 + rho**2) / (1 - rho**2)
    G[0, 0] = G[-1, -1] = 1 / (1 - rho**2)
    G[idx[:-1], idx[1:]] = G[idx[1:], idx[:-1]] = -rho / (1 - rho**2)
    if p == 1:
        G[0, 0] = 1.0
    return G


def ar1_covariance(p: int, rho: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """``sigma_jk = rho**|j-k|`` and its (tridiagonal) inverse in closed form."""
    idx = np.arange(p)
    return rho ** np.abs(np.subtract.outer(idx, idx)), _ar1_precision(p, rho)


def _inverse(A) -> np.ndarray:
    try:
        return as_symmetric(spd_solve(A, np.eye(A.shape[0])))
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"covariance model is not invertible: {exc}") from exc


def make_covariance(model: str, p: int, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Covariance ``Sigma`` and precision ``Gamma`` for models (a)-(d).

    (a) 2x2 blocks with correlation 0.8; (b) ``0.6**|j-k|``; (c) banded
    precision with bands (2, .8, .4, .4, .2); (d) ``D^1/2 Sigma_a^2 D^1/2``
    with ``D`` uniform on (1, 3), drawn from ``rng``.
    """
    if model == "a":
        S = _block_pairs(p, 0.8)
        # each 2x2 block inverts in closed form
        G = _block_pairs(p, -0.8)
        for start in range(0, p - 1, 2):
            G[start : start + 2, start : start + 2] /= 1 - 0.8**2
        return S, G
    if model == "b":
        return ar1_covariance(p, 0.6)
    if model == "c":
        if p < 5:
            raise BadSpec("model (c) needs p >= 5")
        G = 2.0 * np.eye(p)
        for off, val in zip(range(1, 5), (0.8, 0.4, 0.4, 0.2)):
            G += val * (np.eye(p, k=off) + np.eye(p, k=-off))
        return _inverse(G), G
    if model == "d":
        if rng is None:
            raise BadSpec("model (d) needs a random generator for its diagonal")
        d = np.sqrt(rng.uniform(1.0, 3.0, size=p))
        S0 = _block_pairs(p, 0.8)
        G = as_symmetric(d[:, None] * (S0 @ S0) * d[None, :])
        return _inverse(G), G
    raise BadSpec(f"unknown covariance model {model!r}")


def signal_size(signal: str, p: int) -> int:
    sizes = {
        "case1": int(np.floor(0.05 * p)),
        "case2": int(np.floor(np.sqrt(p))),
        "case3": int(np.floor(p**0.3)),
    }
    if signal in sizes:
        return sizes[signal]
    if signal.startswith("alloc_"):
        return int(np.floor(0.1 * p))
    raise BadSpec(f"unknown signal scheme {signal!r}")


def make_signal(signal: str, p: int, n: int, rng: np.random.Generator, r: float | None = None) -> np.ndarray:
    """Sparse mean vector for one of the simulation signal schemes.

    Locations are drawn without replacement; for the allocation schemes the
    ``j``-th drawn location receives the ``j``-th magnitude.
    """
    theta = np.zeros(p)
    if signal == "none":
        return theta
    k = signal_size(signal, p)
    if k == 0:
        raise BadSpec(f"signal {signal} with p={p} has no nonzero entries")
    loc = rng.choice(p, size=k, replace=False)
    if signal in ("case1", "case2"):
        theta[loc] = rng.choice([-1.0, 1.0], size=k) * np.sqrt(np.log(p) / n)
        return theta
    if r is None or r <= 0:
        raise BadSpec(f"signal {signal} needs a strength r > 0")
    base = np.sqrt(4 * r * np.log(p) / n)
    j = np.arange(1, k + 1)
    factors = {
        "case3": np.ones(k),
        "alloc_sqrt": np.sqrt(j / k),
        "alloc_linear": j / k,
        "alloc_rational": 1.0 / j,
    }
    if signal == "alloc_random":
        theta[loc] = base * rng.uniform(-1.0, 1.0, size=k)
    elif signal in factors:
        theta[loc] = base * factors[signal]
    else:
        raise BadSpec(f"unknown signal scheme {signal!r}")
    return theta


def spike_signal(p: int, k0: int, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    theta = np.zeros(p)
    theta[rng.choice(p, size=k0, replace=False)] = magnitude
    return theta


def transformed_signal(theta, gamma) -> np.ndarray:
    """Studentized transformed mean ``(Gamma theta)_j / sqrt(gamma_jj)``."""
    gamma = np.asarray(gamma, dtype=float)
    return gamma @ np.asarray(theta, dtype=float) / np.sqrt(np.diag(gamma))


def standardized_noise(dist: str, size, rng: np.random.Generator) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(size)
    if dist == "gamma41":
        # Gamma(4, 1) has mean 4 and variance 4
        return (rng.gamma(4.0, 1.0, size) - 4.0) / 2.0
    raise BadSpec(f"unknown distribution {dist!r}")


def sample_dataset(theta, sigma, n: int, dist: str, rng: np.random.Generator, sigma_root=None) -> np.ndarray:
    """Rows ``theta + Sigma^{1/2} U`` with i.i.d. standardized coordinates in ``U``."""
    theta = np.asarray(theta, dtype=float)
    root = matrix_sqrt_sym(sigma) if sigma_root is None else sigma_root
    U = standardized_noise(dist, (n, theta.shape[0]), rng)
    return theta + U @ root


# ---------------------------------------------------------------------------
# the oracle power function
# ---------------------------------------------------------------------------


def _tw_values(W, shift, k):
    V = W + shift
    return one.top_k_prefix(V * V, k)[:, k - 1]


def power_oracle(k: int, alpha: float, theta_tilde, gamma, n: int = 1, reps: int = 100_000,
                 seed: int = 0, chunk: int = 10_000) -> float:
    """Monte Carlo power of ``T^W(k; theta_tilde)`` at level ``alpha``.

    The critical value is the (1 - alpha) quantile of ``T^W(k; 0)`` over
    ``reps`` draws from ``RngStream(seed, 0)``; power is the rejection rate
    over ``reps`` fresh draws from ``RngStream(seed, 1)``. ``W`` is normal
    with the correlation matrix of ``gamma``.
    """
    gamma = np.asarray(gamma, dtype=float)
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    p = gamma.shape[0]
    if not 1 <= k <= p:
        raise one.BadK(f"k must lie in [1, {p}]")
    s = 1.0 / np.sqrt(np.diag(gamma))
    L = cholesky_spd(as_symmetric(s[:, None] * gamma * s[None, :]))
    shift = np.sqrt(n) * theta_tilde

    def draws(index, shift_vec):
        g = RngStream(seed, index).generator()
        out = []
        for start in range(0, reps, chunk):
            m = min(chunk, reps - start)
            W = g.standard_normal((m, p)) @ L.T
            out.append(_tw_values(W, shift_vec, k))
        return np.concatenate(out)

    crit = empirical_critical_value(draws(0, np.zeros(p)), alpha)
    return float(np.mean(draws(1, shift) > crit))


@dataclass
class PowerCurve:
    grid: list
    rejection_rates: dict
    mc_stderr: dict
    reps: int

    def to_rows(self) -> list[dict]:
        rows = []
        for name, rates in self.rejection_rates.items():
            for r, rate, se in zip(self.grid, rates, self.mc_stderr[name]):
                rows.append({"statistic": name, "r": r, "rate": rate, "stderr": se})
        return rows


def mc_stderr(rate: float, reps: int) -> float:
    return float(np.sqrt(rate * (1 - rate) / reps))


def power_curve(p: int = 200, k0: int = 5, ks=(1, 5, 10, 20), r_grid=(0.1, 0.2, 0.3, 0.4, 0.5),
                n: int = 100, rho: float = 0.6, alpha: float = 0.05, reps: int = 20_000, seed: int = 0) -> PowerCurve:
    """Oracle power of ``T(k)`` against ``k0`` equal spikes ``sqrt(2 r log p / n)`` under AR(1).

    Spike locations are drawn once and shared along the ``r`` grid; every
    ``k`` uses its own streams.
    """
    _, gamma = ar1_covariance(p, rho)
    loc_rng = RngStream(seed, SCENARIO_STREAM).generator()
    unit = spike_signal(p, k0, 1.0, loc_rng)
    rates, errs = {}, {}
    for k in ks:
        name = f"T({k})"
        rates[name], errs[name] = [], []
        k_seed = RngStream(seed, k).child_seed()
        for r in r_grid:
            theta = unit * np.sqrt(2 * r * np.log(p) / n)
            rate = power_oracle(k, alpha, transformed_signal(theta, gamma), gamma, n, reps, k_seed)
            rates[name].append(rate)
            errs[name].append(mc_stderr(rate, reps))
    return PowerCurve(list(r_grid), rates, errs, reps)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


_STAT_RE = re.compile(r"^(T|Tmod|Tkhat)\((\d+)\)$")


def parse_statistic(name: str) -> tuple[str, int]:
    """``"T(4)"``, ``"Tmod(40)"``, ``"Tkhat(40)"`` or ``"Hotelling"``."""
    if name == "Hotelling":
        return "Hotelling", 0
    m = _STAT_RE.match(name)
    if not m:
        raise BadSpec(f"cannot parse statistic {name!r}")
    return m.group(1), int(m.group(2))


@dataclass(frozen=True)
class Scenario:
    """One Monte Carlo experiment.

    ``n2 = 0`` means a one-sample experiment. ``grid`` lists penalty levels
    in units of ``sqrt(log p / n)`` (``n`` the pooled size) for the
    nodewise square-root Lasso; ``level`` fixes one level instead.
    """

    cov_model: str = "a"
    p: int = 50
    n1: int = 80
    n2: int = 80
    signal: str = "none"
    r: float | None = None
    dist: str = "gaussian"
    reps: int = 1000
    bootstrap_B: int = 500
    alpha: float = 0.05
    seed: int = 20160101
    statistics: tuple = ("T(1)", "T(4)")
    precision_method: str = "sqrt_lasso"
    grid: tuple | None = TABLE1_GRID
    level: float | None = None

    def __post_init__(self):
        if self.cov_model not in COV_MODELS:
            raise BadSpec(f"unknown covariance model {self.cov_model!r}")
        if self.signal not in SIGNALS:
            raise BadSpec(f"unknown signal scheme {self.signal!r}")
        if self.dist not in DISTS:
            raise BadSpec(f"unknown distribution {self.dist!r}")
        if self.p < 2 or self.reps < 1 or self.n1 < 3 or self.n2 < 0 or self.n2 in (1, 2):
            raise BadSpec("need p >= 2, reps >= 1, n1 >= 3 and n2 = 0 or n2 >= 3")
        if self.precision_method not in ("lasso", "sqrt_lasso"):
            raise BadSpec("scenarios estimate the precision with 'lasso' or 'sqrt_lasso'")
        for s in self.statistics:
            parse_statistic(s)
        object.__setattr__(self, "statistics", tuple(self.statistics))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))

    @property
    def two_sample(self) -> bool:
        return self.n2 > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["statistics"] = list(self.statistics)
        d["grid"] = None if self.grid is None else list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise BadSpec(f"unknown scenario fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("statistics", "grid"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ScenarioResult:
    scenario: Scenario
    rejections: dict
    completed: int
    failures: int
    lambdas: list = field(default_factory=list)
    k_hat: list = field(default_factory=list)

    def rate(self, name: str) -> float:
        return self.rejections[name] / self.completed

    def stderr(self, name: str) -> float:
        return mc_stderr(self.rate(name), self.completed)

    def rows(self) -> list[dict]:
        return [
            {"statistic": s, "rate": self.rate(s), "stderr": self.stderr(s), "rejections": self.rejections[s],
             "reps": self.completed}
            for s in self.scenario.statistics
        ]


class _ScenarioContext:
    """Per-scenario constants shared by every replication."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.sigma, self.gamma = make_covariance(sc.cov_model, sc.p, RngStream(sc.seed, SCENARIO_STREAM).generator())
        self.root = matrix_sqrt_sym(self.sigma)
        n_pool = sc.n1 + sc.n2
        unit = np.sqrt(np.log(sc.p) / n_pool)
        if sc.level is not None:
            self.spec = PrecisionSpec(sc.precision_method, level=sc.level * unit)
        elif sc.grid is not None:
            self.spec = PrecisionSpec(sc.precision_method, grid=tuple(np.asarray(sc.grid) * unit))
        else:
            self.spec = PrecisionSpec(sc.precision_method)
        self.parsed = [parse_statistic(s) for s in sc.statistics]

    def replicate(self, rep: int) -> tuple[dict, float | None, int | None]:
        sc = self.sc
        g = RngStream(sc.seed, rep).generator()
        theta = make_signal(sc.signal, sc.p, sc.n1, g, sc.r)
        X = sample_dataset(theta, self.sigma, sc.n1, sc.dist, g, self.root)
        Y = sample_dataset(np.zeros(sc.p), self.sigma, sc.n2, sc.dist, g, self.root) if sc.two_sample else None
        boot_seed = int(g.integers(0, 2**63 - 1))
        if sc.two_sample:
            Z = pooled_centered(X, Y)
        else:
            Z = X - X.mean(axis=0)
        est = estimate_from_gram(sample_gram(Z), Z.shape[0], self.spec)
        gamma_hat = precision_matrix(est, False)
        cfg = BootstrapConfig(sc.bootstrap_B, sc.alpha, boot_seed)
        decisions, k_hat = {}, None
        means = _bootstrap_means(X, Y, cfg)
        for name, (kind, k) in zip(sc.statistics, self.parsed):
            if kind == "Hotelling":
                decisions[name] = _hotelling_reject(X, Y, sc.alpha)
                continue
            if kind == "Tkhat":
                k = select_k(X, Y, gamma_hat, k) if sc.two_sample else _select_k_one(X, gamma_hat, k)
                k_hat, kind = k, "T"
            spec = StatisticSpec("T", k=k) if kind == "T" else StatisticSpec("Modified", k=None, M=k)
            if sc.two_sample:
                stat = _TwoSampleStatistic(X, Y, spec, gamma=gamma_hat)
                reps = stat.replicates(*means)
            else:
                stat = _OneSampleStatistic(X, gamma_hat, spec)
                reps = stat.replicates(means)
            observed = stat.observed().value
            decisions[name] = bool(observed > empirical_critical_value(reps, sc.alpha))
        return decisions, est.level, k_hat


def _bootstrap_means(X, Y, cfg: BootstrapConfig):
    B = int(cfg.replications)
    Xc = X - X.mean(axis=0)
    n1 = X.shape[0]
    if Y is None:
        E = replicate_multipliers(cfg.seed, 0, B, n1)
        return E @ Xc / n1
    Yc = Y - Y.mean(axis=0)
    n2 = Y.shape[0]
    E = replicate_multipliers(cfg.seed, 0, B, n1 + n2)
    return E[:, :n1] @ Xc / n1, E[:, n1:] @ Yc / n2


def _select_k_one(X, gamma_hat, M):
    sc = one.scores(X, gamma_hat)
    return int(one.modified_stat(sc, M).k_used)


def _hotelling_reject(X, Y, alpha) -> bool:
    """Hotelling's test with its exact F calibration (False when p is too large)."""
    p = X.shape[1]
    if Y is None:
        n = X.shape[0]
        if n <= p + 1:
            return False
        t2 = one.hotelling(X).value
        f = t2 * (n - p) / (p * (n - 1))
        return bool(f > scipy.stats.f.ppf(1 - alpha, p, n - p))
    n1, n2 = X.shape[0], Y.shape[0]
    N = n1 + n2 - 2
    if N - p + 1 <= 0:
        return False
    Z = pooled_centered(X, Y)
    S = Z.T @ Z / N
    d = X.mean(axis=0) - Y.mean(axis=0)
    try:
        t2 = n1 * n2 / (n1 + n2) * float(d @ spd_solve(S, d))
    except NotPositiveDefinite:
        return False
    f = t2 * (N - p + 1) / (p * N)
    return bool(f > scipy.stats.f.ppf(1 - alpha, p, N - p + 1))


def run_scenario(sc: Scenario, workers: int = 1, progress=None) -> ScenarioResult:
    """Rejection counts for every configured statistic over ``sc.reps`` replications.

    Replications that raise a package error are counted as failures; the
    run aborts once failures exceed 1% of ``reps``.
    """
    ctx = _ScenarioContext(sc)
    max_fail = int(np.floor(FAIL_FRACTION * sc.reps))

    def one_rep(rep):
        try:
            return ctx.replicate(rep)
        except HDMeanError as exc:
            return exc

    if workers <= 1:
        results = []
        for rep in range(sc.reps):
            results.append(one_rep(rep))
            if progress is not None:
                progress(rep + 1, sc.reps)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_rep, range(sc.reps)))
    rejections = {s: 0 for s in sc.statistics}
    failures, lambdas, k_hats = 0, [], []
    for res in results:
        if isinstance(res, Exception):
            failures += 1
            if failures > max_fail:
                raise HDMeanError(f"{failures} of {sc.reps} replications failed; last error: {res}")
            continue
        decisions, lam, k_hat = res
        for s, rej in decisions.items():
            rejections[s] += int(rej)
        lambdas.append(lam)
        if k_hat is not None:
            k_hats.append(k_hat)
    return ScenarioResult(sc, rejections, sc.reps - failures, failures, lambdas, k_hats)


def scenario_curve(sc: Scenario, r_grid, workers: int = 1) -> PowerCurve:
    """Monte Carlo rejection rates of a scenario along a signal-strength grid."""
    rates = {s: [] for s in sc.statistics}
    errs = {s: [] for s in sc.statistics}
    for r in r_grid:
        res = run_scenario(replace(sc, r=float(r)), workers)
        for s in sc.statistics:
            rates[s].append(res.rate(s))
            errs[s].append(res.stderr(s))
    return PowerCurve(list(r_grid), rates, errs, sc.reps)


TABLE1_STATISTICS = ("Hotelling", "T(1)", "T(4)", "T(8)", "T(12)", "T(24)", "Tmod(40)")


def table1_scenarios(model: str, p: int, reps: int = 1000, bootstrap_B: int = 500, seed: int = 20160101,
                     statistics=TABLE1_STATISTICS) -> list[Scenario]:
    """The H0 / Case 1 / Case 2 rows of one (model, p) block of Table 1."""
    return [
        Scenario(model, p, 80, 80, signal, None, "gaussian", reps, bootstrap_B, 0.05, seed, tuple(statistics))
        for signal in ("none", "case1", "case2")
    ]


def signal_transform_demo(p: int = 200, n: int = 100, k0: int = 4, rho: float = 0.6, seed: int = 0):
    """Original and transformed-studentized signals for an AR(1) precision.

    The ``k0`` locations are redrawn until they are interior and pairwise at
    least three apart, so each spike spreads to exactly three coordinates.
    """
    _, gamma = ar1_covariance(p, rho)
    g = RngStream(seed, 0).generator()
    while True:
        loc = np.sort(g.choice(np.arange(1, p - 1), size=k0, replace=False))
        if k0 < 2 or np.min(np.diff(loc)) >= 3:
            break
    theta = np.zeros(p)
    theta[loc] = g.choice([-1.0, 1.0], size=k0) * np.sqrt(np.log(p) / n)
    return theta, transformed_signal(theta, gamma)
