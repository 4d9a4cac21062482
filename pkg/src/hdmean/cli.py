"""Command-line front end.

Every option can also come from a JSON file given with ``--config`` (keys
are the option names with dashes turned into underscores); flags on the
command line win over the file, which wins over the built-in defaults. The
seed falls back to ``HDMEAN_SEED`` and then to a fixed constant.

Exit status: 0 on success, 2 on usage errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import simlab
from .bootstrap import DEFAULT_SEED, BootstrapConfig, StatisticSpec, run_test
from .core import read_matrix_csv, write_matrix_csv
from .exceptions import BadK, BadM, BadSpec, DimensionMismatch, HDMeanError
from .precision import PrecisionSpec, diagnostics, estimate_from_gram, precision_matrix, sample_gram
from .twosample import pooled_centered, run_two_sample_test

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

STATISTICS = {
    "t": "T",
    "lr-exact": "LR_exact",
    "thred": "Thred",
    "dense": "Dense",
    "graph": "Graph",
    "screened": "Screened",
    "modified": "Modified",
    "hotelling": "Hotelling",
}
PRECISIONS = {"nodewise": "lasso", "sqrt-lasso": "sqrt_lasso", "oracle-file": "oracle"}

_PRECISION_DEFAULTS = {"precision": "sqrt-lasso", "lambda": None, "lambda_grid": None, "symmetrize": False,
                       "gamma_file": None}
_BOOT_DEFAULTS = {"bootstrap": 500, "alpha": 0.05, "workers": 1, "dump_replicates": None}

DEFAULTS = {
    "test one-sample": {"data": None, "out": None, "statistic": "t", "k": 4, "M": None, "delta": None,
                        **_PRECISION_DEFAULTS, **_BOOT_DEFAULTS},
    "test two-sample": {"data": None, "out": None, "statistic": "t", "k": 4, "select_k": None, "modified": None,
                        "equal_cov": True, **_PRECISION_DEFAULTS, **_BOOT_DEFAULTS},
    "estimate-precision": {"data": None, "out": None, "diagnostics": None, **_PRECISION_DEFAULTS},
    "simulate": {"scenario": None, "out": None, "curve_out": None, "r_grid": None, "workers": 1,
                 "model": None, "p": None, "n1": None, "n2": None, "signal": None, "r": None, "dist": None,
                 "reps": None, "bootstrap": None, "alpha": None, "statistics": None, "grid_multipliers": None},
    "power-curve": {"out": None, "p": 200, "k0": 5, "ks": "1,5,10,20", "r_grid": "0.1,0.2,0.3,0.4,0.5", "n": 100,
                    "rho": 0.6, "alpha": 0.05, "reps": 20000},
    "reproduce table1": {"out": None, "model": "a", "p": 50, "reps": 1000, "bootstrap": 500, "dist": "gaussian",
                         "workers": 1},
    "demo signal-transform": {"out": None, "p": 200, "n": 100, "k0": 4, "rho": 0.6},
}

# settings that never change results and so stay out of embedded configs
_NOT_EMBEDDED = {"workers", "out", "curve_out", "dump_replicates", "diagnostics", "config"}


class UsageError(Exception):
    """Invalid command line or configuration; the message lists every problem."""


@dataclass
class RunConfig:
    command: str
    seed: int
    settings: dict = field(default_factory=dict)

    def embedded(self) -> dict:
        """The resolved configuration as written into output artifacts."""
        return {"command": self.command, "seed": self.seed,
                **{k: v for k, v in sorted(self.settings.items()) if k not in _NOT_EMBEDDED}}

    def __getitem__(self, key):
        return self.settings[key]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _add_precision(p):
    p.add_argument("--precision", choices=sorted(PRECISIONS))
    p.add_argument("--sqrt-lasso", dest="precision", action="store_const", const="sqrt-lasso",
                   help="shorthand for --precision sqrt-lasso")
    p.add_argument("--lambda", dest="lambda", type=float, help="fixed penalty level")
    p.add_argument("--lambda-grid", help="comma-separated penalty levels to select from")
    p.add_argument("--symmetrize", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--gamma-file", nargs="+", help="precision CSV(s) for --precision oracle-file")


def _add_bootstrap(p):
    p.add_argument("--bootstrap", type=int, metavar="B", help="bootstrap replications")
    p.add_argument("--alpha", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--dump-replicates", metavar="CSV", help="write the bootstrap replicate values here")


def _common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--config", metavar="JSON", help="option values; command-line flags take precedence")
    p.add_argument("--out", help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdmean", argument_default=argparse.SUPPRESS,
                                     description="Tests for sparse high-dimensional mean vectors.")
    parser.add_argument("--version", action="version", version=f"hdmean {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kw = {"argument_default": argparse.SUPPRESS}

    test = sub.add_parser("test", help="run a one- or two-sample test", **kw)
    test_sub = test.add_subparsers(dest="variant", required=True)
    one = test_sub.add_parser("one-sample", help="H0: the mean is zero", **kw)
    one.add_argument("--data", help="CSV, one observation per line")
    one.add_argument("--statistic", choices=sorted(STATISTICS))
    one.add_argument("--k", type=int)
    one.add_argument("--M", type=int, help="upper bound for the modified statistic")
    one.add_argument("--delta", type=float, help="threshold for thred and screened")
    _add_precision(one)
    _add_bootstrap(one)
    _common(one)

    two = test_sub.add_parser("two-sample", help="H0: two means are equal", **kw)
    two.add_argument("--data", nargs=2, metavar=("X", "Y"), help="two CSV files")
    two.add_argument("--statistic", choices=["t", "modified"])
    two.add_argument("--k", type=int)
    two.add_argument("--select-k", type=int, metavar="M", help="choose k from the data with upper bound M")
    two.add_argument("--modified", type=int, metavar="M", help="use the modified statistic with upper bound M")
    cov = two.add_mutually_exclusive_group()
    cov.add_argument("--equal-cov", dest="equal_cov", action="store_const", const=True)
    cov.add_argument("--unequal-cov", dest="equal_cov", action="store_const", const=False)
    _add_precision(two)
    _add_bootstrap(two)
    _common(two)

    est = sub.add_parser("estimate-precision", help="fit the nodewise precision estimate", **kw)
    est.add_argument("--data", nargs="+", help="one CSV, or two to pool with separate centering")
    est.add_argument("--diagnostics", metavar="JSON", help="diagnostics file (default: next to --out)")
    _add_precision(est)
    _common(est)

    sim = sub.add_parser("simulate", help="Monte Carlo rejection rates for a scenario", **kw)
    sim.add_argument("--scenario", metavar="JSON")
    sim.add_argument("--model", choices=simlab.COV_MODELS)
    sim.add_argument("--p", type=int)
    sim.add_argument("--n1", type=int)
    sim.add_argument("--n2", type=int, help="0 for a one-sample scenario")
    sim.add_argument("--signal", choices=simlab.SIGNALS)
    sim.add_argument("--r", type=float)
    sim.add_argument("--dist", choices=simlab.DISTS)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--bootstrap", type=int)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--statistics", help='comma-separated, e.g. "T(1),T(4),Tmod(40),Hotelling"')
    sim.add_argument("--grid-multipliers", help="penalty grid in units of sqrt(log p / n)")
    sim.add_argument("--r-grid", help="signal strengths for a power curve")
    sim.add_argument("--curve-out", help="power-curve CSV (needs --r-grid)")
    sim.add_argument("--workers", type=int)
    _common(sim)

    pc = sub.add_parser("power-curve", help="oracle power of T(k) against equal spikes", **kw)
    for name, typ in (("--p", int), ("--k0", int), ("--n", int), ("--reps", int), ("--rho", float),
                      ("--alpha", float)):
        pc.add_argument(name, type=typ)
    pc.add_argument("--ks", help="comma-separated k values")
    pc.add_argument("--r-grid")
    _common(pc)

    rep = sub.add_parser("reproduce", help="regenerate published tables", **kw)
    rep_sub = rep.add_subparsers(dest="variant", required=True)
    t1 = rep_sub.add_parser("table1", help="H0, Case 1 and Case 2 rows for one model and p", **kw)
    t1.add_argument("--model", choices=simlab.COV_MODELS)
    t1.add_argument("--p", type=int)
    t1.add_argument("--reps", type=int)
    t1.add_argument("--bootstrap", type=int)
    t1.add_argument("--dist", choices=simlab.DISTS)
    t1.add_argument("--workers", type=int)
    _common(t1)

    demo = sub.add_parser("demo", help="small illustrations", **kw)
    demo_sub = demo.add_subparsers(dest="variant", required=True)
    st = demo_sub.add_parser("signal-transform", help="a sparse mean before and after the transform", **kw)
    for name, typ in (("--p", int), ("--n", int), ("--k0", int), ("--rho", float)):
        st.add_argument(name, type=typ)
    _common(st)
    return parser


def _floats(text, name, errors) -> list | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        values = [float(v) for v in items]
    except ValueError:
        errors.append(f"--{name.replace('_', '-')}: expected comma-separated numbers, got {text!r}")
        return None
    if not values:
        errors.append(f"--{name.replace('_', '-')}: empty list")
    return values


def _resolve_seed(explicit, config, errors) -> int:
    if "seed" in explicit:
        return int(explicit["seed"])
    if config.get("seed") is not None:
        return int(config["seed"])
    env = os.environ.get("HDMEAN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            errors.append(f"HDMEAN_SEED must be an integer, got {env!r}")
    return DEFAULT_SEED


def _validate(command: str, s: dict, errors: list) -> None:
    def positive_int(key, allow_none=True):
        v = s.get(key)
        if v is None:
            if not allow_none:
                errors.append(f"--{key.replace('_', '-')} is required")
            return
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            errors.append(f"--{key.replace('_', '-')} must be a positive integer, got {v!r}")

    def existing(key, required=True):
        v = s.get(key)
        if v is None:
            if required:
                errors.append(f"--{key.replace('_', '-')} is required")
            return
        for path in ([v] if isinstance(v, str) else v):
            if not Path(path).is_file():
                errors.append(f"--{key.replace('_', '-')}: no such file {path!r}")

    if command.startswith("test") or command == "estimate-precision":
        existing("data")
        if s.get("precision") not in PRECISIONS:
            errors.append(f"--precision must be one of {sorted(PRECISIONS)}")
        if s.get("precision") == "oracle-file":
            existing("gamma_file")
        if s.get("lambda") is not None and not s["lambda"] >= 0:
            errors.append("--lambda must be non-negative")
        if s.get("lambda") is not None and s.get("lambda_grid") is not None:
            errors.append("give at most one of --lambda and --lambda-grid")
        grid = _floats(s.get("lambda_grid"), "lambda_grid", errors)
        if grid is not None and any(not g >= 0 for g in grid):
            errors.append("--lambda-grid values must be non-negative")
        s["lambda_grid"] = grid
    if command.startswith("test"):
        positive_int("bootstrap")
        positive_int("workers")
        alpha = s.get("alpha")
        if not (isinstance(alpha, (int, float)) and 0 < alpha < 1):
            errors.append(f"--alpha must lie in (0, 1), got {alpha!r}")
        if s.get("statistic") not in STATISTICS:
            errors.append(f"--statistic must be one of {sorted(STATISTICS)}")
    if command == "test one-sample":
        fam = STATISTICS.get(s.get("statistic"))
        if fam in ("T", "LR_exact", "Graph", "Screened"):
            positive_int("k", allow_none=False)
        if fam == "Modified":
            positive_int("M", allow_none=False)
        if fam in ("Thred", "Screened") and s.get("delta") is None:
            errors.append(f"--delta is required for --statistic {s['statistic']}")
    if command == "test two-sample":
        if s.get("statistic") not in ("t", "modified"):
            errors.append("two-sample tests support --statistic t or modified")
        positive_int("k")
        positive_int("select_k")
        positive_int("modified")
        if s.get("select_k") is not None and s.get("modified") is not None:
            errors.append("give at most one of --select-k and --modified")
        if s.get("statistic") == "modified" and s.get("modified") is None:
            errors.append("--statistic modified needs --modified M")
    if command in ("simulate", "power-curve", "reproduce table1"):
        positive_int("workers")
    if command == "simulate":
        if s.get("scenario") is not None:
            existing("scenario")
        s["r_grid"] = _floats(s.get("r_grid"), "r_grid", errors)
        s["grid_multipliers"] = _floats(s.get("grid_multipliers"), "grid_multipliers", errors)
        if s.get("curve_out") is not None and s.get("r_grid") is None:
            errors.append("--curve-out needs --r-grid")
    if command == "power-curve":
        for key in ("p", "k0", "n", "reps"):
            positive_int(key, allow_none=False)
        s["r_grid"] = _floats(s.get("r_grid"), "r_grid", errors)
        ks = _floats(s.get("ks"), "ks", errors)
        s["ks"] = None if ks is None else [int(k) for k in ks]
    if command == "reproduce table1":
        for key in ("p", "reps", "bootstrap"):
            positive_int(key, allow_none=False)
    if command == "demo signal-transform":
        for key in ("p", "n", "k0"):
            positive_int(key, allow_none=False)


def parse_and_validate(argv) -> RunConfig:
    """Parse ``argv`` into a fully resolved :class:`RunConfig`.

    Raises :class:`UsageError` listing every invalid field; argparse itself
    exits with status 2 on malformed flags.
    """
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    variant = ns.pop("variant", None)
    if variant is not None:
        command = f"{command} {variant}"
    config_path = ns.pop("config", None)
    errors = []
    config = {}
    if config_path is not None:
        try:
            config = json.loads(Path(config_path).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"--config: cannot read {config_path!r}: {exc}") from exc
        if not isinstance(config, dict):
            raise UsageError("--config must hold a JSON object")
    allowed = set(DEFAULTS[command]) | {"seed"}
    unknown = sorted(set(config) - allowed)
    if unknown:
        errors.append(f"--config: unknown keys {unknown}")
    seed = _resolve_seed(ns, config, errors)
    settings = dict(DEFAULTS[command])
    settings.update({k: v for k, v in config.items() if k in allowed and k != "seed"})
    settings.update({k: v for k, v in ns.items() if k != "seed"})
    _validate(command, settings, errors)
    if errors:
        raise UsageError("; ".join(errors))
    return RunConfig(command, seed, settings)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _provenance(cfg: RunConfig) -> dict:
    return {"hdmean_version": __version__, "seed": cfg.seed, "config": cfg.embedded()}


def _header(cfg: RunConfig, extra: dict | None = None) -> str:
    return json.dumps({**_provenance(cfg), **(extra or {})}, sort_keys=True, default=_jsonable)


def _write(path, text: str) -> None:
    Path(path).write_text(text)


def _write_table(path, cfg: RunConfig, fieldnames, rows, extra: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_header(cfg, extra)}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


def _precision_spec(cfg: RunConfig, index: int = 0) -> PrecisionSpec:
    method = PRECISIONS[cfg["precision"]]
    gamma = None
    if method == "oracle":
        files = cfg["gamma_file"]
        files = [files] if isinstance(files, str) else files
        gamma = read_matrix_csv(files[min(index, len(files) - 1)])
    grid = cfg["lambda_grid"]
    return PrecisionSpec(method, level=cfg["lambda"], grid=None if grid is None else tuple(grid),
                         symmetrize=bool(cfg["symmetrize"]), gamma=gamma)


def _boot(cfg: RunConfig) -> BootstrapConfig:
    return BootstrapConfig(cfg["bootstrap"], cfg["alpha"], cfg.seed, cfg["workers"])


def _summary(outcome) -> str:
    decision = "reject H0" if outcome.reject else "do not reject H0"
    return (f"{outcome.family}: statistic={outcome.statistic:.6g} critical={outcome.critical_value:.6g} "
            f"p-value={outcome.p_value:.4g} -> {decision}")


def _emit_outcome(cfg: RunConfig, outcome, replicates) -> None:
    doc = {**_provenance(cfg), "result": outcome.to_dict()}
    if cfg["dump_replicates"] is not None:
        write_matrix_csv(cfg["dump_replicates"], np.asarray(replicates)[:, None], header=_header(cfg))
    if cfg["out"] is not None:
        _write(cfg["out"], _dumps(doc))
        print(_summary(outcome))
    else:
        print(_summary(outcome), file=sys.stderr)
        sys.stdout.write(_dumps(doc))


def _test_one(cfg: RunConfig) -> None:
    X = read_matrix_csv(cfg["data"])
    stat = StatisticSpec(STATISTICS[cfg["statistic"]], k=cfg["k"], M=cfg["M"], delta=cfg["delta"])
    outcome, reps = run_test(X, _precision_spec(cfg), stat, _boot(cfg), return_replicates=True)
    _emit_outcome(cfg, outcome, reps)


def _test_two(cfg: RunConfig) -> None:
    X, Y = (read_matrix_csv(path) for path in cfg["data"])
    if cfg["modified"] is not None:
        stat = StatisticSpec("Modified", k=None, M=cfg["modified"])
    else:
        stat = StatisticSpec("T", k=cfg["k"])
    precision2 = _precision_spec(cfg, 1) if cfg["precision"] == "oracle-file" else None
    outcome, reps = run_two_sample_test(X, Y, _precision_spec(cfg), stat, _boot(cfg), equal_cov=cfg["equal_cov"],
                                        select_bound=cfg["select_k"], precision2=precision2,
                                        return_replicates=True)
    _emit_outcome(cfg, outcome, reps)


def _estimate(cfg: RunConfig) -> None:
    if cfg["out"] is None:
        raise UsageError("--out is required for estimate-precision")
    data = [read_matrix_csv(path) for path in cfg["data"]]
    if len(data) > 2:
        raise UsageError("--data takes one or two files")
    Z = data[0] - data[0].mean(axis=0) if len(data) == 1 else pooled_centered(*data)
    S = sample_gram(Z)
    spec = _precision_spec(cfg)
    est = estimate_from_gram(S, Z.shape[0], spec)
    G = precision_matrix(est, spec.symmetrize)
    write_matrix_csv(cfg["out"], G)
    diag = diagnostics(G, S)
    doc = {
        **_provenance(cfg),
        "method": est.method,
        "selected_level": est.level,
        "n": int(Z.shape[0]),
        "p": int(G.shape[0]),
        "tau_sq": est.tau_sq,
        "fit_supnorm": diag.fit_supnorm,
        "nonzeros": int(np.count_nonzero(G)),
    }
    diag_path = cfg["diagnostics"] or str(Path(cfg["out"]).with_suffix(".json"))
    _write(diag_path, _dumps(doc))
    level = "n/a" if est.level is None else f"{est.level:.6g}"
    print(f"{est.method}: p={G.shape[0]} lambda={level} fit_supnorm={diag.fit_supnorm:.4g} -> {cfg['out']}")


_SCENARIO_FLAGS = {"model": "cov_model", "p": "p", "n1": "n1", "n2": "n2", "signal": "signal", "r": "r",
                   "dist": "dist", "reps": "reps", "bootstrap": "bootstrap_B", "alpha": "alpha",
                   "statistics": "statistics", "grid_multipliers": "grid"}


def _scenario(cfg: RunConfig) -> simlab.Scenario:
    fields = {}
    if cfg["scenario"] is not None:
        try:
            fields = json.loads(Path(cfg["scenario"]).read_text())
        except ValueError as exc:
            raise UsageError(f"--scenario: invalid JSON: {exc}") from exc
    for flag, name in _SCENARIO_FLAGS.items():
        if cfg[flag] is not None:
            value = cfg[flag]
            if flag == "statistics" and isinstance(value, str):
                value = [s.strip() for s in value.split(",") if s.strip()]
            fields[name] = value
    fields["seed"] = cfg.seed
    return simlab.Scenario.from_dict(fields)


def _lambda_summary(values) -> dict:
    if not values:
        return {"lambda_min": "", "lambda_median": "", "lambda_max": ""}
    v = np.asarray(values, dtype=float)
    return {"lambda_min": float(v.min()), "lambda_median": float(np.median(v)), "lambda_max": float(v.max())}


_TABLE_FIELDS = ["cell", "statistic", "rate", "stderr", "rejections", "reps", "failures",
                 "lambda_min", "lambda_median", "lambda_max"]


def _result_rows(cell: str, res: simlab.ScenarioResult) -> list[dict]:
    lam = _lambda_summary(res.lambdas)
    return [{"cell": cell, **row, "failures": res.failures, **lam} for row in res.rows()]


def _cell_name(sc: simlab.Scenario) -> str:
    return sc.signal if sc.r is None else f"{sc.signal}(r={sc.r:g})"


def _simulate(cfg: RunConfig) -> None:
    if cfg["out"] is None:
        raise UsageError("--out is required for simulate")
    sc = _scenario(cfg)
    res = simlab.run_scenario(sc, workers=cfg["workers"])
    resolved = {"scenario_resolved": sc.to_dict()}
    _write_table(cfg["out"], cfg, _TABLE_FIELDS, _result_rows(_cell_name(sc), res), resolved)
    if cfg["r_grid"] is not None and cfg["curve_out"] is not None:
        curve = simlab.scenario_curve(sc, cfg["r_grid"], workers=cfg["workers"])
        _write_table(cfg["curve_out"], cfg, ["statistic", "r", "rate", "stderr"], curve.to_rows(), resolved)
    rates = " ".join(f"{s}={res.rate(s):.3f}" for s in sc.statistics)
    print(f"{_cell_name(sc)}: {rates} ({res.completed} reps, {res.failures} failed) -> {cfg['out']}")


def _power_curve(cfg: RunConfig) -> None:
    if cfg["out"] is None:
        raise UsageError("--out is required for power-curve")
    curve = simlab.power_curve(cfg["p"], cfg["k0"], tuple(cfg["ks"]), tuple(cfg["r_grid"]), cfg["n"], cfg["rho"],
                               cfg["alpha"], cfg["reps"], cfg.seed)
    _write_table(cfg["out"], cfg, ["statistic", "r", "rate", "stderr"], curve.to_rows())
    last = ", ".join(f"{name}={rates[-1]:.3f}" for name, rates in curve.rejection_rates.items())
    print(f"power at r={curve.grid[-1]:g}: {last} -> {cfg['out']}")


def _table1(cfg: RunConfig) -> None:
    if cfg["out"] is None:
        raise UsageError("--out is required for reproduce table1")
    rows, sizes = [], ""
    for sc in simlab.table1_scenarios(cfg["model"], cfg["p"], cfg["reps"], cfg["bootstrap"], cfg.seed):
        if cfg["dist"] != sc.dist:
            sc = simlab.Scenario.from_dict({**sc.to_dict(), "dist": cfg["dist"]})
        res = simlab.run_scenario(sc, workers=cfg["workers"])
        rows.extend(_result_rows(sc.signal, res))
        if sc.signal == "none":
            sizes = f"T(4) size={res.rate('T(4)'):.3f}"
    _write_table(cfg["out"], cfg, _TABLE_FIELDS, rows)
    print(f"model ({cfg['model']}), p={cfg['p']}: {sizes} -> {cfg['out']}")


def _signal_demo(cfg: RunConfig) -> None:
    if cfg["out"] is None:
        raise UsageError("--out is required for demo signal-transform")
    theta, tilde = simlab.signal_transform_demo(cfg["p"], cfg["n"], cfg["k0"], cfg["rho"], cfg.seed)
    rows = [{"index": j + 1, "theta": theta[j], "theta_tilde": tilde[j]} for j in range(theta.size)]
    _write_table(cfg["out"], cfg, ["index", "theta", "theta_tilde"], rows)
    print(f"nonzeros: {np.count_nonzero(theta)} before, {np.count_nonzero(tilde)} after -> {cfg['out']}")


COMMANDS = {
    "test one-sample": _test_one,
    "test two-sample": _test_two,
    "estimate-precision": _estimate,
    "simulate": _simulate,
    "power-curve": _power_curve,
    "reproduce table1": _table1,
    "demo signal-transform": _signal_demo,
}

_USAGE_ERRORS = (UsageError, BadSpec, BadK, BadM, DimensionMismatch, OSError)


def execute(cfg: RunConfig) -> int:
    try:
        COMMANDS[cfg.command](cfg)
    except _USAGE_ERRORS as exc:
        print(f"hdmean: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HDMeanError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"hdmean: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # malformed CSV input and similar
        print(f"hdmean: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_and_validate(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"hdmean: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
