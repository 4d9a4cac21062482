import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from hdmean import __version__
from hdmean.bootstrap import TestOutcome
from hdmean.cli import UsageError, main, parse_and_validate
from hdmean.core import read_matrix_csv, write_matrix_csv

DATA = Path(__file__).parent / "data"
H0 = str(DATA / "h0_one_sample.csv")


def read_table(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# ")
    header = json.loads(lines[0][2:])
    return header, list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


@pytest.fixture
def two_files(tmp_path, rng):
    x, y = tmp_path / "x.csv", tmp_path / "y.csv"
    write_matrix_csv(x, rng.standard_normal((30, 8)))
    write_matrix_csv(y, rng.standard_normal((25, 8)) + 0.05)
    return str(x), str(y)


class TestParsing:
    def test_direct_mapping(self):
        cfg = parse_and_validate(["test", "one-sample", "--data", H0, "--k", "4", "--bootstrap", "500",
                                  "--alpha", "0.05", "--seed", "7"])
        assert cfg.command == "test one-sample"
        assert cfg["statistic"] == "t" and cfg["k"] == 4 and cfg.seed == 7

    def test_missing_data_names_flag(self):
        with pytest.raises(UsageError, match="--data"):
            parse_and_validate(["test", "one-sample"])

    def test_every_problem_is_listed(self, capsys):
        code = main(["test", "one-sample", "--alpha", "2", "--bootstrap", "0", "--statistic", "modified"])
        err = capsys.readouterr().err
        assert code == 2
        for flag in ("--data", "--alpha", "--bootstrap", "--M"):
            assert flag in err

    def test_unknown_flag(self, capsys):
        assert main(["test", "one-sample", "--data", H0, "--colour", "red"]) == 2

    def test_missing_file(self):
        with pytest.raises(UsageError, match="no such file"):
            parse_and_validate(["test", "one-sample", "--data", "nope.csv"])

    def test_flag_beats_config(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"k": 2, "alpha": 0.1, "seed": 3}))
        cfg = parse_and_validate(["test", "one-sample", "--data", H0, "--config", str(conf), "--k", "5"])
        assert cfg["k"] == 5 and cfg["alpha"] == 0.1 and cfg.seed == 3

    def test_unknown_config_key(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"kk": 2}))
        with pytest.raises(UsageError, match="kk"):
            parse_and_validate(["test", "one-sample", "--data", H0, "--config", str(conf)])

    def test_seed_fallbacks(self, monkeypatch):
        monkeypatch.delenv("HDMEAN_SEED", raising=False)
        assert parse_and_validate(["test", "one-sample", "--data", H0]).seed == 20160101
        monkeypatch.setenv("HDMEAN_SEED", "42")
        assert parse_and_validate(["test", "one-sample", "--data", H0]).seed == 42
        assert parse_and_validate(["test", "one-sample", "--data", H0, "--seed", "5"]).seed == 5

    def test_two_sample_conflicts(self, two_files):
        with pytest.raises(UsageError, match="at most one"):
            parse_and_validate(["test", "two-sample", "--data", *two_files, "--select-k", "3", "--modified", "3"])


class TestOneSample:
    def test_h0_fixture_not_rejected(self, tmp_path, capsys):
        out = tmp_path / "o.json"
        assert main(["test", "one-sample", "--data", H0, "--k", "4", "--seed", "7", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["result"]["reject"] is False
        assert doc["result"]["p_value"] > 0.05
        assert "do not reject H0" in capsys.readouterr().out

    def test_provenance_and_round_trip(self, tmp_path):
        out = tmp_path / "o.json"
        main(["test", "one-sample", "--data", H0, "--statistic", "modified", "--M", "6", "--bootstrap", "100",
              "--out", str(out)])
        doc = json.loads(out.read_text())
        assert doc["hdmean_version"] == __version__ and doc["seed"] == doc["config"]["seed"]
        assert doc["config"]["statistic"] == "modified" and doc["config"]["M"] == 6
        outcome = TestOutcome.from_dict(doc["result"])
        assert outcome.to_dict() == doc["result"]

    def test_stdout_when_no_out(self, capsys):
        assert main(["test", "one-sample", "--data", H0, "--bootstrap", "50"]) == 0
        captured = capsys.readouterr()
        assert json.loads(captured.out)["result"]["family"] == "T"
        assert "statistic=" in captured.err

    @pytest.mark.parametrize("args", [
        ["--statistic", "lr-exact", "--k", "2", "--lambda", "0.5"],
        ["--statistic", "thred", "--delta", "0.1"],
        ["--statistic", "dense"],
        ["--statistic", "graph", "--k", "3", "--lambda", "0.5", "--symmetrize"],
        ["--statistic", "screened", "--k", "2", "--delta", "2.0", "--lambda", "0.5"],
        ["--statistic", "hotelling"],
        ["--precision", "nodewise", "--lambda-grid", "0.2,0.4,0.8"],
    ])
    def test_statistics(self, tmp_path, args):
        out = tmp_path / "o.json"
        assert main(["test", "one-sample", "--data", H0, "--bootstrap", "40", "--out", str(out), *args]) == 0
        assert json.loads(out.read_text())["result"]["replications"] == 40

    def test_oracle_file(self, tmp_path):
        g = tmp_path / "g.csv"
        write_matrix_csv(g, np.eye(20))
        out = tmp_path / "o.json"
        assert main(["test", "one-sample", "--data", H0, "--precision", "oracle-file", "--gamma-file", str(g),
                     "--bootstrap", "40", "--out", str(out)]) == 0

    def test_dump_replicates(self, tmp_path):
        dump = tmp_path / "reps.csv"
        main(["test", "one-sample", "--data", H0, "--bootstrap", "30", "--dump-replicates", str(dump),
              "--out", str(tmp_path / "o.json")])
        assert read_matrix_csv(dump).shape == (30, 1)

    def test_numeric_failure_exit(self, tmp_path):
        X = tmp_path / "small.csv"
        write_matrix_csv(X, np.random.default_rng(0).standard_normal((5, 8)))
        assert main(["test", "one-sample", "--data", str(X), "--statistic", "hotelling"]) == 3

    def test_bad_k_exit(self):
        assert main(["test", "one-sample", "--data", H0, "--k", "50", "--bootstrap", "10"]) == 2


class TestTwoSample:
    @pytest.mark.parametrize("args", [[], ["--select-k", "4"], ["--modified", "5"], ["--unequal-cov"],
                                      ["--statistic", "modified", "--modified", "4", "--unequal-cov"]])
    def test_variants(self, tmp_path, two_files, args):
        out = tmp_path / "o.json"
        assert main(["test", "two-sample", "--data", *two_files, "--bootstrap", "50", "--out", str(out), *args]) == 0
        result = json.loads(out.read_text())["result"]
        assert 0 < result["p_value"] <= 1

    def test_workers_bitwise(self, tmp_path, two_files):
        paths = []
        for w in (1, 3):
            paths.append(tmp_path / f"o{w}.json")
            main(["test", "two-sample", "--data", *two_files, "--bootstrap", "200", "--workers", str(w),
                  "--out", str(paths[-1])])
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestEstimatePrecision:
    def test_writes_matrix_and_diagnostics(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["estimate-precision", "--data", H0, "--lambda", "0.3", "--symmetrize", "--out", str(out)]) == 0
        G = read_matrix_csv(out)
        np.testing.assert_array_equal(G, G.T)
        diag = json.loads(out.with_suffix(".json").read_text())
        assert diag["p"] == 20 and diag["selected_level"] == 0.3 and diag["fit_supnorm"] >= 0

    def test_pooled_two_files(self, tmp_path, two_files):
        out, diag = tmp_path / "g.csv", tmp_path / "d.json"
        assert main(["estimate-precision", "--data", *two_files, "--sqrt-lasso", "--out", str(out),
                     "--diagnostics", str(diag)]) == 0
        assert json.loads(diag.read_text())["n"] == 55

    def test_needs_out(self):
        assert main(["estimate-precision", "--data", H0]) == 2


class TestSimulate:
    def test_same_seed_same_bytes(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"p": 12, "n1": 25, "n2": 25, "reps": 4, "bootstrap_B": 60,
                                    "signal": "case2", "statistics": ["T(1)", "Tmod(5)"]}))
        outs = []
        for w in (1, 3, 1):
            outs.append(tmp_path / f"t{len(outs)}.csv")
            assert main(["simulate", "--scenario", str(spec), "--seed", "9", "--workers", str(w),
                         "--out", str(outs[-1])]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes() == outs[2].read_bytes()
        header, rows = read_table(outs[0])
        assert header["scenario_resolved"]["seed"] == 9 and header["config"]["seed"] == 9
        assert [r["statistic"] for r in rows] == ["T(1)", "Tmod(5)"]

    def test_inline_flags_override_file(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"p": 12, "n1": 25, "n2": 25, "reps": 2, "bootstrap_B": 30}))
        out = tmp_path / "t.csv"
        main(["simulate", "--scenario", str(spec), "--p", "10", "--statistics", "T(2)", "--out", str(out)])
        header, rows = read_table(out)
        assert header["scenario_resolved"]["p"] == 10 and rows[0]["statistic"] == "T(2)"

    def test_power_curve_output(self, tmp_path):
        out, curve = tmp_path / "t.csv", tmp_path / "c.csv"
        assert main(["simulate", "--p", "10", "--n1", "20", "--n2", "20", "--reps", "2", "--bootstrap", "30",
                     "--signal", "case3", "--r", "0.3", "--r-grid", "0.2,0.6", "--out", str(out),
                     "--curve-out", str(curve)]) == 0
        _, rows = read_table(curve)
        assert sorted({float(r["r"]) for r in rows}) == [0.2, 0.6]

    def test_bad_scenario(self, tmp_path):
        assert main(["simulate", "--model", "a", "--n2", "1", "--out", str(tmp_path / "t.csv")]) == 2


class TestOtherCommands:
    def test_power_curve(self, tmp_path):
        out = tmp_path / "pc.csv"
        assert main(["power-curve", "--p", "30", "--k0", "2", "--ks", "1,2", "--r-grid", "0.2,0.4",
                     "--reps", "2000", "--out", str(out)]) == 0
        _, rows = read_table(out)
        assert len(rows) == 4

    def test_signal_demo(self, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["demo", "signal-transform", "--out", str(out)]) == 0
        _, rows = read_table(out)
        assert sum(float(r["theta"]) != 0 for r in rows) == 4
        assert sum(float(r["theta_tilde"]) != 0 for r in rows) == 12

    @pytest.mark.slow
    def test_reproduce_table1(self, tmp_path):
        out = tmp_path / "t1.csv"
        assert main(["reproduce", "table1", "--model", "a", "--p", "50", "--reps", "200", "--out", str(out)]) == 0
        header, rows = read_table(out)
        size = next(float(r["rate"]) for r in rows if r["cell"] == "none" and r["statistic"] == "T(4)")
        assert abs(size - 0.055) <= 0.035
        assert {r["cell"] for r in rows} == {"none", "case1", "case2"}
        assert header["config"]["model"] == "a"
