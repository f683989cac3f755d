import csv
import io
import json

import pytest

from miningeq.cli import run
from miningeq.errors import ConfigError
from miningeq.io import economy_from_dict, game_from_dict, load_json, write_table

ECON = {
    "revenues": [2.0, 1.0, 1.5],
    "unit_costs": [[1.0, 1.0, 1.2], [1.0, 2.0, 0.8]],
    "capacities": [5.0, 1.0],
    "rho": [0.5, 0.7],
}


@pytest.fixture
def econ_file(tmp_path):
    p = tmp_path / "econ.json"
    p.write_text(json.dumps(ECON))
    return str(p)


def run_to(tmp_path, name, argv):
    out = tmp_path / name
    status = run(argv + ["--output", str(out)])
    return status, out.read_text() if out.exists() else ""


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


class TestIO:
    def test_write_formats(self):
        buf = io.StringIO()
        write_table(buf, ("a", "b"), [(1, 0.5), (2, float("nan"))], "csv")
        assert buf.getvalue() == "a,b\n1,0.5\n2,nan\n"
        buf = io.StringIO()
        write_table(buf, ("a", "b"), [(1, 0.5), (2, float("nan"))], "jsonl")
        assert [json.loads(line) for line in buf.getvalue().splitlines()] == [{"a": 1, "b": 0.5}, {"a": 2, "b": None}]

    def test_definitions(self, tmp_path):
        assert game_from_dict({"costs": [1, 2]}).reward == 1.0
        e = economy_from_dict(dict(ECON, rho=0.4))
        assert list(e.rho) == [0.4, 0.4]
        with pytest.raises(ConfigError):
            economy_from_dict({"revenues": [1.0]})
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="line 1"):
            load_json(bad)


class TestCommands:
    def test_nash(self, tmp_path):
        status, text = run_to(tmp_path, "n.csv", ["nash", "--costs", "1,1"])
        rows = read_csv(text)
        assert status == 0
        assert rows[0] == ["miner", "cost", "x_nash", "utility"]
        assert [float(r[2]) for r in rows[1:]] == [0.25, 0.25]

    def test_nash_config_and_infeasible(self, tmp_path):
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps({"costs": [1.0, 1.0, 3.0]}))
        assert run(["nash", "--config", str(cfg), "--output", str(tmp_path / "x")]) == 1
        status, text = run_to(tmp_path, "n.csv", ["nash", "--config", str(cfg), "--mode", "auto_drop"])
        assert status == 0 and float(read_csv(text)[3][2]) == 0.0

    def test_grief(self, tmp_path):
        status, text = run_to(tmp_path, "g.csv", ["grief", "--costs", "1,1", "--deltas", "0.1,0.25"])
        rows = read_csv(text)
        assert status == 0
        assert float(rows[1][4]) == pytest.approx(5.0) and float(rows[2][5]) == 2.0

    def test_esa(self, tmp_path):
        status, text = run_to(tmp_path, "e.csv", ["esa", "--costs", "1,1,1", "--format", "jsonl"])
        recs = [json.loads(line) for line in text.splitlines()]
        assert status == 0
        assert recs[0]["allocation"] == "nash" and recs[0]["griefable"] is True
        assert recs[-1]["griefable"] is False and recs[-1]["max_gf"] <= 1 + 1e-6

    def test_esa_heterogeneous(self, tmp_path):
        # with three unequal miners the scaled allocation is still griefable
        status, text = run_to(tmp_path, "e.csv", ["esa", "--costs", "1,1,1.5", "--format", "jsonl"])
        recs = [json.loads(line) for line in text.splitlines()]
        assert status == 0
        assert recs[-1]["allocation"] == "non_griefable" and recs[-1]["griefable"] is True

    def test_pr_solve_and_trace(self, tmp_path, econ_file):
        trace = tmp_path / "t.csv"
        status, text = run_to(tmp_path, "b.csv", ["pr-solve", "--config", econ_file, "--trace", str(trace)])
        assert status == 0
        assert read_csv(text)[0] == ["miner", "chain", "spending", "share"]
        assert read_csv(trace.read_text())[0] == ["iter", "objective", "kkt_residual", "max_step"]

    def test_pr_solve_non_convergence(self, tmp_path, econ_file):
        status, _ = run_to(tmp_path, "b.csv", ["pr-solve", "--config", econ_file, "--max-iter", "1"])
        assert status == 2

    def test_dynamics(self, tmp_path):
        status, text = run_to(tmp_path, "d.csv", ["dynamics", "--costs", "1,1,1", "--rule", "GA", "--theta", "0.1", "--steps", "5"])
        rows = read_csv(text)
        assert status == 0
        assert rows[0] == ["t", "x_1", "x_2", "x_3", "X"] and len(rows) == 7

    def test_bifurcate(self, tmp_path):
        summary = tmp_path / "s.csv"
        status, text = run_to(tmp_path, "b.csv", [
            "bifurcate", "--costs", "1,1", "--rule", "GA", "--theta", "0.1",
            "--grid", "0.05:1.5:4", "--samples", "10", "--summary", str(summary),
        ])
        rows = read_csv(text)
        assert status == 0
        assert rows[0] == ["param", "sample_index", "aggregate_X"]
        srows = read_csv(summary.read_text())
        assert srows[0] == ["param", "diameter", "distinct", "collapsed"] and srows[-1][3] == "True"

    def test_case_study(self, tmp_path):
        status, text = run_to(tmp_path, "c.csv", ["case-study", "--rho", "0.5"])
        rows = read_csv(text)
        assert status == 0
        assert rows[0] == ["date", "coin", "unit_cost", "pfr", "ppr", "share"] and len(rows) == 57

    def test_verify_random(self, tmp_path):
        status, text = run_to(tmp_path, "v.csv", ["verify", "--seed", "3"])
        rows = read_csv(text)
        assert status == 0
        assert all(r[3] == "True" for r in rows[1:])

    def test_verify_config(self, tmp_path, econ_file):
        status, _ = run_to(tmp_path, "v.csv", ["verify", "--config", econ_file, "--pairs", "20"])
        assert status == 0

    def test_usage_errors(self, tmp_path, capsys):
        assert run(["bogus"]) == 1
        assert run(["nash", "--nope"]) == 1
        assert run(["nash"]) == 1
        assert run(["pr-solve"]) == 1
        assert run(["verify", "--tol", "-1"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run(["pr-solve", "--config", str(tmp_path / "none.json")]) == 1

    @pytest.mark.parametrize("argv", [
        ["verify", "--seed", "7", "--pairs", "20"],
        ["case-study", "--rho", "0.3"],
        ["bifurcate", "--costs", "1,1", "--rule", "BR", "--grid", "1:7:4", "--samples", "20"],
    ])
    def test_byte_identical_reruns(self, tmp_path, argv):
        _, a = run_to(tmp_path, "a.out", argv)
        _, b = run_to(tmp_path, "b.out", argv)
        assert a == b and a
