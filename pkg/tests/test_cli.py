import csv
import io
import json
import os
from fractions import Fraction as F
from pathlib import Path

import pytest

from gradcode import cli
from gradcode.placement import CostQuery, EXAMPLE_PLACEMENT, feasibility_check, optimal_cost

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def fixed_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def call(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- plan ------------------------------------------------------------------------


def test_plan_example_headline(capsys):
    code, out, _ = call(capsys, "plan", "--config", CONFIGS / "example.json")
    assert code == 0
    assert out.splitlines()[0] == "C*=d/2, m=2, feasible=yes"


def test_plan_json_agrees_with_library(capsys):
    code, out, _ = call(capsys, "plan", "--config", CONFIGS / "example.json", "--json")
    doc = json.loads(out)
    cost = optimal_cost(EXAMPLE_PLACEMENT, CostQuery(1, 0, 4))
    assert code == 0
    assert doc["cost"] == "d/2" and F(doc["cost_value"]) == cost.cost and doc["m"] == cost.m
    assert doc["recoverable"] == list(feasibility_check(EXAMPLE_PLACEMENT, 1, 0).recoverable)


def test_plan_partial_and_no(capsys, tmp_path):
    partial = {"placement": {"n_workers": 4, "n_partitions": 2, "gamma": [[1, 2], [1, 2], [1, 2], [1]]},
               "scheme": {"s": 1, "a": 1, "d": 2}}
    code, out, _ = call(capsys, "plan", "--config", write_cfg(tmp_path, partial), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["feasible"] == "partial" and doc["recoverable"] == [1]
    code, out, _ = call(capsys, "plan", "--config", CONFIGS / "underreplicated.json")
    assert code == 0 and "feasible=no" in out.splitlines()[0]


def test_plan_writes_file(capsys, tmp_path):
    call(capsys, "plan", "--config", CONFIGS / "example.json", "--out", tmp_path)
    assert json.loads((tmp_path / "plan.json").read_text())["m"] == 2


@pytest.mark.parametrize("text", ['{"placement": ', "[1, 2]", "not json"])
def test_malformed_config_exit_2(capsys, tmp_path, text):
    code, out, err = call(capsys, "plan", "--config", write_cfg(tmp_path, text))
    assert code == 2 and out == "" and "config error" in err


def test_unknown_key_exit_2(capsys, tmp_path):
    doc = json.loads((CONFIGS / "example.json").read_text())
    doc["scheme"]["colour"] = "blue"
    code, out, err = call(capsys, "run", "--config", write_cfg(tmp_path, doc))
    assert code == 2 and out == "" and "colour" in err


def test_missing_config_exit_2(capsys):
    code, out, _ = call(capsys, "run")
    assert code == 2 and out == ""


# -- run ------------------------------------------------------------------------------


def test_run_example_matches_oracle(capsys, tmp_path):
    code, _, _ = call(capsys, "run", "--config", CONFIGS / "example.json", "--out", tmp_path)
    res = json.loads((tmp_path / "result.json").read_text())
    assert code == 0 and res["status"] == "ok" and res["matches_oracle"]
    assert res["aggregate"] == res["oracle"] and res["responders"] == [2, 3, 4, 5]
    rows = read_csv(tmp_path / "round.csv")
    assert [r["responded"] for r in rows] == ["0", "1", "1", "1", "1"]
    assert sorted(os.listdir(tmp_path)) == ["manifest.json", "result.json", "round.csv"]


def test_run_adversaries_flagged(capsys):
    code, out, _ = call(capsys, "run", "--config", CONFIGS / "adversary.json", "--json")
    res = json.loads(out)
    assert code == 0 and res["matches_oracle"] and set(res["flagged"]) <= {2, 7}


def test_run_approx_sweep(capsys, tmp_path):
    code, _, _ = call(capsys, "run", "--config", CONFIGS / "approx.json", "--mode", "approx", "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert list(rows[0]) == ["n", "s1", "lambda_estimate", "lambda_bound", "emp_error", "bound"]
    assert len(rows) >= 3
    for row in rows:
        assert float(row["emp_error"]) <= float(row["bound"])
        assert float(row["lambda_estimate"]) <= float(row["lambda_bound"])
        assert int(row["s1"]) == 15 + 1 - int(row["n"])


def test_run_matrix(capsys):
    code, out, _ = call(capsys, "run", "--config", CONFIGS / "matrix.json", "--mode", "matrix", "--json")
    res = json.loads(out)
    assert code == 0 and res["matches_oracle"] and res["flagged"] == [4] and res["d"] == 3


def test_run_decode_failure_exit_3(capsys, tmp_path):
    doc = json.loads((CONFIGS / "example.json").read_text())
    doc["workers"]["cutoff"] = {"kind": "count", "k": 2}
    code, out, _ = call(capsys, "run", "--config", write_cfg(tmp_path, doc), "--json")
    assert code == 3 and json.loads(out)["status"] == "decode_failure"


def test_run_infeasible_exit_2(capsys):
    code, out, err = call(capsys, "run", "--config", CONFIGS / "underreplicated.json")
    assert code == 2 and out == "" and "Infeasible" in err


def test_run_inline_gradients(capsys, tmp_path):
    doc = json.loads((CONFIGS / "example.json").read_text())
    doc["scheme"]["gradients"] = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], ["1/2", 0, 0, 0]]
    code, out, _ = call(capsys, "run", "--config", write_cfg(tmp_path, doc), "--json")
    assert code == 0 and json.loads(out)["aggregate"] == ["3/2", "1/1", "1/1", "1/1"]


@pytest.mark.parametrize("cfg, mode", [("example.json", "exact"), ("approx.json", "approx"), ("matrix.json", "matrix")])
def test_replay_is_byte_identical(capsys, tmp_path, monkeypatch, cfg, mode):
    first, second = tmp_path / "a", tmp_path / "b"
    call(capsys, "run", "--config", CONFIGS / cfg, "--mode", mode, "--seed", 7, "--out", first)
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1800000000")
    call(capsys, "run", "--replay", first / "manifest.json", "--out", second)
    for name in os.listdir(first):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_identical_invocations_identical_output(capsys):
    outs = [call(capsys, "run", "--config", CONFIGS / "adversary.json", "--seed", 3, "--json")[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_manifest_contents(capsys, tmp_path):
    call(capsys, "run", "--config", CONFIGS / "example.json", "--seed", 4, "--out", tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 4 and man["mode"] == "exact" and man["command"] == "run"
    assert man["timestamp"].startswith("2023-11-14")
    assert man["config"] == json.loads((CONFIGS / "example.json").read_text())


# -- train ------------------------------------------------------------------------------


def test_train_exact_matches_centralized(capsys, tmp_path):
    code, _, _ = call(capsys, "train", "--config", CONFIGS / "adversary.json", "--out", tmp_path)
    res = json.loads((tmp_path / "result.json").read_text())
    assert code == 0 and res["final_loss"] == res["centralized_final_loss"]
    rows = read_csv(tmp_path / "train.csv")
    assert list(rows[0]) == ["iter", "loss", "responders", "decoder", "bound"]


def test_train_replay(capsys, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    call(capsys, "train", "--config", CONFIGS / "adversary.json", "--seed", 2, "--out", first)
    call(capsys, "train", "--replay", first / "manifest.json", "--out", second)
    for name in os.listdir(first):
        assert (first / name).read_bytes() == (second / name).read_bytes()


# -- analyze -----------------------------------------------------------------------------


def test_analyze_lebesgue(capsys):
    code, out, _ = call(capsys, "analyze", "lebesgue", "--n", 8, 16, 32)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3
    est = [float(r["lambda_estimate"]) for r in rows]
    assert est[0] < est[1] < est[2]
    assert all(float(r["lambda_estimate"]) <= float(r["lambda_bound"]) for r in rows)


def test_analyze_condition(capsys):
    code, out, _ = call(capsys, "analyze", "condition", "--n", 4, 8, 12, "--json")
    rows = json.loads(out)
    eq = [r["equispaced"] for r in rows]
    assert code == 0 and eq[0] < eq[1] < eq[2]
    assert all(r["chebyshev"] < r["equispaced"] for r in rows)


def test_analyze_bounds_zero_oracle(capsys):
    code, out, _ = call(capsys, "analyze", "bounds", "--n", 8, 12, "--s1", 0, 2, "--oracle", "zero", "--json")
    rows = json.loads(out)
    assert code == 0 and len(rows) == 4
    assert all(r["bound"] == 0 for r in rows)
    assert all(r["emp_error"] <= 1e-14 for r in rows)    # constant f, only rounding


def test_analyze_bounds_hold(capsys):
    _, out, _ = call(capsys, "analyze", "bounds", "--n", 10, 20, "--s1", 0, 1, 3, "--json")
    assert all(r["emp_error"] <= r["bound"] for r in json.loads(out))


def test_analyze_unknown_kind(capsys):
    code, out, err = call(capsys, "analyze", "spectra")
    assert code == 2 and out == "" and "spectra" in err


# -- witness and selftest ---------------------------------------------------------------


def test_witness_underreplicated(capsys):
    code, out, _ = call(capsys, "witness", "--config", CONFIGS / "underreplicated.json", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["applicable"] and doc["identical_stacks"]


def test_witness_example_not_applicable(capsys):
    code, out, _ = call(capsys, "witness", "--config", CONFIGS / "example.json")
    assert code == 0 and out.startswith("not applicable")


def test_selftest(capsys):
    code, out, _ = call(capsys, "selftest")
    lines = out.splitlines()
    assert code == 0 and lines and all(line.startswith("PASS") for line in lines)
