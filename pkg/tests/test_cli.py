import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from fracsys.cli import ATLAS_HEADER, main, parse_config
from fracsys.core import Exponents
from fracsys.regimes import classify

CASE1_FLAGS = ["--p", "0", "--q", "0.5", "--r", "1.5", "--theta", "0", "--s", "0.5", "--t", "0.5"]
TC1III_FLAGS = ["--p", "1", "--q", "1", "--r", "1", "--theta", "1", "--s", "0.5", "--t", "0.5"]

CODE_SWAP = {"E1": "E2", "E2": "E1", "E3": "E3", "U": "U", "undetermined": "undetermined",
             "N1": "N3", "N3": "N1", "N2": "N4", "N4": "N2", "N5": "N6", "N6": "N5"}


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_json(capsys):
    code, out, _ = run(["classify", *CASE1_FLAGS], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == 1 and rep["unique"] is True and rep["verdict"] == "U"
    assert rep["case"] == 1 and rep["predicted_v_rate"] == 0.25


def test_classify_csv(capsys):
    code, out, _ = run(["classify", *CASE1_FLAGS, "--format", "csv"], capsys)
    header, row = out.strip().splitlines()
    assert code == 0 and header.startswith("verdict,p,q") and row.startswith("U,0,0.5")


def test_missing_parameter_is_usage_error(capsys):
    argv = ["classify", "--p", "0", "--r", "1.5", "--theta", "0", "--s", "0.5", "--t", "0.5"]
    code, out, err = run(argv, capsys)
    assert code == 2 and out == ""
    assert len(err.strip().splitlines()) == 1 and "q" in err


@pytest.mark.parametrize("flag, value, key", [("--s", "1.5", "s"), ("--q", "0", "q"),
                                              ("--p", "-1", "p")])
def test_out_of_range_parameter(capsys, flag, value, key):
    argv = ["classify", *CASE1_FLAGS, flag, value]
    code, _, err = run(argv, capsys)
    assert code == 2 and err.split("usage error: ")[1].startswith(key + ":")


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# grid\nn = 512\np = 0   # comment\nq=0.5\nr = 1.5\ntheta = 0\n"
                   "s = 0.5\nt = 0.5\nouter-tol = 1e-6\n")
    rc = parse_config(["classify", "--config", str(cfg)])
    assert rc.grid.n == 512 and rc.get("outer_tol") == 1e-6
    rc = parse_config(["classify", "--config", str(cfg), "--n", "1024"])
    assert rc.grid.n == 1024
    assert rc.exponents() == Exponents(0, 0.5, 1.5, 0, 0.5, 0.5)
    rc = parse_config(["eigen", "--s", "0.3"])
    assert (rc.grid.a, rc.grid.b, rc.grid.n) == (-1.0, 1.0, 1024)
    assert rc.get("outer_tol") == 1e-8 and rc.get("inner_tol") == 1e-10


@pytest.mark.parametrize("text, key", [("bogus = 1\n", "bogus"), ("n = ten\n", "n"),
                                       ("just words\n", "config")])
def test_bad_config(tmp_path, capsys, text, key):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, err = run(["classify", "--config", str(cfg)], capsys)
    assert code == 2 and f"usage error: {key}:" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(["classify", "--config", str(tmp_path / "nope.cfg")], capsys)
    assert code == 2 and "config" in err


def atlas(capsys, p1="q", p2="r", extra=()):
    argv = ["atlas", "--s", "0.5", "--t", "0.5", "--p", "0", "--theta", "0",
            "--param1", p1, "--range1", "0.1:3", "--steps1", "50",
            "--param2", p2, "--range2", "0.1:3", "--steps2", "50", *extra]
    code, out, _ = run(argv, capsys)
    assert code == 0
    return list(csv.DictReader(io.StringIO(out))), out


def test_atlas_layout_and_n1_region(capsys):
    rows, out = atlas(capsys)
    assert out.splitlines()[0] == ATLAS_HEADER
    assert len(rows) == 2500
    grid = np.linspace(0.1, 3, 50)
    for k, row in enumerate(rows):
        q, r = float(row["p1"]), float(row["p2"])
        assert q == grid[k // 50] and r == grid[k % 50]
        # nonexistence condition (i) with p = 0, s = t: q < 1 and r >= 2
        if q < 1 and r >= 2:
            assert row["verdict"] == "N1"
        if row["verdict"] == "N1":
            assert q < 1 and r >= 2


def test_atlas_swap_transposes(capsys):
    rows, _ = atlas(capsys)
    swapped, _ = atlas(capsys, p1="r", p2="q")
    a = np.array([r["verdict"] for r in rows]).reshape(50, 50)
    b = np.array([r["verdict"] for r in swapped]).reshape(50, 50)
    # with s = t and p = theta the swap exchanges q and r, so the verdict at
    # (q, r) = (x, y) maps onto the verdict at (y, x)
    mapped = np.vectorize(CODE_SWAP.get)(a)
    assert np.array_equal(mapped, a.T)
    assert np.array_equal(b, a.T)
    assert {"N1", "N3", "U", "undetermined"} <= set(a.ravel())


def test_atlas_zero_area_overlap():
    for q in np.linspace(0.1, 3, 50):
        for r in np.linspace(0.1, 3, 50):
            v = classify(Exponents(0, q, r, 0, 0.5, 0.5))
            assert not (v.nonexistence_all and v.existence_all)


def test_atlas_json(capsys):
    argv = ["atlas", "--s", "0.5", "--t", "0.5", "--p", "0", "--theta", "0",
            "--param1", "q", "--range1", "0.5:1", "--steps1", "2",
            "--param2", "r", "--range2", "1:1.5", "--steps2", "2", "--format", "json"]
    code, out, _ = run(argv, capsys)
    rep = json.loads(out)
    assert code == 0 and len(rep["rows"]) == 4 and rep["rows"][-1]["p2"] == 1.5


@pytest.mark.parametrize("extra", [
    ["--param1", "q", "--range1", "0.1:3", "--param2", "q", "--range2", "0.1:3"],
    ["--param1", "q", "--range1", "0.1", "--param2", "r", "--range2", "0.1:3"],
    ["--param1", "q", "--range1", "0.1:3", "--param2", "r"],
    ["--param1", "x", "--range1", "0.1:3", "--param2", "r", "--range2", "0.1:3"],
    ["--param1", "q", "--range1", "0:3", "--param2", "r", "--range2", "0.1:3"],
])
def test_atlas_usage_errors(capsys, extra):
    argv = ["atlas", "--s", "0.5", "--t", "0.5", "--p", "0", "--theta", "0", *extra]
    code, _, _ = run(argv, capsys)
    assert code == 2


def test_eigen(capsys, tmp_path):
    code, out, _ = run(["eigen", "--s", "0.5", "--n", "128"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert {"s", "n", "lambda1", "c_low", "c_high", "w3_ok"} <= set(rep)
    assert rep["w3_ok"] and 1.15 < rep["lambda1"] < 1.17
    target = tmp_path / "phi.csv"
    code, out, _ = run(["eigen", "--s", "0.5", "--n", "128", "--format", "csv",
                        "--output", str(target)], capsys)
    assert code == 0 and out == ""
    lines = target.read_text().splitlines()
    assert lines[0] == "x,phi" and len(lines) == 129


def test_solve_scalar(capsys):
    code, out, _ = run(["solve-scalar", "--s", "0.5", "--gamma", "0.5", "--p", "1",
                        "--n", "256"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["regime"] == "superlinear" and rep["converged"]
    assert {"regime", "predicted_exponent", "fitted_exponent", "r_squared", "iterations",
            "residual", "converged"} <= set(rep)
    code, _, err = run(["solve-scalar", "--s", "0.5", "--gamma", "1.0", "--n", "64"], capsys)
    assert code == 4 and "refused" in err
    code, _, _ = run(["solve-scalar", "--s", "0.5", "--n", "64"], capsys)
    assert code == 2


def test_solve_system(capsys):
    code, out, _ = run(["solve-system", *CASE1_FLAGS, "--n", "128"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["report"]["converged"] and rep["verdict"]["verdict"] == "U"
    assert rep["report"]["in_bracket"] and "m1" in rep["report"]["bracket"]
    code, out, _ = run(["solve-system", *CASE1_FLAGS, "--n", "64", "--format", "csv"], capsys)
    assert out.splitlines()[0] == "x,u,v" and len(out.splitlines()) == 65


def test_solve_system_refusals_and_nonconvergence(capsys):
    n1 = ["--p", "0", "--q", "0.5", "--r", "2.5", "--theta", "0", "--s", "0.5", "--t", "0.5"]
    code, _, err = run(["solve-system", *n1, "--n", "64"], capsys)
    assert code == 4 and "(i)" in err
    gap = ["--p", "0", "--q", "1.01", "--r", "1.01", "--theta", "0", "--s", "0.5", "--t", "0.5"]
    code, _, _ = run(["solve-system", *gap, "--n", "64"], capsys)
    assert code == 4
    code, _, err = run(["solve-system", *CASE1_FLAGS, "--n", "64", "--max-outer", "2"], capsys)
    assert code == 3 and "no convergence" in err
    code, _, _ = run(["solve-system", *CASE1_FLAGS, "--n", "64", "--perturbation", "1.5"],
                     capsys)
    assert code == 2


def test_probe_uniqueness(capsys):
    code, out, _ = run(["probe-uniqueness", *CASE1_FLAGS, "--n", "128"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["distance"] <= 1e-6 and rep["contraction"] == 0.75
    code, _, _ = run(["probe-uniqueness", *TC1III_FLAGS, "--n", "64"], capsys)
    assert code == 4


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fracsys", "classify", *CASE1_FLAGS],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["unique"] is True
    proc = subprocess.run([sys.executable, "-m", "fracsys", "classify"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 2


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
