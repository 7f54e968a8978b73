import csv
import json
import subprocess
import sys

import pytest

from deepbenders.cli import EXIT_OK, EXIT_SOLVE, EXIT_USAGE, EXIT_VERIFY, main
from deepbenders.model import micro_instance, write_instance


@pytest.fixture
def m1(tmp_path):
    path = tmp_path / "m1.txt"
    path.write_text(write_instance(micro_instance()))
    return str(path)


def test_solve_micro(m1, capsys):
    assert main(["solve", "--instance", m1, "--strategy", "L1", "--verify"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    rec = json.loads(out[0])
    assert rec["status"] == "Optimal" and rec["objective"] == pytest.approx(2.0)
    assert rec["y"] == "0" and out[1].endswith("verified")


def test_solve_cst_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["solve", "--cst", "5,6,3,0", "--mode", "gpa", "--strategy", "linf",
                 "--switch-gap", "0.05", "--out", str(out), "--verify"]) == EXIT_OK
    row = next(csv.DictReader(out.open()))
    assert row["instance"] == "cst_5_6_3_0" and row["verified"] == "True"
    assert row["switch"] == "True"


@pytest.mark.parametrize("argv", [[], ["solve"], ["solve", "--cst", "1,2"],
                                  ["solve", "--cst", "4,5,3,0", "--strategy", "l3"],
                                  ["solve", "--cst", "4,5,3,0", "--instance", "x"],
                                  ["verify", "--sizes", "6by8"], ["frobnicate"]])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_missing_file(tmp_path):
    assert main(["solve", "--instance", str(tmp_path / "nope.txt")]) == EXIT_USAGE


def test_unparseable_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not an instance\n")
    assert main(["solve", "--instance", str(bad)]) == EXIT_USAGE


def test_solve_error_exit(m1):
    # guided projections only run for the l1, l2 and linf norms
    assert main(["solve", "--instance", m1, "--strategy", "mis", "--mode", "gpa"]) == EXIT_SOLVE


def test_iteration_limit_is_a_solve_error(m1):
    assert main(["solve", "--instance", m1, "--max-iters", "1"]) == EXIT_SOLVE


def test_generate_then_solve(tmp_path, capsys):
    txt, cap = tmp_path / "i.txt", tmp_path / "i.cap"
    assert main(["generate", "--cst", "4,5,3,1", "--out", str(txt)]) == EXIT_OK
    assert main(["generate", "--cst", "4,5,3,1", "--out", str(cap), "--format", "cap"]) == EXIT_OK
    capsys.readouterr()
    assert main(["solve", "--instance", str(txt), "--verify"]) == EXIT_OK
    a = json.loads(capsys.readouterr().out.splitlines()[0])
    assert main(["solve", "--instance", str(cap), "--verify"]) == EXIT_OK
    b = json.loads(capsys.readouterr().out.splitlines()[0])
    assert a["objective"] == pytest.approx(b["objective"], rel=1e-9)


def test_verify_command(capsys):
    assert main(["verify", "--sizes", "6x8", "--seeds", "1", "--ratios", "5"]) == EXIT_OK
    assert "all suites passed" in capsys.readouterr().out


def test_bench_command(tmp_path, m1):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(f'instances = ["{m1}"]\ncst = [[4, 5, 3, 0]]\nstrategies = ["cb", "rl1"]\n'
                   'output = "res.csv"\n')
    assert main(["bench", "--config", str(cfg)]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "res.csv").open()))
    assert len(rows) == 4 and all(r["verified"] == "True" for r in rows)
    assert main(["bench", "--config", str(tmp_path / "missing.toml")]) == EXIT_USAGE


def test_bench_verification_failure(tmp_path):
    # the n = 0 instance errors out, and an error row never verifies
    lp = tmp_path / "lp.txt"
    lp.write_text("0 1 1\nc 1\nb 1\nA 0 0 1\n")
    cfg = tmp_path / "exp.toml"
    cfg.write_text(f'instances = ["{lp}"]\nstrategies = ["cb"]\noutput = "res.csv"\n')
    assert main(["bench", "--config", str(cfg)]) == EXIT_VERIFY


def test_module_entry_point(m1):
    proc = subprocess.run([sys.executable, "-m", "deepbenders", "solve", "--instance", m1],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "Optimal"
