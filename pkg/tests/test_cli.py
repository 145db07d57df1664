import json
import os
import subprocess
import sys

import pytest

from riskalloc.certify import GAP_HEADER
from riskalloc.cli import main

TOY = {"scenario": {"points": [[1.0]], "weights": [1.0]}, "service": {"family": "linear"},
       "risks": {"type": "expectation"}, "utility": {"type": "weighted_sum", "weights": [1.0]},
       "x_box": {"lower": 0, "upper": 1},
       "policy_class": {"kind": "uniform_box", "upper": 1, "resolution": 2},
       "slater_witness": {"x": 0.5, "policy": 1}}


@pytest.fixture
def toy_path(tmp_path):
    p = tmp_path / "toy.json"
    p.write_text(json.dumps(TOY))
    return p


def test_generate(tmp_path):
    out = tmp_path / "g.json"
    assert main(["generate", "--family", "interference2", "--scenarios", "8", "--seed", "7",
                 "--out", str(out)]) == 0
    cfg = json.loads(out.read_text())
    assert len(cfg["scenario"]["weights"]) == 8


def test_solve_toy(toy_path, tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve", "--config", str(toy_path), "--out", str(out)]) == 0
    summary = json.loads(out.read_text())
    assert abs(summary["dual"] - 1.0) <= 1e-3
    assert summary["primal"]["value"] >= 1 - 1e-3


def test_bad_weights_exit_2(tmp_path):
    cfg = dict(TOY, scenario={"points": [[1.0]], "weights": [1.1]})
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(cfg))
    assert main(["gap-study", "--config", str(p)]) == 2


def test_missing_file_and_bad_flags_exit_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["gap-study", "--levels", "a,b", "--config", "x"]) == 2


def test_slater_failure_exit_4(tmp_path):
    cfg = dict(TOY, slater_witness={"x": 1.0, "policy": 1})
    p = tmp_path / "s.json"
    p.write_text(json.dumps(cfg))
    assert main(["solve", "--config", str(p)]) == 4


def test_gap_study_header(toy_path, capsys):
    assert main(["gap-study", "--config", str(toy_path), "--levels", "1,2"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == ",".join(GAP_HEADER)


def test_risk_eval(tmp_path, capsys):
    s = tmp_path / "s.csv"
    s.write_text("w,z\n0.25,1\n0.25,2\n0.25,3\n0.25,4\n")
    assert main(["risk-eval", "--sample", str(s), "--risk", '{"type": "cvar", "beta": 0.5}']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "risk,upper,lower"
    assert lines[1].endswith(",3.5,1.5")


def test_mix_demo(toy_path, capsys):
    assert main(["mix-demo", "--config", str(toy_path), "--levels", "1,2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "alpha,m,epsilon,subset_size" and len(lines) == 11


def test_outputs_identical_across_threads(tmp_path):
    cfg = tmp_path / "o.json"
    assert main(["generate", "--family", "outage", "--scenarios", "2", "--seed", "3",
                 "--out", str(cfg)]) == 0
    outs = []
    for threads in ("1", "4"):
        env = dict(os.environ, RISKALLOC_THREADS=threads)
        r = subprocess.run([sys.executable, "-m", "riskalloc", "gap-study", "--config", str(cfg),
                            "--levels", "1,2,4"], capture_output=True, env=env, check=True)
        outs.append(r.stdout)
    assert outs[0] == outs[1]
