import json
import subprocess
import sys

import pytest

from vbmetric.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def flatten(v):
    if isinstance(v, list):
        for x in v:
            yield from flatten(x)
    else:
        yield v


def test_threshold(capsys):
    code, rep, _ = run(capsys, "run", "threshold", "--r", "2")
    assert code == 0
    assert rep["result"]["R"] == 15 and rep["result"]["threshold"] == 1.5 and rep["result"]["gt_one"] is True
    assert rep["analysis"] == "threshold" and rep["params"]["r"] == 2


def test_curvature_trivial_is_zero(capsys):
    code, rep, _ = run(capsys, "run", "curvature", "trivial", "--max-samples", "2")
    assert code == 0
    for rec in rep["result"]["records"]:
        assert max(abs(x) for x in flatten(rec["tensor"])) == 0.0


def test_decompose_diagonal(capsys):
    code, rep, _ = run(capsys, "run", "decompose", "diagonal-exponential", "--max-samples", "5")
    assert code == 0
    assert rep["result"]["max_residual"] < 1e-5 and rep["result"]["verdict_pass"]


def test_verdict_failure_exit_two(capsys):
    code, rep, _ = run(capsys, "run", "griffiths", "diagonal-exponential", "--expect", "negative", "--max-samples", "2")
    assert code == 2 and rep["result"]["verdict_pass"] is False
    code, _, _ = run(capsys, "run", "griffiths", "diagonal-exponential", "--expect", "positive", "--max-samples", "2")
    assert code == 0


def test_input_errors_exit_one(capsys):
    assert run(capsys, "run", "nonsense", "trivial")[0] == 1
    assert run(capsys, "run", "curvature")[0] == 1
    assert run(capsys, "run", "curvature", "no-such-scene")[0] == 1
    assert run(capsys, "run", "threshold", "--r", "0")[0] == 1
    code, rep, err = run(capsys, "run", "curvature", "/nonexistent/file.toml")
    assert code == 1 and rep is None and err
    assert run(capsys)[0] == 1


def test_params_and_conventions(capsys):
    code, rep, _ = run(capsys, "run", "membership", "stable-model", "--param", "c=1.2", "--param", "r=2", "--max-samples", "2")
    assert code == 0
    assert rep["scene"]["params"]["c"] == 1.2 and rep["scene"]["rank"] == 3
    assert "measure" in rep["conventions"]


def test_lelong_and_integrability(capsys):
    code, rep, _ = run(capsys, "run", "lelong", "--phi", "0.7*log(abs2(z1))")
    assert code == 0 and abs(rep["result"]["nu"] - 0.7) < 1e-3
    code, rep, _ = run(capsys, "run", "integrability", "--phi", "log(abs2(z1))", "--t", "1.5")
    assert code == 0 and rep["result"]["class"] == "divergent"
    code, rep, _ = run(capsys, "run", "integrability", "stable-model", "--param", "c=0.5")
    assert rep["result"]["class"] == "integrable"


def test_vanishing_report(capsys):
    code, rep, _ = run(capsys, "run", "vanishing-report", "stable-model", "--param", "r=2", "--param", "c=1.2")
    assert code == 0 and rep["result"]["hypotheses_satisfied"] == "yes"
    assert "not computed" in rep["result"]["cohomology"]


def test_output_is_deterministic(capsys):
    a = run(capsys, "run", "decompose", "product", "--max-samples", "3")[1]
    b = run(capsys, "run", "decompose", "product", "--max-samples", "3")[1]
    assert a == b


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "vbmetric", "run", "threshold", "--r", "3"], capture_output=True, text=True)
    assert p.returncode == 0
    assert json.loads(p.stdout)["result"]["threshold_exact"] == "56/15"
