import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbmetric.dsl import Field
from vbmetric.errors import CapabilityError, InputError
from vbmetric.scene import builtin
from vbmetric.vanishing import (
    MAX_R,
    integrability_classify,
    lelong_estimate,
    stable_model_check,
    symmetric_rank,
    vanishing_report,
    vanishing_threshold,
)


def test_symmetric_rank_examples():
    assert [symmetric_rank(r) for r in (1, 2, 3)] == [4, 15, 56]


@pytest.mark.parametrize("r", range(1, MAX_R + 1))
def test_symmetric_rank_binomial_symmetry(r):
    assert symmetric_rank(r) == math.comb(2 * r + 2, r)


def test_symmetric_rank_bounds():
    with pytest.raises(InputError):
        symmetric_rank(0)
    with pytest.raises(InputError):
        symmetric_rank(MAX_R + 1)


def test_threshold_examples():
    t1, t2, t3 = (vanishing_threshold(r) for r in (1, 2, 3))
    assert t1.threshold == Fraction(2, 3) and not t1.gt_one
    assert t2.threshold == Fraction(3, 2) and t2.gt_one and t2.R == 15
    assert t3.threshold == Fraction(112, 30) and t3.gt_one
    assert t2.to_dict() == {"r": 2, "R": 15, "threshold": 1.5, "threshold_exact": "3/2", "gt_one": True}
    assert t2.t == Fraction(2, 3)


@pytest.mark.parametrize("r", range(1, MAX_R + 1))
def test_threshold_gt_one_iff_r_gt_one(r):
    assert vanishing_threshold(r).gt_one == (r > 1)


def test_lelong_examples():
    assert lelong_estimate("0.7*log(abs2(z1))")["nu"] == pytest.approx(0.7, abs=1e-3)
    assert lelong_estimate("abs2(z1) + 2")["nu"] == 0.0
    assert lelong_estimate("0.7*log(abs2(z1)) + sin(z1 + conj(z1))")["nu"] == pytest.approx(0.7, abs=1e-2)


@pytest.mark.parametrize(
    "bump", ["sin(z1 + conj(z1))", "exp(-abs2(z1 - 0.2))", "0.5*cos(3*abs2(z1))", "abs2(z1)^2 - 1"]
)
def test_lelong_bounded_perturbation(bump):
    assert abs(lelong_estimate(f"0.7*log(abs2(z1)) + ({bump})")["nu"] - 0.7) < 1e-2


def test_lelong_at_other_point_and_callable():
    nu = lelong_estimate(lambda z: 1.2 * np.log(np.abs(z - 0.5) ** 2), point=0.5)["nu"]
    assert nu == pytest.approx(1.2, abs=1e-3)


def test_lelong_errors():
    with pytest.raises(InputError):
        lelong_estimate("log(abs2(z1))", radii=[1e-3, 1e-2])
    with pytest.raises(InputError):
        lelong_estimate("log(abs2(z1))", radii=[1e-2])
    with pytest.raises(InputError):
        lelong_estimate(42)


def test_lelong_non_monotone_returns_zero():
    rng = np.random.default_rng(0)
    out = lelong_estimate(lambda z: rng.normal(size=np.shape(z)))
    assert out["nu"] == 0.0 and out["confidence"].startswith("low")


def test_integrability_examples():
    assert integrability_classify("log(abs2(z1))", 0.5)["class"] == "integrable"
    assert integrability_classify("log(abs2(z1))", 1.5)["class"] == "divergent"
    assert integrability_classify("log(abs2(z1))", 1.0)["class"] == "divergent"


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("side", [0.9, 1.1])
def test_integrability_boundary(c, side):
    t = side / c
    out = integrability_classify(f"{c}*log(abs2(z1))", t)
    assert out["class"] == ("integrable" if side < 1 else "divergent")


def test_integrability_with_smooth_part():
    assert integrability_classify("0.5*log(abs2(z1)) + abs2(z1)", 1.5)["class"] == "integrable"


def test_integrability_errors():
    with pytest.raises(InputError):
        integrability_classify("log(abs2(z1))", 0.0)
    with pytest.raises(CapabilityError):
        integrability_classify(Field.parse("log(abs2(z1))", 2, 0), 0.5)


@pytest.mark.parametrize("r", [1, 2])
def test_stable_model_decomposition(r):
    sc = builtin("stable-model", r=r, c=0.5)
    rep = stable_model_check(sc, samples=sc.samples[::5])
    assert rep["pass"]
    assert rep["max_mixed_block"] < 1e-8
    assert rep["max_decomposition_residual"] < 1e-6
    for rec in rep["records"]:
        assert np.allclose(rec["base_block"], 1.0 / (r + 1), atol=1e-6)


def test_stable_model_needs_metric():
    with pytest.raises(InputError):
        stable_model_check(builtin("product"))


def test_report_examples():
    yes = vanishing_report(builtin("stable-model", r=2, c=1.2))
    assert yes["lelong"]["nu"] == pytest.approx(1.2, abs=1e-2)
    assert yes["nu_below_threshold"] and yes["hypotheses_satisfied"] == "yes"
    assert not yes["nu_below_one"]
    assert "not computed" in yes["cohomology"]
    no = vanishing_report(builtin("stable-model", r=2, c=1.6))
    assert not no["nu_below_threshold"] and no["hypotheses_satisfied"] == "no"
    low = vanishing_report(builtin("stable-model", r=1, c=0.5))
    assert low["nu_below_one"] and "nu < 1" in low["note_nu_below_one"]
    assert low["hypotheses_satisfied"] == "yes"


@given(st.floats(0.2, 2.5))
@settings(max_examples=6)
def test_report_consistent_with_arithmetic(c):
    if abs(c - 1.5) < 0.1:
        return
    rep = vanishing_report(builtin("stable-model", r=2, c=c), per_dim=3)
    assert rep["nu_below_threshold"] == (c < 1.5)
    assert rep["hypotheses_satisfied"] == ("yes" if c < 1.5 else "no")
