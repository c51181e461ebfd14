import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbmetric.dsl import Field
from vbmetric.finsler import induced_weight, weight_from_field
from vbmetric.hermitian import HermitianField
from vbmetric.l2 import (
    change_chart,
    det_pushforward_check,
    duality_check,
    fit_ke_constant,
    four_case,
    ke_residual,
    l2_by_cases,
    l2_metric,
    normalization_constant_estimate,
    reference_ke_constant,
    roundtrip_check,
    section_xi,
    xi_chart_defect,
)
from vbmetric.quadrature import build_grid, fs_weight
from vbmetric.scene import builtin

G1 = build_grid(1, 64)


def diag_exp(*c):
    c = np.asarray(c, dtype=float)
    return HermitianField(lambda z: np.exp(-c * np.abs(z[..., :1]) ** 2)[..., :, None] * np.eye(len(c)), 1, len(c))


def rank1(c=1.0):
    return HermitianField(lambda z: np.exp(-c * np.abs(z[..., :1]) ** 2)[..., :, None], 1, 1)


cplx = st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)


@given(st.lists(cplx, min_size=3, max_size=3), st.lists(cplx, min_size=2, max_size=2), st.sampled_from([(0, 1), (0, 2), (1, 2), (2, 0)]))
@settings(max_examples=100)
def test_xi_cross_chart(s, w, AB):
    A, B = AB
    w = np.array(w)
    Z = np.insert(w, A, 1.0)
    if abs(Z[B]) < 1e-3 or abs(section_xi(s, A, w[None])[0]) < 1e-6:
        return
    wt = induced_weight(diag_exp(1.0, 2.0, -0.5))
    assert xi_chart_defect(s, wt, np.array([0.3 + 0.1j]), w, A, B) < 1e-10


def test_change_chart_roundtrip():
    w = np.array([[0.3 + 0.2j, -1.1j]])
    assert np.allclose(change_chart(change_chart(w, 0, 2), 2, 0), w)


def test_four_case():
    assert four_case(0, 0, 0) == "1"
    assert four_case(0, 1, 0) == "conj(w_beta)"
    assert four_case(1, 0, 0) == "w_alpha"
    assert four_case(1, 2, 0) == "w_alpha conj(w_beta)"


def test_l2_fs_proportional_to_identity():
    m = l2_metric(fs_weight(1), np.zeros(1), G1).matrix
    assert np.allclose(m, m[0, 0] * np.eye(2), atol=1e-8)
    assert np.all(np.linalg.eigvalsh(m) > 0)


def test_l2_diagonal_scene():
    z = np.array([0.5])
    m = l2_metric(induced_weight(diag_exp(1, 2)), z, G1).matrix
    assert abs(m[0, 1]) < 1e-10
    h = np.exp(-np.array([1, 2]) * 0.25)
    assert m[0, 0] / m[1, 1] == pytest.approx(h[0] / h[1], rel=1e-6)


def test_l2_by_cases_agrees():
    wt = induced_weight(diag_exp(1, 2))
    z = np.array([0.3j])
    single = build_grid(1, 128, scheme="single", chart=0)
    a = l2_by_cases(wt, z, single)
    b = l2_metric(wt, z, G1).matrix
    assert np.max(np.abs(a - b)) < 2e-6


@given(st.floats(-2, 2))
@settings(max_examples=8)
def test_l2_shift_equivariance(c):
    base = weight_from_field(Field.parse("log(1 + abs2(w1)) + 0.4*log(1 + 3*abs2(w1))", 1, 1), 1, 1)
    shifted = weight_from_field(Field.parse(f"log(1 + abs2(w1)) + 0.4*log(1 + 3*abs2(w1)) + {c}", 1, 1), 1, 1)
    a = l2_metric(base, np.zeros(1), G1).matrix
    b = l2_metric(shifted, np.zeros(1), G1).matrix
    assert np.max(np.abs(b - math.exp(-c) * a)) <= 1e-12 * np.max(np.abs(a))


def test_divergence_monitor_quiet_on_smooth_weight():
    d = l2_metric(fs_weight(1), np.zeros(1), build_grid(1, 16), monitor_tail=True).divergence
    assert not d["divergent"]


def test_roundtrip_residuals():
    assert roundtrip_check(HermitianField.constant(np.eye(2)), np.zeros(1))["residual"] < 1e-8
    assert roundtrip_check(diag_exp(1, 2), np.array([0.5]))["residual"] < 1e-4
    rng = np.random.default_rng(3)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    H = A @ A.conj().T + np.eye(2)
    assert roundtrip_check(HermitianField.constant(H), np.zeros(1))["residual"] < 1e-6


def test_roundtrip_constant_equals_volume():
    # literal claim: the proportionality constant is the fiber volume itself
    rep = roundtrip_check(HermitianField.constant(np.eye(2)), np.zeros(1))
    assert rep["lambda_vs_volume"] < 1e-4, rep


@pytest.mark.parametrize("name", ["trivial", "diagonal-exponential", "rotated-exponential", "stable-model"])
def test_roundtrip_constant_is_volume_times_second_moment(name):
    sc = builtin(name)
    H = HermitianField.from_scene(sc)
    grid = build_grid(sc.r, 64 if sc.r == 1 else 32)
    for z in sc.samples[::12]:
        rep = roundtrip_check(H, z, grid)
        assert rep["residual"] < 1e-4
        assert rep["lambda_vs_volume_times_moment"] < 1e-4


def test_ke_examples():
    g = build_grid(1, 32)
    fs = fs_weight(1)
    C = fit_ke_constant(fs, 1.0, np.zeros(1), g)
    assert ke_residual(fs, 1.0, np.zeros(1), C, g) < 1e-6
    bump = weight_from_field(Field.parse("log(1 + abs2(w1)) + 0.5*exp(-abs2(w1))", 1, 1), 1, 1)
    Cb = fit_ke_constant(bump, 1.0, np.zeros(1), g)
    assert ke_residual(bump, 1.0, np.zeros(1), Cb, g) > 0.1


@pytest.mark.parametrize("r", [1, 2])
def test_ke_constant_metric(r):
    rng = np.random.default_rng(r)
    A = rng.normal(size=(r + 1, r + 1)) + 1j * rng.normal(size=(r + 1, r + 1))
    H = A @ A.conj().T + np.eye(r + 1)
    wt = induced_weight(HermitianField.constant(H))
    g = build_grid(r, 16)
    det = float(np.linalg.det(H).real)
    C = fit_ke_constant(wt, det, np.zeros(1), g)
    assert ke_residual(wt, det, np.zeros(1), C, g) < 1e-6
    assert ke_residual(wt, det, np.array([0.7j]), C, g) < 1e-6


@pytest.mark.parametrize("r", [1, 2])
def test_normalization_constant(r):
    rep = normalization_constant_estimate(r, grid=build_grid(r, 32))
    assert rep["coefficient_of_variation"] < 1e-6
    assert rep["max_ke_residual"] < 1e-6
    assert rep["reference_C"] == pytest.approx(reference_ke_constant(r))
    assert reference_ke_constant(1) == 0.5 and reference_ke_constant(2) == pytest.approx(1 / 36)
    assert rep["fitted_C"] == pytest.approx(rep["unit_mass_prediction"], rel=1e-6)


def test_duality_examples():
    g = build_grid(1, 32)
    const = duality_check(HermitianField.constant(np.eye(2)), np.zeros(1), g)
    assert const["deviation"] == 0.0 and const["constant"] is None
    for z in (0.2, 0.5 - 0.3j):
        rep = duality_check(diag_exp(1, 2), np.array([z]), g)
        assert rep["deviation"] < 1e-3
        assert rep["constant"] > 0


def test_duality_rank1():
    rep = duality_check(rank1(1.0), np.array([0.4]), build_grid(0, 8))
    assert rep["deviation"] < 1e-6 and rep["constant"] > 0


def test_pushforward():
    g = build_grid(1, 32)
    assert det_pushforward_check(HermitianField.constant(np.eye(2)), np.zeros(1), g)["deviation"] == 0.0
    assert det_pushforward_check(rank1(1.5), np.array([0.3]), build_grid(0, 8))["deviation"] < 1e-6
    assert det_pushforward_check(diag_exp(1, 2), np.array([0.4 + 0.1j]), g)["deviation"] < 1e-3
