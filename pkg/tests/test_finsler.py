import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbmetric.dsl import Field
from vbmetric.errors import CapabilityError, InputError
from vbmetric.finsler import (
    decomposition_residual,
    fiber_form,
    finsler_from_field,
    geodesic_curvature,
    hx_membership,
    induced_weight,
    kobayashi_tensor,
    positivity_equivalence_check,
    quadratic_finsler,
    scene_weight,
    validate_finsler,
    weight_from_field,
)
from vbmetric.hermitian import HermitianField, chern_curvature
from vbmetric.scene import builtin

zpt = st.complex_numbers(max_magnitude=0.8, allow_nan=False, allow_infinity=False)
wpt = st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False)


def diag_exp(*c):
    c = np.asarray(c, dtype=float)
    return HermitianField(lambda z: np.exp(-c * np.abs(z[..., :1]) ** 2)[..., :, None] * np.eye(len(c)), 1, len(c))


def field_weight(src, n=1, r=1):
    return weight_from_field(Field.parse(src, n, r), n, r)


def test_validate_examples():
    ok = validate_finsler(finsler_from_field(Field.parse("abs2(Z0) + abs2(Z1)", 1, 1), 1, 1))
    assert ok["all_pass"]
    quartic = validate_finsler(finsler_from_field(Field.parse("sqrt(abs2(Z0)^2 + abs2(Z1)^2)", 1, 1), 1, 1))
    assert quartic["homogeneity"]["pass"]
    # degenerate along the coordinate axes: the fiber Hessian loses rank at Z = e_0
    assert not quartic["pseudo_convexity"]["pass"]
    bad = validate_finsler(finsler_from_field(Field.parse("abs2(Z0) - abs2(Z1)", 1, 1), 1, 1))
    assert not bad["positivity"]["pass"] and bad["positivity"]["witnesses"]


@given(zpt, wpt)
def test_induced_weight_examples(z, w):
    phi = induced_weight(HermitianField.constant(np.eye(2)))
    assert phi(np.array([z]), np.array([w])) == pytest.approx(np.log(1 + abs(w) ** 2), abs=1e-12)
    s = abs(z) ** 2
    phi2 = induced_weight(diag_exp(1, 2))
    assert phi2(np.array([z]), np.array([w])) == pytest.approx(np.log(np.exp(s) + np.exp(2 * s) * abs(w) ** 2), rel=1e-12)


def test_induced_weight_has_no_base_jets():
    phi = induced_weight(diag_exp(1, 2))
    assert not phi.base_jets
    from vbmetric.jet import Jet

    with pytest.raises(CapabilityError):
        phi.lift([Jet.seed(np.array([0.1 + 0j]), 0, 2)], [np.ones(1), np.ones(1)])


def test_stable_model_weight_matches_induced_up_to_constant():
    sc = builtin("stable-model", r=2, c=0.7)
    explicit = scene_weight(sc)
    induced = induced_weight(HermitianField.from_scene(sc))
    for z in sc.samples[::5]:
        for w in ([0.0, 0.0], [0.3 + 0.1j, -0.2j]):
            a = fiber_form(explicit, z, w).full
            b = fiber_form(induced, z, w).full
            assert np.max(np.abs(a - b)) < 1e-6


def test_fiber_form_examples():
    F = fiber_form(scene_weight(builtin("trivial")), np.array([0.2]), np.array([0.0]))
    assert np.allclose(F.base, 0, atol=1e-12) and np.allclose(F.fiber, np.eye(1), atol=1e-12)
    c = 1.7
    P = field_weight(f"{c}*abs2(z1) + log(1 + abs2(w1))")
    F = fiber_form(P, np.array([0.4j]), np.array([0.6 - 0.2j]))
    assert np.allclose(F.base, c * np.eye(1), atol=1e-12) and np.allclose(F.mixed, 0, atol=1e-12)


def test_kobayashi_examples():
    flat = finsler_from_field(Field.parse("abs2(Z0) + abs2(Z1)", 1, 1), 1, 1)
    assert np.max(np.abs(kobayashi_tensor(flat, np.array([0.3]), np.array([1.0, 0.5j])).data)) < 1e-9
    c = 1.3
    G = finsler_from_field(Field.parse(f"exp({c}*abs2(z1))*(abs2(Z0) + abs2(Z1))", 1, 1), 1, 1)
    z = 0.4 + 0.2j
    K = kobayashi_tensor(G, np.array([z]), np.array([0.7, 0.2 + 0.3j]))
    expected = -c * np.exp(c * abs(z) ** 2) * np.eye(2)
    assert np.allclose(K.data[:, :, 0, 0], expected, atol=1e-7)


@given(zpt, st.sampled_from([(1.0, 2.0), (0.5, -1.0), (3.0, 0.2)]))
def test_hermitian_collapse(z, c):
    M = diag_exp(*c)
    G = quadratic_finsler(M)
    Z = np.array([0.6 - 0.1j, 0.3 + 0.8j])
    K = kobayashi_tensor(G, np.array([z]), Z)
    T = chern_curvature(M, np.array([z]))
    assert np.max(np.abs(K.data - T.data)) < 1e-6


def test_collapse_non_diagonal():
    M = HermitianField.from_scene(builtin("rotated-exponential"))
    z = np.array([0.35 - 0.2j])
    K = kobayashi_tensor(quadratic_finsler(M), z, np.array([1.0, 0.4j]))
    assert np.max(np.abs(K.data - chern_curvature(M, z).data)) < 1e-6


def test_geodesic_curvature_examples():
    assert np.allclose(geodesic_curvature(scene_weight(builtin("trivial")), np.array([0.1]), np.array([0.5])), 0, atol=1e-12)
    c = 0.8
    P = field_weight(f"{c}*abs2(z1) + log(1 + abs2(w1))")
    assert np.allclose(geodesic_curvature(P, np.array([0.3]), np.array([0.2j])), c, atol=1e-12)
    for r in (1, 2):
        sc = builtin("stable-model", r=r, c=0.5)
        wt = scene_weight(sc)
        for z in sc.samples[::6]:
            g = geodesic_curvature(wt, z, np.full(r, 0.3 + 0.1j))
            # the log part is harmonic away from 0; the smooth part |z|^2 contributes 1
            assert g[0, 0] == pytest.approx(1.0 / (r + 1), abs=1e-9)


def test_schur_two_ways():
    for name in ("product", "diagonal-exponential", "stable-model", "rotated-exponential"):
        sc = builtin(name)
        wt = scene_weight(sc)
        for z in sc.samples[::4]:
            a, b = geodesic_curvature(wt, z, np.array([0.3 - 0.4j]), both=True)
            assert np.max(np.abs(a - b)) < 1e-8


def test_decomposition_examples():
    tr = scene_weight(builtin("trivial"))
    assert decomposition_residual(tr, np.array([0.2]), np.array([0.3 + 0.1j])) < 1e-10
    sc = builtin("diagonal-exponential")
    wt = scene_weight(sc)
    assert len(sc.samples) >= 25
    assert max(decomposition_residual(wt, z, np.array([0.4 - 0.2j])) for z in sc.samples) < 1e-5
    P = field_weight("2*abs2(z1) + log(1 + abs2(w1))")
    assert decomposition_residual(P, np.array([0.3]), np.array([0.7j])) < 1e-8


def test_decomposition_detail_and_units():
    wt = scene_weight(builtin("stable-model"))
    d = decomposition_residual(wt, np.array([0.3]), np.array([0.2]), detail=True)
    assert np.allclose(d["geodesic_curvature_kobayashi"], d["geodesic_curvature_schur"], atol=1e-6)
    raw = decomposition_residual(wt, np.array([0.3]), np.array([0.2]))
    unit = decomposition_residual(wt, np.array([0.3]), np.array([0.2]), normalized=True)
    assert unit == pytest.approx(raw / (2 * np.pi))


def test_decomposition_two_base_dims():
    sc = builtin("rotated-exponential", n=2)
    wt = scene_weight(sc)
    for z in sc.samples[:5]:
        assert decomposition_residual(wt, z, np.array([0.5 + 0.5j])) < 1e-5


def test_positivity_equivalence_examples():
    pts = np.array([[0.1], [0.4 + 0.3j], [-0.5j]])
    out = positivity_equivalence_check(diag_exp(1, 2), pts, per_dim=5)
    assert out["agree"]
    assert all(r["griffiths"] == "strictly-positive" for r in out["records"])
    neg = positivity_equivalence_check(diag_exp(-1, -1), pts, per_dim=5)
    assert neg["agree"]
    assert all(r["griffiths"] == "strictly-negative" and r["induced_weight_form"] != "strictly-positive" for r in neg["records"])
    const = positivity_equivalence_check(HermitianField.constant(np.eye(2)), pts, per_dim=5)
    assert const["agree"]
    assert all(r["griffiths"] == "semi-positive" and r["induced_weight_form"] == "semi-positive" for r in const["records"])


def test_positivity_equivalence_all_builtins():
    for name in ("trivial", "diagonal-exponential", "product", "stable-model", "rotated-exponential"):
        sc = builtin(name)
        assert positivity_equivalence_check(HermitianField.from_scene(sc), sc.samples[::4], per_dim=5)["agree"], name


def test_membership_examples():
    pts = np.array([[0.2], [0.5 + 0.1j]])
    tr = hx_membership(scene_weight(builtin("trivial")), pts, per_dim=9)
    assert tr["in_H"] and tr["in_H_h0"]
    st_ = builtin("stable-model")
    sm = hx_membership(scene_weight(st_), st_.samples[:5], per_dim=9)
    assert sm["in_H"] and sm["in_H_h0"] and sm["big_proxy"]["value"]
    assert "not a bigness certificate" in sm["big_proxy"]["label"]
    neg = hx_membership(field_weight("log(1 + abs2(w1)) - 3*abs2(z1)"), pts, per_dim=9)
    assert neg["in_H"] and not neg["in_H_h0"]


def test_chart_errors():
    wt = scene_weight(builtin("trivial"))
    with pytest.raises(InputError):
        wt.in_chart(5)
