import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbmetric.errors import InputError
from vbmetric.tensor import (
    CurvatureTensor,
    classify,
    hermitian_eigen,
    matrix_verdict,
    nakano_flatten,
)

ORDER = ["strictly-negative", "semi-negative", "indefinite", "semi-positive", "strictly-positive"]


def hermitian(seed, d):
    r = np.random.default_rng(seed)
    a = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    return a + a.conj().T


@pytest.mark.parametrize(
    "m, expected",
    [
        (np.eye(2), [1.0, 1.0]),
        (np.diag([3.0, -1.0]), [-1.0, 3.0]),
        (np.array([[2, 1j], [-1j, 2]]), [1.0, 3.0]),  # roots of (2-x)^2 - 1
    ],
)
def test_hermitian_eigen_examples(m, expected):
    vals, vecs = hermitian_eigen(m)
    assert np.allclose(vals, expected, atol=1e-12)
    assert np.allclose(vecs.conj().T @ vecs, np.eye(len(vals)), atol=1e-10)
    assert np.allclose(m @ vecs, vecs * vals, atol=1e-10 * np.linalg.norm(m))


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_eigen_reconstruction(seed, d):
    m = hermitian(seed, d)
    vals, vecs = hermitian_eigen(m)
    assert np.all(np.diff(vals) >= 0)
    rec = (vecs * vals) @ vecs.conj().T
    assert np.linalg.norm(rec - m) <= 1e-9 * np.linalg.norm(m)


def test_eigen_rejects_bad_input():
    with pytest.raises(InputError):
        hermitian_eigen(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(InputError):
        hermitian_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InputError):
        hermitian_eigen(np.zeros((0, 0)))


def test_classify_examples():
    assert classify([0.5], 1e-8).cls == "strictly-positive"
    z = classify([0.0, 0.0], 1e-8)
    assert z.cls == "semi-positive" and "also semi-negative" in z.note
    assert classify([-0.3, 0.7], 1e-8).cls == "indefinite"
    assert classify([-2.0, -0.5]).cls == "strictly-negative"
    assert classify([-2.0, 0.0]).cls == "semi-negative"
    assert classify([0.0, 1.0]).cls == "semi-positive"
    with pytest.raises(InputError):
        classify([], 1e-8)
    with pytest.raises(InputError):
        classify([1.0], 0.0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(1e-10, 1e-2))
def test_classify_consistent_with_extremes(vals, tol):
    v = classify(vals, tol)
    lo, hi = min(vals), max(vals)
    assert (v.cls == "strictly-positive") == (lo > tol)
    assert (v.cls == "strictly-negative") == (hi < -tol)
    if v.cls == "indefinite":
        assert lo < -tol and hi > tol


@given(st.integers(0, 10_000), st.floats(0.01, 50.0))
def test_classify_monotone_under_identity_shift(seed, s):
    m = hermitian(seed, 3)
    v0 = matrix_verdict(m, normalize=False)
    v1 = matrix_verdict(m + s * np.eye(3), normalize=False)
    assert ORDER.index(v1.cls) >= ORDER.index(v0.cls)


def test_matrix_verdict_scale_and_witness():
    m = np.diag([4.0, -2.0])
    v = matrix_verdict(m)
    assert v.cls == "indefinite"
    assert v.scale == 4.0 and v.min_value * v.scale == pytest.approx(-2.0)
    w = v.witness_min
    assert np.real(w.conj() @ m @ w) == pytest.approx(-2.0)


def test_nakano_flatten_examples():
    z = CurvatureTensor(np.zeros((2, 2, 1, 1)))
    assert np.all(nakano_flatten(z, np.eye(2)) == 0)
    # endomorphism-valued rank-one tensor: the single entry is Theta * H
    t = CurvatureTensor(np.full((1, 1, 1, 1), 0.7), lowered=False)
    assert nakano_flatten(t, np.array([[2.0]]))[0, 0] == pytest.approx(0.7 * 2.0)
    # an already lowered tensor is used as is
    assert nakano_flatten(CurvatureTensor(np.full((1, 1, 1, 1), 0.7)), np.array([[2.0]]))[0, 0] == pytest.approx(0.7)
    c = [1.0, 3.0]
    n = 2
    data = np.zeros((2, 2, n, n))
    for a in range(2):
        data[a, a] = c[a] * np.eye(n)
    M = nakano_flatten(CurvatureTensor(data), np.eye(2))
    assert np.allclose(M, np.diag([1.0, 1.0, 3.0, 3.0]))
    with pytest.raises(InputError):
        nakano_flatten(CurvatureTensor(data), np.eye(3))


@given(st.integers(0, 10_000))
def test_nakano_flatten_exactly_hermitian(seed):
    r = np.random.default_rng(seed)
    T = CurvatureTensor(r.normal(size=(2, 2, 3, 3)) + 1j * r.normal(size=(2, 2, 3, 3))).hermitian_part()
    M = nakano_flatten(T, np.eye(2))
    assert np.array_equal(M, M.conj().T)


def test_curvature_tensor_shape_and_pair_symmetry():
    with pytest.raises(InputError):
        CurvatureTensor(np.zeros((2, 3, 1, 1)))
    r = np.random.default_rng(0)
    T = CurvatureTensor(r.normal(size=(2, 2, 2, 2)) + 0j)
    assert T.hermitian_part().pair_symmetry_defect() == 0.0
