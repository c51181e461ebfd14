import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbmetric.dsl import Field, parse_field, to_source
from vbmetric.errors import DomainError, ParseError
from vbmetric.finsler import weight_from_field
from vbmetric.jet import value_of
from vbmetric.scene import builtin


def ev(src, n=1, r=1, **kw):
    return complex(np.asarray(value_of(Field.parse(src, n, r)(**kw))))


def test_examples():
    assert ev("abs2(z1)", z=[1 + 1j]) == pytest.approx(2.0)
    assert ev("log(1 + abs2(w1))", z=[0.0], w=[0.0]) == pytest.approx(0.0)
    assert ev("1/(1+abs2(w1))^2", z=[0.0], w=[1.0]) == pytest.approx(0.25)


def test_matrix_literal():
    f = Field.parse("[[exp(-abs2(z1)), 0],[0, exp(-2*abs2(z1))]]", 1, 1)
    assert f.is_matrix
    m = np.asarray(f(z=[np.array(0.5)]), dtype=complex)
    assert np.allclose(m, np.diag([np.exp(-0.25), np.exp(-0.5)]))


def test_precedence():
    # unary minus binds tighter than ^
    assert ev("-2^2", z=[0.0]) == pytest.approx(4.0)
    assert ev("2*3^2", z=[0.0]) == pytest.approx(18.0)
    assert ev("2^3^2", z=[0.0]) == pytest.approx(2.0**9)
    assert ev("1 - 2 - 3", z=[0.0]) == pytest.approx(-4.0)
    assert ev("8/2/2", z=[0.0]) == pytest.approx(2.0)


def test_conj_and_sum():
    assert ev("conj(z1)", z=[1 + 2j]) == pytest.approx(1 - 2j)
    assert ev("sum(k, 1, r, abs2(w[k]))", n=1, r=2, z=[0.0], w=[1.0, 2j]) == pytest.approx(5.0)


@pytest.mark.parametrize(
    "src, token",
    [("log(1 + foo)", "foo"), ("exp(1, 2)", None), ("1 + ", None), ("abs2(z1", None), ("3 $ 4", "$")],
)
def test_parse_errors_have_position(src, token):
    with pytest.raises(ParseError) as info:
        Field.parse(src, 1, 1)
    e = info.value
    assert e.line >= 1 and e.column >= 1
    if token is not None:
        assert e.token == token


def test_variable_out_of_range():
    with pytest.raises(Exception):
        Field.parse("abs2(z2)", 1, 1)


def test_domain_error_reports_subtree():
    with pytest.raises(DomainError) as info:
        ev("log(abs2(z1))", z=[0.0])
    assert "log" in str(info.value)


_ATOMS = ["z1", "w1", "abs2(z1)", "abs2(w1)", "1", "2.5", "i", "conj(z1)"]


@st.composite
def exprs(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from(_ATOMS))
    kind = draw(st.sampled_from(["bin", "fn", "neg"]))
    if kind == "bin":
        op = draw(st.sampled_from(["+", "-", "*", "/", "^"]))
        b = draw(exprs(depth=depth - 1)) if op != "^" else draw(st.sampled_from(["2", "3"]))
        return f"({draw(exprs(depth=depth - 1))}) {op} ({b})"
    if kind == "fn":
        fn = draw(st.sampled_from(["exp", "sin", "cos", "abs2"]))
        return f"{fn}({draw(exprs(depth=depth - 1))})"
    return f"-({draw(exprs(depth=depth - 1))})"


@given(exprs())
def test_parse_print_parse_idempotent(src):
    once = to_source(parse_field(src))
    assert to_source(parse_field(once)) == once
    assert parse_field(once) == parse_field(to_source(parse_field(once)))


@given(exprs())
def test_printing_preserves_value(src):
    a = Field.parse(src, 1, 1)
    b = Field.parse(to_source(parse_field(src)), 1, 1)
    z, w = [np.array(0.3 + 0.2j)], [np.array(-0.4 + 0.1j)]
    try:
        va = complex(np.asarray(value_of(a(z=z, w=w))))
    except (DomainError, ZeroDivisionError, OverflowError):
        return
    vb = complex(np.asarray(value_of(b(z=z, w=w))))
    assert vb == pytest.approx(va, rel=1e-12, abs=1e-12)


@given(
    st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
    st.complex_numbers(min_magnitude=0.1, max_magnitude=3, allow_nan=False, allow_infinity=False),
    st.complex_numbers(min_magnitude=0.1, max_magnitude=3, allow_nan=False, allow_infinity=False),
)
def test_homogeneity_of_trivial_lift(lam, Z0, Z1):
    sc = builtin("trivial")
    lift = weight_from_field(sc.weight, 1, 1).lift
    z = [np.asarray(0.2 + 0.1j)]
    if abs(lam) < 1e-3:
        return
    g0 = complex(lift(z, [np.asarray(Z0), np.asarray(Z1)]))
    g1 = complex(lift(z, [np.asarray(lam * Z0), np.asarray(lam * Z1)]))
    assert abs(g1 - abs(lam) ** 2 * g0) <= 1e-12 * abs(g1)
