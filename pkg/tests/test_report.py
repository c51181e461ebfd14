import json
import math
from fractions import Fraction

import numpy as np
from hypothesis import given, strategies as st

from vbmetric.report import SCHEMA_VERSION, dumps, make_report, to_plain
from vbmetric.scene import builtin
from vbmetric.tensor import matrix_verdict


def test_float_format_round_trips_exactly():
    x = 0.1 + 0.2
    text = dumps({"x": x})
    assert "0.30000000000000004" in text
    assert json.loads(text)["x"] == x


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_survive(x):
    assert json.loads(dumps([x]))[0] == x


def test_special_values():
    d = json.loads(dumps({"a": math.nan, "b": math.inf, "c": -math.inf, "d": 0.0, "e": 3.0, "f": -0.0}))
    assert d == {"a": "nan", "b": "inf", "c": "-inf", "d": 0.0, "e": 3.0, "f": 0.0}
    assert '"e": 3.0' in dumps({"e": 3.0})


def test_complex_and_arrays():
    d = json.loads(dumps({"z": 1 + 2j, "m": np.array([[1 + 0j, 2j]]), "v": np.arange(3)}))
    assert d["z"] == [1.0, 2.0]
    assert d["m"] == [[[1.0, 0.0], [0.0, 2.0]]]
    assert d["v"] == [0, 1, 2]


def test_keys_sorted_and_deterministic():
    a = dumps({"b": 1, "a": {"d": 2, "c": np.float64(0.5)}})
    b = dumps({"a": {"c": 0.5, "d": 2}, "b": 1})
    assert a == b
    assert a.index('"a"') < a.index('"b"')
    assert a.endswith("\n")


def test_library_objects():
    assert to_plain(Fraction(3, 2)) == 1.5
    v = to_plain(matrix_verdict(np.eye(2)))
    assert v["class"] == "strictly-positive"
    sc = to_plain(builtin("trivial"))
    assert sc["name"] == "trivial" and len(sc["digest"]) > 0
    assert to_plain(np.bool_(True)) is True


def test_envelope():
    rep = make_report("threshold", {"R": 15}, params={"r": 2})
    assert rep["tool"] == "vbmetric" and rep["schema"] == SCHEMA_VERSION
    assert rep["scene"] is None and rep["warnings"] == []
    assert json.loads(dumps(rep))["result"] == {"R": 15}
