"""Deterministic JSON reports.

Numbers are written with 17 significant digits, complex values as
``[re, im]``, arrays as nested lists and non-finite floats as the strings
``"nan"``, ``"inf"`` and ``"-inf"``.  Keys are sorted so that identical inputs
give byte-identical output.
"""

from __future__ import annotations

import dataclasses
import json
import math
from fractions import Fraction
from typing import Any, Optional

import numpy as np

SCHEMA_VERSION = 1


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if x == 0:
        return "0.0"
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def to_plain(obj: Any) -> Any:
    """Convert library objects to JSON-compatible Python values (complex kept)."""
    from .dsl import Field
    from .scene import Scene
    from .tensor import CurvatureTensor, Verdict

    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return complex(obj)
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_plain(x) for x in obj.tolist()] if obj.ndim else to_plain(obj.item())
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if isinstance(obj, Scene):
        return to_plain(obj.to_dict())
    if isinstance(obj, Field):
        return str(obj)
    if isinstance(obj, Verdict):
        return to_plain(
            {
                "class": obj.cls,
                "min_value": obj.min_value,
                "max_value": obj.max_value,
                "scale": obj.scale,
                "tol": obj.tol,
                "witness_min": obj.witness_min,
                "witness_max": obj.witness_max,
                "heuristic": obj.heuristic,
                "restarts": obj.restarts,
                "note": obj.note,
            }
        )
    if isinstance(obj, CurvatureTensor):
        return to_plain({"tensor": obj.data, "est_error": obj.est_error, "lowered": obj.lowered})
    if hasattr(obj, "to_dict"):
        return to_plain(obj.to_dict())
    if dataclasses.is_dataclass(obj):
        return to_plain({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump(v: Any, indent: int, level: int, out: list) -> None:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if v is None:
        out.append("null")
    elif v is True:
        out.append("true")
    elif v is False:
        out.append("false")
    elif isinstance(v, int):
        out.append(str(v))
    elif isinstance(v, float):
        out.append(_float(v))
    elif isinstance(v, complex):
        out.append("[" + _float(v.real) + ", " + _float(v.imag) + "]")
    elif isinstance(v, str):
        out.append(json.dumps(v, ensure_ascii=False))
    elif isinstance(v, list):
        if not v:
            out.append("[]")
        elif all(isinstance(x, (int, float, complex)) and not isinstance(x, bool) for x in v):
            parts = []
            for x in v:
                sub: list = []
                _dump(x, indent, level + 1, sub)
                parts.append("".join(sub))
            out.append("[" + ", ".join(parts) + "]")
        else:
            out.append("[")
            for i, x in enumerate(v):
                out.append(pad)
                _dump(x, indent, level + 1, out)
                if i < len(v) - 1:
                    out.append(",")
            out.append(end + "]")
    elif isinstance(v, dict):
        if not v:
            out.append("{}")
            return
        out.append("{")
        keys = sorted(v)
        for i, k in enumerate(keys):
            out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
            _dump(v[k], indent, level + 1, out)
            if i < len(keys) - 1:
                out.append(",")
        out.append(end + "}")
    else:  # pragma: no cover - to_plain guarantees the types above
        raise TypeError(type(v).__name__)


def dumps(obj: Any, indent: int = 2) -> str:
    """Serialize ``obj`` deterministically; see the module docstring."""
    out: list = []
    _dump(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def make_report(
    analysis: str,
    result: Any,
    scene=None,
    params: Optional[dict] = None,
    conventions: Optional[dict] = None,
    warnings: Optional[list] = None,
) -> dict:
    """Standard report envelope."""
    from . import __version__

    return {
        "tool": "vbmetric",
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "analysis": analysis,
        "scene": None if scene is None else scene.to_dict(),
        "params": params or {},
        "conventions": conventions or {},
        "warnings": warnings or [],
        "result": result,
    }
