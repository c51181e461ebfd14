"""Scenes: a metric and/or chart weight together with sample points.

A scene file is TOML::

    n = 1                      # base dimension
    rank = 2                   # bundle rank r + 1
    chart = 0                  # fiber chart index A
    metric = "[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]"
    weight = "log(1 + abs2(w1))"           # optional
    base_weight = "0.5*log(abs2(z1))"      # optional, singular base weight
    samples = [["0.3"], ["0.1+0.2i"]]      # one list of n coordinates per point
    punctures = [{ center = ["0"], radius = 0.05 }]

    [tolerances]
    positivity = 1e-8

A scene may instead name a builtin family::

    builtin = "diagonal-exponential"
    [params]
    c = [1.0, 2.0]

Keys given next to ``builtin`` override the builtin's values.
Complex coordinates are written as numbers, ``[re, im]`` pairs or strings
such as ``"0.1+0.2i"``.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dsl import Field
from .errors import InputError

if sys.version_info >= (3, 11):  # pragma: no cover
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULT_TOLERANCES = {
    "positivity": 1e-8,
    "decomposition": 1e-5,
    "collapse": 1e-6,
    "roundtrip": 1e-4,
    "ke": 1e-6,
    "duality": 1e-3,
    "pushforward": 1e-3,
    "pairing": 1e-5,
    "log_pairing": 1e-6,
}


@dataclass(frozen=True)
class Puncture:
    center: tuple
    radius: float

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=complex)
        return bool(np.max(np.abs(z - np.asarray(self.center, dtype=complex)), initial=0.0) < self.radius)


@dataclass(frozen=True)
class Scene:
    n: int
    rank: int
    chart: int = 0
    metric: Optional[Field] = None
    weight: Optional[Field] = None
    base_weight: Optional[Field] = None
    samples: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), dtype=complex))
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    punctures: tuple = ()
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise InputError("base dimension n must be at least 1")
        if self.rank < 1:
            raise InputError("rank must be at least 1")
        if not 0 <= self.chart <= self.r:
            raise InputError(f"chart index {self.chart} outside 0..{self.r}")
        if self.metric is None and self.weight is None:
            raise InputError("a scene needs a metric, a weight, or both")
        if self.metric is not None:
            if not self.metric.is_matrix:
                raise InputError("metric must be a matrix literal")
            rows = self.metric.expr.rows
            if len(rows) != self.rank or any(len(row) != self.rank for row in rows):
                raise InputError(f"metric must be {self.rank}x{self.rank}")
            if any(k == "w" or k == "Z" for k, _ in _kinds(self.metric)):
                raise InputError("metric may depend on base coordinates only")
        if self.weight is not None and self.weight.is_matrix:
            raise InputError("weight must be a scalar field")
        s = np.asarray(self.samples, dtype=complex).reshape(-1, self.n)
        object.__setattr__(self, "samples", s)
        for p in s:
            for pc in self.punctures:
                if pc.contains(p):
                    raise InputError(f"sample point {p.tolist()} lies inside a punctured disc")
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances)
        object.__setattr__(self, "tolerances", tol)

    @property
    def r(self) -> int:
        return self.rank - 1

    def digest(self) -> str:
        """SHA-256 of a canonical description of the scene."""
        desc = {
            "n": self.n,
            "rank": self.rank,
            "chart": self.chart,
            "metric": str(self.metric) if self.metric is not None else None,
            "weight": str(self.weight) if self.weight is not None else None,
            "base_weight": str(self.base_weight) if self.base_weight is not None else None,
            "samples": [[[repr(c.real), repr(c.imag)] for c in p] for p in self.samples],
            "tolerances": {k: repr(v) for k, v in sorted(self.tolerances.items())},
            "punctures": [[[repr(complex(c)) for c in p.center], repr(p.radius)] for p in self.punctures],
        }
        return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()

    def with_samples(self, samples) -> "Scene":
        return replace(self, samples=np.asarray(samples, dtype=complex).reshape(-1, self.n))

    def metric_at(self, z) -> np.ndarray:
        """Metric matrix at one point ``z`` (shape ``(n,)``) or a batch ``(N, n)``."""
        if self.metric is None:
            raise InputError("scene has no Hermitian metric")
        return eval_matrix(self.metric, z, self.n)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "rank": self.rank,
            "chart": self.chart,
            "metric": str(self.metric) if self.metric is not None else None,
            "weight": str(self.weight) if self.weight is not None else None,
            "base_weight": str(self.base_weight) if self.base_weight is not None else None,
            "params": self.params,
            "digest": self.digest(),
        }


def _kinds(f: Field):
    from .dsl import variables

    return variables(f.expr)


def eval_matrix(metric: Field, z, n: int) -> np.ndarray:
    """Evaluate a matrix field, broadcasting constant entries over the batch."""
    z = np.asarray(z, dtype=complex)
    batch = z.shape[:-1]
    val = np.asarray(metric(z=[z[..., k] for k in range(n)]), dtype=complex)
    R = val.shape[-1]
    return np.broadcast_to(val, batch + (R, R)).copy()


# ------------------------------------------------------------------------- samples


def default_samples(n: int, punctures=(), count: int = 25, radius: float = 0.6, seed: int = 20240601) -> np.ndarray:
    """Deterministic sample points avoiding punctured discs.

    For ``n == 1`` a polar 5x5 grid (radii 0.1..0.6 scaled); otherwise seeded
    uniform draws in the polydisc of the given radius.
    """
    if n == 1:
        radii = radius * np.array([0.2, 0.4, 0.6, 0.8, 1.0])
        pts = []
        for k, rho in enumerate(radii):
            for j in range(5):
                ang = 2 * math.pi * j / 5 + 0.37 * k + 0.11
                pts.append([rho * complex(math.cos(ang), math.sin(ang))])
        out = np.asarray(pts, dtype=complex)
    else:
        rng = np.random.default_rng(seed)
        rho = radius * np.sqrt(rng.uniform(0.04, 1.0, (count, n)))
        ang = rng.uniform(0, 2 * math.pi, (count, n))
        out = rho * np.exp(1j * ang)
    keep = [p for p in out if not any(pc.contains(p) for pc in punctures)]
    return np.asarray(keep, dtype=complex).reshape(-1, n)


# ------------------------------------------------------------------------ builtins


def _base_sq(n: int) -> str:
    return "(" + " + ".join(f"abs2(z{k})" for k in range(1, n + 1)) + ")"


def _fs_weight(r: int) -> str:
    if r == 0:
        return "0"
    return "log(1 + " + " + ".join(f"abs2(w{k})" for k in range(1, r + 1)) + ")"


def _matrix(entries) -> str:
    return "[" + ", ".join("[" + ", ".join(row) + "]" for row in entries) + "]"


def _num(x: float) -> str:
    s = repr(float(x))
    return f"({s})" if s.startswith("-") else s


def _cnum(c: complex) -> str:
    re_, im_ = float(c.real), float(c.imag)
    sign = "-" if im_ < 0 or (im_ == 0 and math.copysign(1, im_) < 0) else "+"
    return f"({repr(re_)} {sign} {repr(abs(im_))}i)"


def _as_tuple(c) -> tuple:
    if np.ndim(c) == 0:
        return (float(c),)
    return tuple(float(x) for x in c)


def builtin(name: str, **params) -> Scene:
    """Construct a builtin scene.

    Families: ``trivial``, ``fubini-study``, ``diagonal-exponential`` (``c``),
    ``product`` (``c``), ``stable-model`` (``r``, ``c``, ``smooth``) and
    ``rotated-exponential`` (``c``, ``angle``, ``phase``), a non-diagonal
    unitary conjugate of the diagonal family.  All accept ``n`` (default 1).
    """
    params = dict(params)
    n = int(params.pop("n", 1))
    samples = params.pop("samples", None)
    tol = params.pop("tolerances", {})
    chart = int(params.pop("chart", 0))
    S = _base_sq(n)

    def finish(scene_kwargs, used):
        extra = set(params) - set(used)
        if extra:
            raise InputError(f"builtin {name!r} does not take parameter(s) {sorted(extra)}")
        punct = scene_kwargs.pop("punctures", ())
        smp = default_samples(n, punct) if samples is None else samples
        rec = {k: params[k] for k in used if k in params}
        return Scene(
            n=n,
            chart=chart,
            samples=smp,
            tolerances=tol,
            punctures=punct,
            name=name,
            params={"n": n, **{k: _jsonable(v) for k, v in rec.items()}},
            **scene_kwargs,
        )

    if name == "trivial":
        r = int(params.get("r", 1))
        eye = [["1" if a == b else "0" for b in range(r + 1)] for a in range(r + 1)]
        return finish(
            dict(rank=r + 1, metric=Field.parse(_matrix(eye), n, r), weight=Field.parse(_fs_weight(r), n, r)),
            ["r"],
        )
    if name == "fubini-study":
        r = int(params.get("r", 1))
        return finish(dict(rank=r + 1, weight=Field.parse(_fs_weight(r), n, r)), ["r"])
    if name == "diagonal-exponential":
        c = _as_tuple(params.get("c", (1.0, 2.0)))
        r = len(c) - 1
        ent = [[f"exp(-{_num(c[a])}*{S})" if a == b else "0" for b in range(r + 1)] for a in range(r + 1)]
        return finish(dict(rank=r + 1, metric=Field.parse(_matrix(ent), n, r)), ["c"])
    if name == "product":
        c = float(params.get("c", 1.0))
        r = int(params.get("r", 1))
        ent = [[f"exp(-{_num(c)}*{S})" if a == b else "0" for b in range(r + 1)] for a in range(r + 1)]
        return finish(
            dict(
                rank=r + 1,
                metric=Field.parse(_matrix(ent), n, r),
                weight=Field.parse(f"{_num(c)}*{S} + {_fs_weight(r)}", n, r),
            ),
            ["c", "r"],
        )
    if name == "stable-model":
        r = int(params.get("r", 1))
        c = float(params.get("c", 0.5))
        smooth = str(params.get("smooth", "abs2(z1)"))
        if n != 1:
            raise InputError("stable-model is defined over a curve (n = 1)")
        base = f"{_num(c)}*log(abs2(z1)) + ({smooth})"
        k = 1.0 / (r + 1)
        ent = [[f"exp(-{repr(k)}*({base}))" if a == b else "0" for b in range(r + 1)] for a in range(r + 1)]
        return finish(
            dict(
                rank=r + 1,
                metric=Field.parse(_matrix(ent), n, r),
                weight=Field.parse(f"{repr(k)}*({base}) + {_fs_weight(r)}", n, r),
                base_weight=Field.parse(base, n, r),
                punctures=(Puncture((0j,), 0.05),),
            ),
            ["r", "c", "smooth"],
        )
    if name == "rotated-exponential":
        c = _as_tuple(params.get("c", (1.0, 2.0)))
        if len(c) != 2:
            raise InputError("rotated-exponential takes exactly two exponents")
        angle = float(params.get("angle", 0.4))
        phase = float(params.get("phase", 0.3))
        u = np.array(
            [
                [math.cos(angle), -np.exp(1j * phase) * math.sin(angle)],
                [np.exp(-1j * phase) * math.sin(angle), math.cos(angle)],
            ]
        )
        ent = []
        for a in range(2):
            row = []
            for b in range(2):
                terms = [f"{_cnum(u[a, k] * np.conj(u[b, k]))}*exp(-{_num(c[k])}*{S})" for k in range(2)]
                row.append(" + ".join(terms))
            ent.append(row)
        return finish(dict(rank=2, metric=Field.parse(_matrix(ent), n, 1)), ["c", "angle", "phase"])
    raise InputError(f"unknown builtin {name!r}")


BUILTINS = ("trivial", "fubini-study", "diagonal-exponential", "product", "stable-model", "rotated-exponential")


def _jsonable(v):
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ---------------------------------------------------------------------- scene files


def parse_complex(x) -> complex:
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(t, (int, float)) for t in x):
        return complex(x[0], x[1])
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", "").replace("i", "j"))
        except ValueError as exc:
            raise InputError(f"cannot read complex number {x!r}") from exc
    raise InputError(f"cannot read complex number {x!r}")


def _parse_point(p, n: int) -> list:
    if not isinstance(p, (list, tuple)):
        p = [p]
    if n == 1 and len(p) == 2 and all(isinstance(t, (int, float)) for t in p):
        # a bare [re, im] pair for a single coordinate
        return [parse_complex(p)]
    if len(p) != n:
        raise InputError(f"sample point {p!r} has {len(p)} coordinates, expected {n}")
    return [parse_complex(c) for c in p]


def scene_from_dict(d: dict) -> Scene:
    d = dict(d)
    known = {"n", "rank", "chart", "metric", "weight", "base_weight", "samples", "tolerances", "punctures", "builtin", "params", "name"}
    unknown = set(d) - known
    if unknown:
        raise InputError(f"unknown scene key(s): {sorted(unknown)}")
    if "builtin" in d:
        params = dict(d.get("params", {}))
        for key in ("n", "chart"):
            if key in d:
                params[key] = d[key]
        base = builtin(d["builtin"], **params)
        n = base.n
    else:
        base = None
        if "n" not in d or "rank" not in d:
            raise InputError("scene needs keys 'n' and 'rank' (or 'builtin')")
        n = int(d["n"])
    rank = int(d.get("rank", base.rank if base else 1))
    r = rank - 1

    def fld(key):
        if key in d:
            src = d[key]
            if not isinstance(src, str):
                raise InputError(f"{key} must be a string expression")
            return Field.parse(src, n, r)
        return getattr(base, key) if base else None

    punct = base.punctures if base else ()
    if "punctures" in d:
        punct = tuple(Puncture(tuple(_parse_point(p.get("center", [0] * n), n)), float(p["radius"])) for p in d["punctures"])
    if "samples" in d:
        samples = np.asarray([_parse_point(p, n) for p in d["samples"]], dtype=complex).reshape(-1, n)
    elif base is not None:
        samples = base.samples
    else:
        samples = default_samples(n, punct)
    tol = dict(base.tolerances) if base else {}
    for k, v in d.get("tolerances", {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise InputError(f"unknown tolerance {k!r}")
        tol[k] = float(v)
    return Scene(
        n=n,
        rank=rank,
        chart=int(d.get("chart", base.chart if base else 0)),
        metric=fld("metric"),
        weight=fld("weight"),
        base_weight=fld("base_weight"),
        samples=samples,
        tolerances=tol,
        punctures=punct,
        name=str(d.get("name", base.name if base else "custom")),
        params=base.params if base else {},
    )


def load_scene(path) -> Scene:
    """Read a TOML scene file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read scene file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"malformed scene file {path}: {exc}") from exc
    return scene_from_dict(data)
