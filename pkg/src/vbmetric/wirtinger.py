"""Numerical Wirtinger derivatives of fields.

Fields are callables ``f(vars)`` taking a list of ``m`` complex arrays (one per
variable, broadcast together) and returning an array of shape
``batch + out_shape``.  :func:`jet2` uses central-difference stencils with a
Richardson pair ``(h, h/2)``; :func:`dual_jet2` evaluates the same quantities
exactly (to rounding) by forward-mode propagation of :class:`~vbmetric.jet.Jet`
values and serves as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InputError
from .jet import Jet

DEFAULT_STEP = 1e-4
_STENCIL = np.array([1.0, -1.0, 1j, -1j])


@dataclass(frozen=True)
class Jet2:
    """Value and first/second Wirtinger derivatives at one or many points.

    Shapes: ``value`` is ``batch + out``; ``d`` and ``dbar`` are
    ``batch + (m,) + out``; ``dd[..., a, b, ...]`` is
    ``d^2 f / dxi_a dxibar_b`` with shape ``batch + (m, m) + out``.
    """

    value: np.ndarray
    d: np.ndarray
    dbar: np.ndarray
    dd: np.ndarray
    est_error: np.ndarray


def default_step(point, h0: float = DEFAULT_STEP) -> np.ndarray:
    """Per-point step ``h0 * max(1, |point|)`` rounded to a power of two."""
    p = np.asarray(point, dtype=complex)
    mag = np.max(np.abs(p), axis=-1, initial=0.0) if p.ndim else abs(p)
    raw = h0 * np.maximum(1.0, mag)
    return np.exp2(np.round(np.log2(raw)))


def _evaluate(f, pts: np.ndarray, context: str = ""):
    try:
        return np.asarray(f([pts[..., k] for k in range(pts.shape[-1])]), dtype=complex)
    except DomainError as exc:
        raise DomainError(f"{exc} while differentiating{context}") from exc


def _raw_derivatives(f, p: np.ndarray, h: np.ndarray, dirs: Sequence[int], out_ndim: int):
    """Single-step stencils; p has shape (N, m), h shape (N,)."""
    N, m = p.shape
    k = len(dirs)
    eye = np.eye(m)
    offsets = []
    # first-derivative points
    for a in dirs:
        for s in _STENCIL:
            offsets.append(s * eye[a])
    n_first = len(offsets)
    pairs = [(i, j) for i in range(k) for j in range(i, k)]
    for i, j in pairs:
        a, b = dirs[i], dirs[j]
        for s in _STENCIL:
            for t in _STENCIL:
                offsets.append(s * eye[a] + t * eye[b])
    offsets = np.asarray(offsets)  # (P, m)
    pts = p[None, :, :] + offsets[:, None, :] * h[None, :, None]
    vals = _evaluate(f, pts)  # (P, N, *out)
    out_shape = vals.shape[2:]
    hb = h.reshape((N,) + (1,) * len(out_shape))

    first = vals[:n_first].reshape((k, 4, N) + out_shape)
    coef = _STENCIL.reshape((1, 4, 1) + (1,) * len(out_shape))
    d = np.sum(np.conj(coef) * first, axis=1) / (4 * hb)
    dbar = np.sum(coef * first, axis=1) / (4 * hb)

    second = vals[n_first:].reshape((len(pairs), 4, 4, N) + out_shape)
    cs = np.conj(_STENCIL).reshape((1, 4, 1, 1) + (1,) * len(out_shape))
    ct = _STENCIL.reshape((1, 1, 4, 1) + (1,) * len(out_shape))
    mixed = np.sum(cs * ct * second, axis=(1, 2)) / (16 * hb * hb)  # d_a dbar_b
    mixed_t = np.sum(ct * cs * np.swapaxes(second, 1, 2), axis=(1, 2)) / (16 * hb * hb)
    dd = np.empty((k, k, N) + out_shape, dtype=complex)
    for idx, (i, j) in enumerate(pairs):
        dd[i, j] = mixed[idx]
        if i != j:
            # d_b dbar_a uses the same points with roles of the two shifts exchanged
            dd[j, i] = mixed_t[idx]
    # move derivative axes after the batch axis
    d = np.moveaxis(d, 0, 1)
    dbar = np.moveaxis(dbar, 0, 1)
    dd = np.moveaxis(dd, (0, 1), (1, 2))
    return d, dbar, dd


def jet2(
    f: Callable,
    point,
    directions: Optional[Sequence[int]] = None,
    h: Optional[float] = None,
    richardson: bool = True,
) -> Jet2:
    """Central-difference Wirtinger jet of ``f`` at ``point``.

    Parameters
    ----------
    f : callable
        ``f(list_of_m_arrays) -> array``.
    point : array_like, shape ``(m,)`` or ``(N, m)``
    directions : sequence of int, optional
        Variable indices to differentiate in (default: all).
    h : float, optional
        Base step; default ``1e-4 * max(1, |point|)`` rounded to a power of two.
    richardson : bool
        Combine steps ``h`` and ``h/2`` as ``(4 R(h/2) - R(h)) / 3``.

    Notes
    -----
    ``d f/dz = ((f(z+h) - f(z-h)) - i (f(z+ih) - f(z-ih))) / 4h``; the mixed
    second derivative composes this stencil with its conjugate.
    ``est_error`` is ``max |R(h) - R(h/2)|`` over all returned derivatives.
    """
    p = np.asarray(point, dtype=complex)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    if p.ndim != 2:
        raise InputError(f"point must have shape (m,) or (N, m), got {p.shape}")
    N, m = p.shape
    dirs = list(range(m)) if directions is None else list(directions)
    if any(not 0 <= a < m for a in dirs):
        raise InputError(f"directions {dirs} out of range for {m} variables")
    hs = default_step(p) if h is None else np.full(N, float(h))

    value = _evaluate(f, p)
    d1, db1, dd1 = _raw_derivatives(f, p, hs, dirs, value.ndim - 1)
    if richardson:
        d2, db2, dd2 = _raw_derivatives(f, p, hs / 2, dirs, value.ndim - 1)
        err = np.maximum.reduce(
            [
                _batch_max(np.abs(d1 - d2)),
                _batch_max(np.abs(db1 - db2)),
                _batch_max(np.abs(dd1 - dd2)),
            ]
        )
        d = (4 * d2 - d1) / 3
        dbar = (4 * db2 - db1) / 3
        dd = (4 * dd2 - dd1) / 3
    else:
        d, dbar, dd = d1, db1, dd1
        err = np.full(N, np.nan)
    if single:
        return Jet2(value[0], d[0], dbar[0], dd[0], float(err[0]))
    return Jet2(value, d, dbar, dd, err)


def _batch_max(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[0], -1).max(axis=1, initial=0.0)


def dual_jet2(f: Callable, point, directions: Optional[Sequence[int]] = None) -> Jet2:
    """Exact (forward-mode) Wirtinger jet; same layout as :func:`jet2`.

    ``f`` must be built from operations supported by :class:`~vbmetric.jet.Jet`
    (all field-language operations are).  ``est_error`` is reported as 0.
    """
    p = np.asarray(point, dtype=complex)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    N, m = p.shape
    dirs = list(range(m)) if directions is None else list(directions)
    k = len(dirs)
    args = [p[:, j] for j in range(m)]
    for slot, a in enumerate(dirs):
        args[a] = Jet.seed(p[:, a], slot, 2 * k)
    out = f(args)
    if not isinstance(out, Jet):
        # constant in the differentiated directions
        val = np.broadcast_to(np.asarray(out, dtype=complex), (N,) + np.shape(out)[1:] if np.ndim(out) else (N,))
        zeros1 = np.zeros((N, k) + val.shape[1:], dtype=complex)
        zeros2 = np.zeros((N, k, k) + val.shape[1:], dtype=complex)
        res = Jet2(val.copy(), zeros1, zeros1.copy(), zeros2, np.zeros(N))
    else:
        d, dbar, dd = out.wirtinger(k)
        val = np.broadcast_to(out.val, (N,)).copy()
        res = Jet2(val, d, dbar, dd, np.zeros(N))
    if single:
        return Jet2(res.value[0], res.d[0], res.dbar[0], res.dd[0], 0.0)
    return res


def complex_hessian(f: Callable, point, directions=None, method: str = "fd") -> np.ndarray:
    """Matrix ``d^2 f / dxi_a dxibar_b`` (Hermitian for real ``f``)."""
    if method == "dual":
        return dual_jet2(f, point, directions).dd
    if method == "fd":
        return jet2(f, point, directions).dd
    raise InputError(f"unknown differentiation method {method!r}")


def jet_check(f: Callable, point, h: Optional[float] = None, dual_ok: bool = True, rtol_flag: float = 1e-6) -> dict:
    """Self-check of :func:`jet2` at a single point.

    Compares the Richardson jets at steps ``h`` and ``h/2`` and, when
    ``dual_ok``, a forward-mode evaluation.  Never raises on disagreement;
    the returned report carries a ``flagged`` list.
    """
    p = np.asarray(point, dtype=complex)
    base = float(default_step(p)) if h is None else float(h)
    j1 = jet2(f, p, h=base)
    j2 = jet2(f, p, h=base / 2)
    scale = max(1.0, float(np.max(np.abs(j1.dd), initial=0.0)), float(np.max(np.abs(j1.d), initial=0.0)))
    step_gap = max(float(np.max(np.abs(j1.dd - j2.dd), initial=0.0)), float(np.max(np.abs(j1.d - j2.d), initial=0.0)))
    report = {
        "point": p,
        "step": base,
        "est_error": j1.est_error,
        "step_disagreement": step_gap,
        "relative_step_disagreement": step_gap / scale,
        "dual_available": bool(dual_ok),
        "flagged": [],
    }
    threshold = max(50.0 * j1.est_error, 1e-12 * scale)
    if dual_ok:
        jd = dual_jet2(f, p)
        gap = max(float(np.max(np.abs(j1.dd - jd.dd), initial=0.0)), float(np.max(np.abs(j1.d - jd.d), initial=0.0)))
        report["dual_disagreement"] = gap
        report["relative_dual_disagreement"] = gap / scale
        if gap > threshold:
            report["flagged"].append(f"finite differences disagree with forward mode by {gap:.3e} > {threshold:.3e}")
    if step_gap > threshold:
        report["flagged"].append(f"step halving changes derivatives by {step_gap:.3e} > {threshold:.3e}")
    if j1.est_error > rtol_flag * scale:
        report["flagged"].append(f"elevated Richardson error estimate {j1.est_error:.3e}")
    return report


def field_callable(field, n: int, layout: str = "zw") -> Callable:
    """Adapt a :class:`~vbmetric.dsl.Field` to the ``f(vars)`` convention.

    ``layout`` selects how the flat variable list is split: ``"zw"`` gives
    ``z1..zn, w1..wr`` and ``"zZ"`` gives ``z1..zn, Z0..Zr``.
    """
    if layout == "zw":
        return lambda v: field(z=v[:n], w=v[n:])
    if layout == "zZ":
        return lambda v: field(z=v[:n], Z=v[n:])
    if layout == "z":
        return lambda v: field(z=v[:n])
    raise InputError(f"unknown layout {layout!r}")


def richardson_ratio(f: Callable, point, h: float) -> float:
    """Ratio of successive Richardson discrepancies ``|R(h)-R(h/2)| / |R(h/2)-R(h/4)|``."""
    a = jet2(f, point, h=h, richardson=False).dd
    b = jet2(f, point, h=h / 2, richardson=False).dd
    c = jet2(f, point, h=h / 4, richardson=False).dd
    num = float(np.max(np.abs(a - b)))
    den = float(np.max(np.abs(b - c)))
    return math.inf if den == 0 else num / den
