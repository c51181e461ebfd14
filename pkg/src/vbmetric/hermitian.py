"""Hermitian metrics on vector bundles: Chern curvature and positivity.

Index conventions.  ``h[a, b] = H_{a b-bar}`` so that the pairing of two
coefficient vectors is ``H(s, t) = s^T h conj(t)``.  Curvature tensors are
returned lowered, ``T[a, b, i, j] = Theta_{a b-bar i j-bar}``, computed as

    Theta_{i j-bar} = -d_i dbar_j h + (d_i h) h^{-1} (dbar_j h)

for every base pair ``(i, j)``.  The Chern connection on holomorphic
coefficient vectors is ``D_i s = d_i s + A_i s`` with ``A_i = (d_i h h^{-1})^T``;
``connection_coeffs`` returns ``Gamma[a, b, i] = (d_i h h^{-1})[a, b]`` and
``A_i`` is its transpose in the bundle indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateMetricError, DomainError, InputError
from .scene import Scene, eval_matrix
from .tensor import (
    DEFAULT_TOL,
    CurvatureTensor,
    Verdict,
    classify,
    matrix_verdict,
    nakano_flatten,
)
from .wirtinger import jet2

GRIFFITHS_RESTARTS = 20


@dataclass(frozen=True)
class HermitianField:
    """A matrix-valued function ``z -> H(z)`` on a base chart.

    ``func`` maps an array of shape ``batch + (n,)`` to ``batch + (R, R)``.
    """

    func: Callable
    n: int
    rank: int
    label: str = ""

    @classmethod
    def from_scene(cls, scene: Scene) -> "HermitianField":
        if scene.metric is None:
            raise InputError("scene has no Hermitian metric")
        metric, n = scene.metric, scene.n
        return cls(lambda z: eval_matrix(metric, z, n), n, scene.rank, scene.name)

    @classmethod
    def constant(cls, h, n: int = 1) -> "HermitianField":
        h = np.asarray(h, dtype=complex)
        return cls(lambda z: np.broadcast_to(h, np.shape(z)[:-1] + h.shape).copy(), n, h.shape[0], "constant")

    def __call__(self, z) -> np.ndarray:
        return np.asarray(self.func(np.asarray(z, dtype=complex)), dtype=complex)

    def as_vars(self) -> Callable:
        """Adapter for :func:`~vbmetric.wirtinger.jet2`."""
        return lambda v: self(np.stack(v, axis=-1))

    def at(self, z) -> np.ndarray:
        """Metric at a single point, validated positive-definite."""
        h = self(np.asarray(z, dtype=complex).reshape(self.n))
        check_positive_definite(h, z)
        return h


def check_positive_definite(h, z=None) -> None:
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h)):
        raise DegenerateMetricError(f"metric has non-finite entries at z={_pt(z)}")
    hh = 0.5 * (h + h.conj().T)
    vals = np.linalg.eigvalsh(hh)
    if vals[0] <= 1e-14 * max(abs(vals[-1]), 1e-300):
        raise DegenerateMetricError(f"metric is not positive-definite at z={_pt(z)} (min eigenvalue {vals[0]:.3e})")


def _pt(z):
    return None if z is None else np.asarray(z).tolist()


def _as_field(H) -> HermitianField:
    if isinstance(H, HermitianField):
        return H
    if isinstance(H, Scene):
        return HermitianField.from_scene(H)
    raise InputError(f"expected a HermitianField or Scene, got {type(H).__name__}")


def dual_field(H) -> HermitianField:
    """Metric on the dual bundle: ``(H^{-1})^T`` in the dual frame."""
    H = _as_field(H)
    return HermitianField(lambda z: np.swapaxes(np.linalg.inv(H(z)), -1, -2), H.n, H.rank, f"dual({H.label})")


def twist_with_det(H) -> HermitianField:
    """Metric ``H * det H`` on ``E (x) det E``."""
    H = _as_field(H)

    def f(z):
        m = H(z)
        return m * np.linalg.det(m)[..., None, None]

    return HermitianField(f, H.n, H.rank, f"twist({H.label})")


# ---------------------------------------------------------------------- curvature


def chern_curvature(H, z, h: Optional[float] = None) -> CurvatureTensor:
    """Lowered Chern curvature tensor at ``z``.

    Parameters
    ----------
    H : HermitianField or Scene
    z : array_like, shape (n,)
    h : float, optional
        Finite-difference step (default from :func:`~vbmetric.wirtinger.default_step`).

    Returns
    -------
    CurvatureTensor
        Hermitian part of the computed tensor; the raw pair-symmetry defect is
        kept in ``meta["pair_defect"]`` and the Richardson estimate in
        ``est_error``.
    """
    H = _as_field(H)
    z = np.asarray(z, dtype=complex).reshape(H.n)
    j = jet2(H.as_vars(), z, h=h)
    hz = j.value
    check_positive_definite(hz, z)
    hinv = np.linalg.inv(hz)
    # j.d[i] = d_i h, j.dbar[j] = dbar_j h, j.dd[i, j] = d_i dbar_j h
    corr = np.einsum("iab,bc,jcd->adij", j.d, hinv, j.dbar)
    theta = -np.transpose(j.dd, (2, 3, 0, 1)) + corr
    T = CurvatureTensor(theta, lowered=True, est_error=float(j.est_error) * (1.0 + float(np.max(np.abs(hinv)))))
    defect = T.pair_symmetry_defect()
    out = T.hermitian_part()
    out.meta.update({"pair_defect": defect, "metric": hz, "z": z})
    return out


@dataclass(frozen=True)
class ConnectionCoeffs:
    """``gamma[a, b, i] = sum_c (d_i H_{a c-bar}) H^{c-bar b}`` at ``z``."""

    gamma: np.ndarray
    z: np.ndarray
    est_error: float = 0.0

    def acting(self, i: int) -> np.ndarray:
        """Matrix ``A_i`` with ``D_i s = d_i s + A_i s`` (metric compatible)."""
        return self.gamma[:, :, i].T


def connection_coeffs(H, z, h: Optional[float] = None) -> ConnectionCoeffs:
    H = _as_field(H)
    z = np.asarray(z, dtype=complex).reshape(H.n)
    j = jet2(H.as_vars(), z, h=h)
    check_positive_definite(j.value, z)
    hinv = np.linalg.inv(j.value)
    g = np.einsum("iac,cb->abi", j.d, hinv)
    return ConnectionCoeffs(g, z, float(j.est_error) * float(np.max(np.abs(hinv))))


@dataclass(frozen=True)
class PolySection:
    """Degree-one holomorphic section ``s(z) = v + sum_k (z_k - z0_k) L[k]``."""

    v: np.ndarray
    L: np.ndarray
    z0: np.ndarray

    def __call__(self, z) -> np.ndarray:
        dz = np.asarray(z, dtype=complex) - self.z0
        return self.v + np.einsum("...k,ka->...a", dz, self.L)


def normal_frame(H, z0, directions: Optional[Sequence] = None, h: Optional[float] = None) -> list:
    """Holomorphic sections with vanishing covariant derivative at ``z0``.

    ``directions`` are the values ``s(z0)`` (default: the unit vectors of the
    frame, one section per bundle index).
    """
    H = _as_field(H)
    z0 = np.asarray(z0, dtype=complex).reshape(H.n)
    conn = connection_coeffs(H, z0, h=h)
    dirs = np.eye(H.rank, dtype=complex) if directions is None else np.atleast_2d(np.asarray(directions, dtype=complex))
    out = []
    for v in dirs:
        L = np.stack([-conn.acting(k) @ v for k in range(H.n)])
        out.append(PolySection(v.copy(), L, z0))
    return out


def frame_residual(H, section: PolySection, h: Optional[float] = None) -> float:
    """max_k,b |d_k H(s, e_b)| at the base point (zero iff ``D s = 0`` there)."""
    H = _as_field(H)

    def pair(v):
        z = np.stack(v, axis=-1)
        return np.einsum("...a,...ab->...b", section(z), H(z))

    j = jet2(pair, section.z0, h=h)
    return float(np.max(np.abs(j.d)))


# ----------------------------------------------------------------------- verdicts


def _min_biquadratic(T: np.ndarray, rng: np.random.Generator, restarts: int, max_iter: int = 500):
    R, n = T.shape[0], T.shape[2]
    starts = [np.eye(R, dtype=complex)[a] for a in range(R)]
    for _ in range(restarts):
        s = rng.normal(size=R) + 1j * rng.normal(size=R)
        starts.append(s / np.linalg.norm(s))
    best = (np.inf, None, None)
    for s in starts:
        val_prev = np.inf
        v = None
        for _ in range(max_iter):
            A = np.einsum("abij,a,b->ij", T, s, s.conj())
            A = 0.5 * (A + A.conj().T)
            w, U = np.linalg.eigh(A)
            v = U[:, 0].conj()
            B = np.einsum("abij,i,j->ab", T, v, v.conj())
            B = 0.5 * (B + B.conj().T)
            w2, U2 = np.linalg.eigh(B)
            s = U2[:, 0].conj()
            val = float(w2[0])
            if abs(val_prev - val) <= 1e-15 * max(1.0, abs(val)):
                break
            val_prev = val
        if val < best[0]:
            best = (val, s, v)
    return best


def griffiths_verdict(T: CurvatureTensor, tol: float = DEFAULT_TOL, restarts: int = GRIFFITHS_RESTARTS, seed: int = 0) -> Verdict:
    """Extremes of ``sum T s_a conj(s_b) v_i conj(v_j)`` over unit ``s``, ``v``.

    Alternating eigen-iteration from the frame basis plus ``restarts`` seeded
    random starts, for both the minimum and the maximum.  The tensor is scaled
    by its largest entry first.  The verdict is marked heuristic.
    """
    if restarts < 0:
        raise InputError("restarts must be non-negative")
    data = np.asarray(T.data, dtype=complex)
    scale = float(np.max(np.abs(data), initial=0.0)) or 1.0
    data = data / scale
    rng = np.random.default_rng(seed)
    lo, s_lo, v_lo = _min_biquadratic(data, rng, restarts)
    hi_neg, s_hi, v_hi = _min_biquadratic(-data, rng, restarts)
    return classify(
        [lo, -hi_neg],
        tol,
        witness_min=np.concatenate([s_lo, v_lo]),
        witness_max=np.concatenate([s_hi, v_hi]),
        scale=scale,
        heuristic=True,
        restarts=restarts + T.rank,
        note="witness = (s, v) concatenated",
    )


def nakano_verdict(T: CurvatureTensor, H_at_z, tol: float = DEFAULT_TOL) -> Verdict:
    """Exact eigen-classification of the flattened Nakano form."""
    return matrix_verdict(nakano_flatten(T, H_at_z), tol)


# --------------------------------------------------------------- pairing checks


def _section_callable(u, R: int, n: int) -> Callable:
    if callable(u):
        return u
    if isinstance(u, (list, tuple)) and u and all(isinstance(x, str) for x in u):
        from .dsl import Field

        fields = [Field.parse(x, n, R - 1) for x in u]
        return lambda z: np.stack(
            [np.broadcast_to(np.asarray(f(z=[z[..., k] for k in range(n)]), dtype=complex), z.shape[:-1]) for f in fields],
            axis=-1,
        )
    vec = np.asarray(u, dtype=complex).reshape(R)
    return lambda z: np.broadcast_to(vec, np.shape(z)[:-1] + (R,))


def log_pairing_hessian(H, u, z, h: Optional[float] = None) -> np.ndarray:
    """``n x n`` matrix ``d_i dbar_j log H(u, u)`` at ``z``.

    ``u`` is a constant coefficient vector, a callable ``z -> (..., R)``, or
    a list of field-language strings (one per component).
    """
    H = _as_field(H)
    sec = _section_callable(u, H.rank, H.n)

    def f(v):
        zz = np.stack(v, axis=-1)
        s = sec(zz)
        p = np.einsum("...a,...ab,...b->...", s, H(zz), s.conj()).real
        if np.any(p <= 0):
            raise DomainError("pairing H(u, u) vanishes", "H(u,u)", None)
        return np.log(p)

    j = jet2(f, np.asarray(z, dtype=complex).reshape(H.n), h=h)
    return 0.5 * (j.dd + j.dd.conj().T)


def pairing_hessian_check(H, z0, h: Optional[float] = None, tol: float = DEFAULT_TOL) -> dict:
    """Compare ``d_i dbar_j H(s^k, s^l)`` with the curvature contraction.

    The sections are the normal frame at ``z0``; at ``z0`` the mixed Hessian
    equals ``-Theta_{k l-bar i j-bar}``.  Also reports the Nakano verdict read
    off from the pairing Hessian.
    """
    H = _as_field(H)
    z0 = np.asarray(z0, dtype=complex).reshape(H.n)
    frame = normal_frame(H, z0, h=h)

    def pairings(v):
        zz = np.stack(v, axis=-1)
        S = np.stack([s(zz) for s in frame], axis=-2)  # (..., K, R)
        return np.einsum("...ka,...ab,...lb->...kl", S, H(zz), S.conj())

    j = jet2(pairings, z0, h=h)
    hess = np.transpose(j.dd, (2, 3, 0, 1))  # [k, l, i, j]
    T = chern_curvature(H, z0, h=h)
    contraction = -T.data
    dev = float(np.max(np.abs(hess - contraction)))
    hess_tensor = CurvatureTensor(-hess).hermitian_part()
    hz = T.meta["metric"]
    return {
        "z": z0,
        "max_deviation": dev,
        "relative_deviation": dev / T.scale if T.scale > 0 else dev,
        "frame_residual": max(frame_residual(H, s, h=h) for s in frame),
        "hessian_est_error": float(j.est_error),
        "curvature_est_error": T.est_error,
        "nakano_from_pairing": nakano_verdict(hess_tensor, hz, tol).cls,
        "nakano_from_curvature": nakano_verdict(T, hz, tol).cls,
    }


# ------------------------------------------------------------- determinant, twist


def det_curvature(H, z, h: Optional[float] = None) -> np.ndarray:
    """``-d_i dbar_j log det H`` at ``z`` (``n x n``)."""
    H = _as_field(H)

    def f(v):
        d = np.linalg.det(H(np.stack(v, axis=-1))).real
        if np.any(d <= 0):
            raise DomainError("det H is not positive", "det H", None)
        return np.log(d)

    j = jet2(f, np.asarray(z, dtype=complex).reshape(H.n), h=h)
    m = -j.dd
    return 0.5 * (m + m.conj().T)


def trace_curvature(T: CurvatureTensor, h) -> np.ndarray:
    """Trace of the endomorphism curvature, ``sum_a Theta^a_{a i j-bar}``."""
    E = T.endomorphism(h).data
    return np.einsum("aaij->ij", E)


def demailly_skoda_check(H, samples, tol: float = DEFAULT_TOL, seed: int = 0) -> dict:
    """Nakano verdicts of ``E (x) det E`` at samples where ``E`` is Griffiths-positive.

    If the Griffiths precondition fails at any sample, the check is skipped and
    the offending samples are listed.  The maximum of ``det H`` over the
    samples is recorded together with a growth indicator.
    """
    H = _as_field(H)
    tw = twist_with_det(H)
    pts = np.asarray(samples, dtype=complex).reshape(-1, H.n)
    pre = []
    dets = []
    for z in pts:
        T = chern_curvature(H, z)
        g = griffiths_verdict(T, tol, seed=seed)
        pre.append(g)
        dets.append(float(np.linalg.det(T.meta["metric"]).real))
    failed = [i for i, g in enumerate(pre) if not g.positive]
    order = np.argsort(np.max(np.abs(pts), axis=1), kind="stable")
    half = len(order) // 2
    growth = (
        max(dets[i] for i in order[half:]) / max(max(dets[i] for i in order[:half]), 1e-300) if half >= 1 else 1.0
    )
    report = {
        "samples": len(pts),
        "max_det": max(dets) if dets else None,
        "det_growth_outer_over_inner": growth,
        "det_growth_flag": bool(growth > 1e3),
        "det_note": "det H <= C is only sampled; growth between inner and outer samples is reported, not certified",
    }
    if failed:
        report.update(
            status="skipped",
            note="Griffiths precondition fails",
            precondition_failures=[{"z": pts[i], "griffiths": pre[i].cls} for i in failed],
        )
        return report
    records = []
    worst = np.inf
    for z in pts:
        T2 = chern_curvature(tw, z)
        v = nakano_verdict(T2, T2.meta["metric"], tol)
        worst = min(worst, v.min_value)
        records.append({"z": z, "nakano": v.cls, "min_eigenvalue": v.min_value})
    failures = [rec for rec in records if rec["min_eigenvalue"] < -tol]
    report.update(
        status="pass" if not failures else "fail",
        min_eigenvalue=worst,
        failures=failures,
        records=records,
    )
    return report
