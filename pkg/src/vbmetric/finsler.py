"""Finsler metrics and chart weights on the projectivized dual bundle.

A :class:`ChartWeight` is stored through its homogeneous lift
``G(z, Z)`` (degree ``(1, 1)`` in ``Z``), from which the weight in any fiber
chart ``B`` is ``phi_B(z, w) = log G(z, Z)`` with ``Z_B = 1`` and the remaining
entries of ``Z`` equal to ``w`` in increasing index order.

Fiber derivatives in ``Z`` or ``w`` use forward-mode jets; base derivatives use
central differences unless the weight is fully jet-compatible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .dsl import Field
from .errors import CapabilityError, DegenerateMetricError, DomainError, InputError, VBMetricError
from .hermitian import HermitianField, _as_field, chern_curvature, dual_field, griffiths_verdict
from .jet import Jet, jconj, jexp, jlog, value_of
from .scene import Scene
from .tensor import (
    DEFAULT_TOL,
    SEMI_POSITIVE,
    STRICTLY_POSITIVE,
    CurvatureTensor,
    Verdict,
    matrix_verdict,
)
from .wirtinger import dual_jet2, jet2

TWO_PI = 2.0 * math.pi
# coarse candidate step for base differences of the fiber Hessian of G
COARSE_STEP = 2.0**-10


def homogeneous(ws, chart: int) -> list:
    """Homogeneous coordinates with ``Z_chart = 1`` and the rest from ``ws``."""
    ws = list(ws)
    shape = np.shape(value_of(ws[0])) if ws else ()
    one = np.ones(shape, dtype=complex)
    return ws[:chart] + [one] + ws[chart:]


@dataclass(frozen=True)
class ChartWeight:
    """Weight ``phi`` of a metric on the tautological bundle.

    Parameters
    ----------
    n, r : int
        Base dimension and fiber dimension (rank ``r + 1``).
    chart : int
        Default fiber chart ``A``.
    lift : callable
        ``lift(zs, Zs) -> G`` with lists of ``n`` and ``r + 1`` coordinates.
    base_jets : bool
        Whether ``lift`` accepts jets in the base coordinates.
    quadratic : ndarray-valued callable, optional
        ``z -> M(z)`` when ``G = sum M_ab Z_a conj(Z_b)`` (fiber-quadratic).
    """

    n: int
    r: int
    chart: int
    lift: Callable
    base_jets: bool = True
    label: str = ""
    quadratic: Optional[Callable] = None
    source: Optional[str] = None
    home_chart: Optional[int] = None

    def phi(self, zs, ws, chart: Optional[int] = None):
        B = self.chart if chart is None else chart
        with np.errstate(all="ignore"):
            G = self.lift(list(zs), homogeneous(ws, B))
        gv = np.asarray(value_of(G))
        if np.any(~np.isfinite(gv)) or np.any(np.real(gv) <= 0):
            raise DomainError("Finsler function is not positive", self.label or "G", None)
        return jlog(G)

    def in_chart(self, chart: int) -> "ChartWeight":
        if not 0 <= chart <= self.r:
            raise InputError(f"chart {chart} outside 0..{self.r}")
        return replace(self, chart=chart)

    def as_vars(self, chart: Optional[int] = None) -> Callable:
        """``f(v)`` with ``v = (z_1..z_n, w_1..w_r)`` for the differentiation engines."""
        n = self.n
        return lambda v: self.phi(v[:n], v[n:], chart)

    def __call__(self, z, w, chart: Optional[int] = None):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        val = self.phi([z[..., k] for k in range(self.n)], [w[..., k] for k in range(self.r)], chart)
        return np.real(value_of(val))

    def chart_mask(self, w, chart: int) -> np.ndarray:
        """Points of chart ``chart`` where the defining chart coordinate is non-zero."""
        w = np.asarray(w, dtype=complex)
        A = self.home_chart
        if A is None or chart == A:
            return np.ones(w.shape[:-1], dtype=bool)
        idx = A if A < chart else A - 1
        return w[..., idx] != 0

    def G(self, z, Z):
        z = np.asarray(z, dtype=complex)
        Z = np.asarray(Z, dtype=complex)
        return np.real(value_of(self.lift([z[..., k] for k in range(self.n)], [Z[..., k] for k in range(self.r + 1)])))

    def shifted(self, c: float) -> "ChartWeight":
        """Weight ``phi + c``."""
        e = math.exp(c)
        lift = self.lift
        quad = self.quadratic
        return replace(
            self,
            lift=lambda zs, Zs: lift(zs, Zs) * e,
            label=f"{self.label}+{c!r}",
            quadratic=None if quad is None else HermitianField(lambda z: quad(z) * e, quad.n, quad.rank, quad.label),
        )


def weight_from_field(field_: Field, n: int, r: int, chart: int = 0, label: str = "") -> ChartWeight:
    """Chart weight given by a field in ``(z, w)`` on chart ``chart``."""

    def lift(zs, Zs):
        ZA = Zs[chart]
        ws = [Zs[a] / ZA for a in range(r + 1) if a != chart]
        return ZA * jconj(ZA) * jexp(field_(z=zs, w=ws))

    return ChartWeight(n, r, chart, lift, True, label or str(field_), source=str(field_), home_chart=chart)


def finsler_from_field(field_: Field, n: int, r: int, chart: int = 0, label: str = "") -> ChartWeight:
    """Chart weight whose homogeneous lift ``G(z, Z)`` is given as a field."""
    return ChartWeight(n, r, chart, lambda zs, Zs: field_(z=zs, Z=Zs), True, label or str(field_), source=str(field_))


def quadratic_finsler(M, n: Optional[int] = None, chart: int = 0, label: str = "") -> ChartWeight:
    """Fiber-quadratic lift ``G(z, Z) = sum_ab M_ab(z) Z_a conj(Z_b)``."""
    M = _as_field(M)

    def lift(zs, Zs):
        if any(isinstance(x, Jet) for x in zs):
            raise CapabilityError("matrix-derived weights are differentiated in the base by finite differences")
        z = np.stack(np.broadcast_arrays(*[np.asarray(x, dtype=complex) for x in zs]), axis=-1)
        m = M(z)
        total = 0.0
        R = M.rank
        for a in range(R):
            for b in range(R):
                total = total + m[..., a, b] * Zs[a] * jconj(Zs[b])
        return total

    return ChartWeight(M.n, M.rank - 1, chart, lift, False, label or M.label, quadratic=M)


def induced_weight(H, chart: int = 0) -> ChartWeight:
    """Weight induced by ``H`` through the dual metric ``H* = (H^{-1})^T``.

    ``phi_A(z, w) = log(Z^* H^{-1} Z)`` with ``Z_A = 1`` and the other
    entries equal to ``w``.
    """
    H = _as_field(H)
    w = quadratic_finsler(dual_field(H), chart=chart, label=f"induced({H.label})")
    return w


def scene_weight(scene: Scene, chart: Optional[int] = None) -> ChartWeight:
    """The scene's explicit weight if present, otherwise the induced one."""
    A = scene.chart if chart is None else chart
    if scene.weight is not None:
        w = weight_from_field(scene.weight, scene.n, scene.r, scene.chart, label=f"{scene.name}:weight")
        return w.in_chart(A)
    return induced_weight(HermitianField.from_scene(scene), A)


# ------------------------------------------------------------------------ forms


@dataclass(frozen=True)
class FiberForm:
    """Complex Hessian of ``phi`` in the ``(z, w)`` coordinates at a point."""

    full: np.ndarray
    n: int
    r: int
    est_error: float = 0.0

    @property
    def base(self) -> np.ndarray:
        return self.full[: self.n, : self.n]

    @property
    def mixed(self) -> np.ndarray:
        return self.full[: self.n, self.n :]

    @property
    def fiber(self) -> np.ndarray:
        return self.full[self.n :, self.n :]


def _hessians(weight: ChartWeight, z, w, method: str = "auto", h: Optional[float] = None):
    """Batched Hessians; z, w of shape (N, n), (N, r). Returns (dd, est_error)."""
    pts = np.concatenate([np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)], axis=-1)
    f = weight.as_vars()
    if method == "dual" or (method == "auto" and weight.base_jets):
        j = dual_jet2(f, pts)
    else:
        j = jet2(f, pts, h=h)
    dd = j.dd
    dd = 0.5 * (dd + np.conj(np.swapaxes(dd, -1, -2)))
    return dd, j.est_error


def fiber_form(weight: ChartWeight, z, w, method: str = "auto", h: Optional[float] = None) -> FiberForm:
    """All four blocks of the complex Hessian of ``phi`` at ``(z, w)``.

    ``h`` overrides the finite-difference step when one is used.
    """
    z = np.asarray(z, dtype=complex).reshape(1, weight.n)
    w = np.asarray(w, dtype=complex).reshape(1, weight.r)
    dd, err = _hessians(weight, z, w, method, h)
    return FiberForm(dd[0], weight.n, weight.r, float(np.asarray(err).ravel()[0]))


def fiber_hessian_G(weight: ChartWeight, zs, Z) -> np.ndarray:
    """``d^2 G / dZ_a dZbar_b`` at ``(z, Z)``; ``zs`` may be a list of batch arrays."""
    R = weight.r + 1
    shape = np.broadcast_shapes(*[np.shape(x) for x in zs]) if zs else ()
    Zs = [Jet.seed(np.broadcast_to(np.asarray(Z[a], dtype=complex), shape), a, 2 * R) for a in range(R)]
    G = weight.lift(list(zs), Zs)
    if not isinstance(G, Jet):
        return np.zeros(shape + (R, R), dtype=complex)
    _, _, dd = G.wirtinger(R)
    return np.broadcast_to(dd, shape + (R, R))


def kobayashi_tensor(weight: ChartWeight, z, Z, h: Optional[float] = None) -> CurvatureTensor:
    """``K = -G_{a b i j} + G^{c d} G_{a d i} G_{c b j}`` at ``(z, Z)``.

    The fiber Hessian ``G_{a b}`` is exact (jets in ``Z``); its base
    derivatives are central differences with a coarse default step, since a
    fourth-order quantity at the usual step is dominated by rounding.
    """
    z = np.asarray(z, dtype=complex).reshape(weight.n)
    Z = np.asarray(Z, dtype=complex).reshape(weight.r + 1)
    if np.all(Z == 0):
        raise InputError("Z must be non-zero")
    if h is None:
        h = COARSE_STEP * max(1.0, float(np.max(np.abs(z), initial=0.0)))
    j = jet2(lambda v: fiber_hessian_G(weight, v, Z), z, h=h)
    g = j.value
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError(f"fiber Hessian of G is singular at z={z.tolist()}, Z={Z.tolist()}") from exc
    corr = np.einsum("iab,bc,jcd->adij", j.d, ginv, j.dbar)
    K = -np.transpose(j.dd, (2, 3, 0, 1)) + corr
    T = CurvatureTensor(K, True, float(j.est_error) * (1.0 + float(np.max(np.abs(ginv)))))
    out = T.hermitian_part()
    out.meta.update({"fiber_hessian": g, "z": z, "Z": Z, "pair_defect": T.pair_symmetry_defect()})
    return out


def _split(F: np.ndarray, n: int):
    return F[..., :n, :n], F[..., :n, n:], F[..., n:, n:]


def geodesic_curvature(weight: ChartWeight, z, w, method: str = "auto", both: bool = False):
    """Schur complement ``B - C D^{-1} C^*`` of the fiber block.

    With ``both=True`` also returns the value recomputed through the
    horizontal lift ``X_i = d/dz_i + sum lambda_{i a} d/dw_a``,
    ``lambda = -C D^{-1}``, as ``X F X^*``.
    """
    F = fiber_form(weight, z, w, method)
    B, C, D = _split(F.full, weight.n)
    _check_fiber_block(D, z, w)
    c = B - C @ np.linalg.solve(D, C.conj().T)
    c = 0.5 * (c + c.conj().T)
    if not both:
        return c
    lam = -np.linalg.solve(D.T, C.T).T
    X = np.concatenate([np.eye(weight.n), lam], axis=1)
    c2 = X @ F.full @ X.conj().T
    return c, 0.5 * (c2 + c2.conj().T)


def _check_fiber_block(D, z, w):
    if D.size == 0:
        return
    vals = np.linalg.eigvalsh(D)
    if vals[0] <= 1e-13 * max(abs(vals[-1]), 1e-300):
        raise DegenerateMetricError(
            f"fiber block is not positive-definite at z={np.asarray(z).tolist()}, w={np.asarray(w).tolist()}"
        )


def decomposition_residual(weight: ChartWeight, z, w, normalized: bool = False, detail: bool = False):
    """Deviation of ``i dd-bar phi`` from ``-Psi + omega_FS`` reassembled.

    ``-Psi`` is built independently from the Kobayashi tensor,
    ``c_{ij} = -K(Z, Z-bar)_{ij} / G``, and placed in the horizontal coframe
    ``(dz, dw + D^{-1} C^* dz)`` next to the fiber block; the result is mapped
    back to ``(dz, dw)`` and compared entrywise with the fiber form.  With
    ``normalized=True`` both sides carry the ``1/(2 pi)`` unit-mass factor.
    """
    n, r = weight.n, weight.r
    z = np.asarray(z, dtype=complex).reshape(n)
    w = np.asarray(w, dtype=complex).reshape(r)
    F = fiber_form(weight, z, w)
    _, C, D = _split(F.full, n)
    _check_fiber_block(D, z, w)
    Z = np.asarray(homogeneous(list(w), weight.chart), dtype=complex)
    K = kobayashi_tensor(weight, z, Z)
    G = float(weight.G(z, Z))
    c_ind = -np.einsum("abij,a,b->ij", K.data, Z, Z.conj()) / G
    P = np.zeros((n + r, n + r), dtype=complex)
    P[:n, :n] = np.eye(n)
    P[n:, n:] = np.eye(r)
    P[n:, :n] = np.linalg.solve(D, C.conj().T) if r else 0
    core = np.zeros_like(P)
    core[:n, :n] = c_ind
    core[n:, n:] = D
    recon = P.conj().T @ core @ P
    scale = 1.0 / TWO_PI if normalized else 1.0
    res = float(np.max(np.abs(recon - F.full))) * scale
    if detail:
        return {
            "residual": res,
            "geodesic_curvature_kobayashi": c_ind * scale,
            "geodesic_curvature_schur": geodesic_curvature(weight, z, w) * scale,
            "fiber_form": F.full * scale,
            "normalized": normalized,
        }
    return res


# --------------------------------------------------------------- verification


def _random_points(rng, count, dim, radius):
    rho = radius * np.sqrt(rng.uniform(0, 1, (count, dim)))
    return rho * np.exp(1j * rng.uniform(0, 2 * math.pi, (count, dim)))


def validate_finsler(weight: ChartWeight, z_samples=None, Z_samples=None, seed: int = 0, tol: float = 1e-10) -> dict:
    """Sampled check of positivity, homogeneity and strong pseudo-convexity of ``G``."""
    rng = np.random.default_rng(seed)
    n, R = weight.n, weight.r + 1
    zs = _random_points(rng, 4, n, 0.5) if z_samples is None else np.asarray(z_samples, dtype=complex).reshape(-1, n)
    Zs = _random_points(rng, 8, R, 1.0) if Z_samples is None else np.asarray(Z_samples, dtype=complex).reshape(-1, R)
    Zs = np.concatenate([np.eye(R, dtype=complex), Zs])
    pos_fail, hom_worst, psc_worst, psc_fail = [], 0.0, np.inf, []
    for z in zs:
        for Z in Zs:
            g = float(weight.G(z, Z))
            if not g > 0:
                pos_fail.append({"z": z, "Z": Z, "G": g})
            lam = complex(rng.normal(), rng.normal())
            g2 = float(weight.G(z, lam * Z))
            hom_worst = max(hom_worst, abs(g2 - abs(lam) ** 2 * g) / max(abs(lam) ** 2 * abs(g), 1e-300))
            hess = fiber_hessian_G(weight, [np.asarray(x) for x in z], Z)
            ev = np.linalg.eigvalsh(0.5 * (hess + hess.conj().T))
            rel = ev[0] / max(abs(ev[-1]), 1e-300)
            psc_worst = min(psc_worst, rel)
            if rel <= tol:
                psc_fail.append({"z": z, "Z": Z, "min_eigenvalue": float(ev[0])})
    return {
        "positivity": {"pass": not pos_fail, "witnesses": pos_fail[:5]},
        "homogeneity": {"pass": hom_worst < 1e-12, "max_relative_error": hom_worst},
        "pseudo_convexity": {"pass": not psc_fail, "min_relative_eigenvalue": float(psc_worst), "witnesses": psc_fail[:5]},
        "samples": len(zs) * len(Zs),
        "all_pass": not pos_fail and hom_worst < 1e-12 and not psc_fail,
    }


def fiber_sample_points(r: int, per_dim: int = 21) -> np.ndarray:
    """Deterministic stratified points of the unit polydisc in ``C^r``.

    ``per_dim = 1 + 4 k``: the origin plus ``k`` radii times four angles.
    """
    k = max((per_dim - 1) // 4, 1)
    radii = (np.arange(k) + 1.0) / k
    pts1 = [0j]
    for i, rho in enumerate(radii):
        for j in range(4):
            pts1.append(rho * np.exp(1j * (math.pi / 2 * j + 0.3 + 0.17 * i)))
    pts1 = np.asarray(pts1)
    if r == 0:
        return np.zeros((1, 0), dtype=complex)
    grids = np.meshgrid(*([pts1] * r), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def hx_membership(weight: ChartWeight, z_samples, per_dim: int = 21, tol: float = DEFAULT_TOL) -> dict:
    """Sampled membership of ``phi`` in ``H(X)`` and ``H_{h0}(X)``.

    ``H(X)``: the fiber block is positive-definite at every fiber sample of
    every chart.  ``H_{h0}(X)``: additionally the full form is semi-positive
    (background ``h0`` is the weight induced by the identity metric, so the
    test applies to the total weight).  Fibers where evaluation fails are
    listed as bad fibers.  ``big_proxy`` is a pointwise strict-positivity
    proxy, not a certificate of bigness.
    """
    zs = np.asarray(z_samples, dtype=complex).reshape(-1, weight.n)
    wpts = fiber_sample_points(weight.r, per_dim)
    fiber_min, full_min = np.inf, np.inf
    bad, records = [], []
    strict_everywhere = True
    for z in zs:
        rec = {"z": z, "fiber_min": np.inf, "full_min": np.inf}
        try:
            for B in range(weight.r + 1):
                wB = weight.in_chart(B)
                pts = wpts[weight.chart_mask(wpts, B)]
                dd, _ = _hessians(wB, np.broadcast_to(z, (len(pts), weight.n)), pts)
                for F in dd:
                    Fs = F / max(float(np.max(np.abs(F))), 1e-300)
                    _, _, D = _split(Fs, weight.n)
                    if D.size:
                        rec["fiber_min"] = min(rec["fiber_min"], float(np.linalg.eigvalsh(D)[0]))
                    ev = np.linalg.eigvalsh(Fs)
                    rec["full_min"] = min(rec["full_min"], float(ev[0]))
        except VBMetricError as exc:
            bad.append({"z": z, "error": str(exc)})
            continue
        fiber_min = min(fiber_min, rec["fiber_min"])
        full_min = min(full_min, rec["full_min"])
        strict_everywhere &= rec["full_min"] > tol
        records.append(rec)
    in_H = bool(records) and fiber_min > tol
    return {
        "in_H": in_H,
        "in_H_h0": in_H and full_min >= -tol,
        "fiber_min_eigenvalue": fiber_min,
        "full_min_eigenvalue": full_min,
        "bad_fibers": bad,
        "fiber_points_per_chart": len(wpts),
        "big_proxy": {
            "value": bool(records) and strict_everywhere,
            "label": "proxy: strictly positive form at all samples (not a bigness certificate)",
        },
        "records": records,
    }


def _group(cls: str) -> str:
    if cls == STRICTLY_POSITIVE:
        return "strict"
    if cls == SEMI_POSITIVE:
        return "semi"
    return "not-positive"


_FLIP = {
    "strictly-positive": "strictly-negative",
    "semi-positive": "semi-negative",
    "indefinite": "indefinite",
    "semi-negative": "semi-positive",
    "strictly-negative": "strictly-positive",
}


def positivity_equivalence_check(H, samples, tol: float = DEFAULT_TOL, per_dim: int = 5, seed: int = 0) -> dict:
    """Compare three positivity notions at each sample.

    (a) Griffiths verdict of the Chern curvature of ``H``; (b) eigen-verdict of
    the full Hessian of the induced weight over fiber samples of every chart;
    (c) Kobayashi verdict of the dual Finsler form, negated.  Agreement is
    checked on the groups strict / semi / not-positive.  A zero form counts as
    semi-positive.
    """
    H = _as_field(H)
    weight = induced_weight(H)
    pts = np.asarray(samples, dtype=complex).reshape(-1, H.n)
    wpts = fiber_sample_points(H.rank - 1, per_dim)
    records = []
    agree_all = True
    for z in pts:
        g = griffiths_verdict(chern_curvature(H, z), tol, seed=seed)
        lo, hi = np.inf, -np.inf
        for B in range(H.rank):
            dd, _ = _hessians(weight.in_chart(B), np.broadcast_to(z, (len(wpts), H.n)), wpts)
            for F in dd:
                v = matrix_verdict(F, tol)
                lo, hi = min(lo, v.min_value), max(hi, v.max_value)
        from .tensor import classify

        fv = classify([lo, hi], tol)
        K = kobayashi_tensor(weight, z, np.eye(H.rank)[0])
        kv = griffiths_verdict(K, tol, seed=seed)
        k_flipped = _FLIP[kv.cls]
        if "zero form" in kv.note:
            k_flipped = SEMI_POSITIVE
        groups = (_group(g.cls), _group(fv.cls), _group(k_flipped))
        ok = len(set(groups)) == 1
        agree_all &= ok
        records.append(
            {
                "z": z,
                "griffiths": g.cls,
                "induced_weight_form": fv.cls,
                "kobayashi_dual": kv.cls,
                "agree": ok,
            }
        )
    return {"agree": agree_all, "records": records}
