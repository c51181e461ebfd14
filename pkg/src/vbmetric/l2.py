"""L^2 metrics obtained by fiber integration, and the identities around them.

All fiber integrals use the unit-mass measure unless ``normalized=False``
(see :mod:`vbmetric.quadrature`).  Under unit mass the induced weight of a
metric ``H`` gives back ``L^2 = H / (r + 1)``; the factor ``1 / (r + 1)`` is
the Fubini-Study second moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError
from .finsler import ChartWeight, _hessians, _split, induced_weight, kobayashi_tensor, weight_from_field
from .hermitian import HermitianField, _as_field, chern_curvature, dual_field
from .jet import jexp
from .quadrature import (
    FiberGrid,
    build_grid,
    density_factor,
    fiber_densities,
    fiber_volume,
    fs_moment_exact,
    integrate_fiber,
    raw_fs_volume,
)
from .tensor import CurvatureTensor
from .wirtinger import jet2


# --------------------------------------------------------------------- sections


@dataclass(frozen=True)
class SectionXi:
    """Fiber function of a section ``s = (s_0..s_r)`` in chart ``A``:
    ``xi_A(w) = s_A + sum_{i != A} s_i w_i``."""

    coeffs: np.ndarray
    chart: int = 0

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        s = np.asarray(self.coeffs, dtype=complex)
        rest = [i for i in range(len(s)) if i != self.chart]
        return s[self.chart] + w @ s[rest]

    def in_chart(self, chart: int) -> "SectionXi":
        return SectionXi(self.coeffs, chart)


def section_xi(coeffs, chart: int, w) -> np.ndarray:
    return SectionXi(np.asarray(coeffs, dtype=complex), chart)(w)


def change_chart(w, A: int, B: int) -> np.ndarray:
    """Affine coordinates of chart ``B`` for a point given in chart ``A``."""
    w = np.asarray(w, dtype=complex)
    r = w.shape[-1]
    Z = np.insert(w, A, 1.0, axis=-1)
    ZB = Z[..., B]
    if np.any(ZB == 0):
        raise InputError(f"point is outside chart {B}")
    return np.delete(Z, B, axis=-1) / ZB[..., None]


def xi_chart_defect(coeffs, weight: ChartWeight, z, w, A: int, B: int) -> float:
    """``| |xi_A|^2 e^{-phi_A} - |xi_B|^2 e^{-phi_B} |`` at one point, relative."""
    wA = np.asarray(w, dtype=complex).reshape(1, -1)
    wB = change_chart(wA, A, B)
    a = abs(section_xi(coeffs, A, wA)[0]) ** 2 * math.exp(-float(weight(z, wA[0], A)))
    b = abs(section_xi(coeffs, B, wB)[0]) ** 2 * math.exp(-float(weight(z, wB[0], B)))
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def four_case(alpha: int, beta: int, chart: int) -> str:
    """Which of the four integrand shapes the entry ``(alpha, beta)`` has in chart ``A``."""
    if alpha == chart and beta == chart:
        return "1"
    if alpha == chart:
        return "conj(w_beta)"
    if beta == chart:
        return "w_alpha"
    return "w_alpha conj(w_beta)"


# ------------------------------------------------------------------- L2 metric


@dataclass(frozen=True)
class L2Matrix:
    matrix: np.ndarray
    z: np.ndarray
    label: str = ""
    resolution: int = 0
    normalized: bool = True
    divergence: Optional[dict] = None


def _l2_integrand(weight: ChartWeight, z):
    zs = [np.asarray(z[k]) for k in range(weight.n)]

    def f(Z, w, B):
        phi = np.real(weight.phi(zs, [w[:, k] for k in range(weight.r)], B))
        e = np.broadcast_to(np.exp(-phi), (len(Z),))
        return Z[:, :, None] * np.conj(Z[:, None, :]) * e[:, None, None]

    return f


def l2_metric(
    weight: ChartWeight,
    z,
    grid: Optional[FiberGrid] = None,
    normalized: bool = True,
    monitor_tail: bool = False,
) -> L2Matrix:
    """``H_{a b} = int xi_a conj(xi_b) e^{-phi} dmu_phi`` for the frame sections.

    In every chart ``B`` the frame section ``e_a`` has ``xi = Z_a`` with
    ``Z_B = 1``, which realizes the four entry shapes of :func:`four_case`.
    With ``monitor_tail`` the value is recomputed at double and quadruple
    resolution and flagged divergent when each doubling grows it by more
    than 10%.
    """
    z = np.asarray(z, dtype=complex).reshape(weight.n)
    grid = build_grid(weight.r, 64 if weight.r <= 1 else 32) if grid is None else grid
    m = integrate_fiber(_l2_integrand(weight, z), weight, z, grid, normalized)
    m = 0.5 * (m + m.conj().T)
    div = None
    if monitor_tail:
        vals = [np.trace(m).real]
        for k in (2, 4):
            g2 = build_grid(weight.r, grid.resolution * k, grid.scheme)
            m2 = integrate_fiber(_l2_integrand(weight, z), weight, z, g2, normalized)
            vals.append(np.trace(m2).real)
        growth = [vals[1] / vals[0] - 1, vals[2] / vals[1] - 1]
        div = {"traces": vals, "growth": growth, "divergent": bool(all(g > 0.10 for g in growth))}
    return L2Matrix(m, z, weight.label, grid.resolution, normalized, div)


def l2_by_cases(weight: ChartWeight, z, grid: FiberGrid, normalized: bool = True) -> np.ndarray:
    """Same matrix assembled entry by entry from the chart-``A`` formulas on a single-chart grid."""
    if grid.scheme != "single":
        raise InputError("the case-by-case assembly needs a single-chart grid")
    A = grid.charts[0].chart
    z = np.asarray(z, dtype=complex).reshape(weight.n)
    zs = [np.asarray(z[k]) for k in range(weight.n)]
    dens = fiber_densities(weight, z, grid, normalized)[0]
    w = grid.charts[0].w
    e = np.exp(-np.real(weight.phi(zs, [w[:, k] for k in range(weight.r)], A)))
    others = [a for a in range(weight.r + 1) if a != A]
    R = weight.r + 1
    out = np.zeros((R, R), dtype=complex)
    for a in range(R):
        for b in range(R):
            case = four_case(a, b, A)
            if case == "1":
                g = np.ones(len(w))
            elif case == "conj(w_beta)":
                g = np.conj(w[:, others.index(b)])
            elif case == "w_alpha":
                g = w[:, others.index(a)]
            else:
                g = w[:, others.index(a)] * np.conj(w[:, others.index(b)])
            out[a, b] = np.sum(dens * g * e)
    return out


def _best_fit(actual: np.ndarray, model: np.ndarray):
    num = np.vdot(model.ravel(), actual.ravel()).real
    den = np.vdot(model.ravel(), model.ravel()).real
    if den == 0:
        return 0.0, float(np.linalg.norm(actual))
    lam = num / den
    norm = float(np.linalg.norm(actual))
    res = float(np.linalg.norm(actual - lam * model)) / norm if norm > 0 else 0.0
    return lam, res


def roundtrip_check(H, z, grid: Optional[FiberGrid] = None, normalized: bool = True) -> dict:
    """Proportionality of ``L^2(induced_weight(H))`` to ``H``.

    Reports the best-fit ``lambda`` with ``L^2 ~ lambda H``, the relative
    residual, the independently integrated fiber volume ``V``, and two
    comparisons: ``lambda`` against ``V`` itself, and against ``V`` times the
    Fubini-Study second moment ``1 / (r + 1)``.
    """
    H = _as_field(H)
    z = np.asarray(z, dtype=complex).reshape(H.n)
    weight = induced_weight(H)
    grid = build_grid(H.rank - 1, 64 if H.rank <= 2 else 32) if grid is None else grid
    L = l2_metric(weight, z, grid, normalized).matrix
    h = H.at(z)
    lam, res = _best_fit(L, h)
    V = fiber_volume(weight, z, grid, normalized)
    m2 = fs_moment_exact(H.rank - 1, (0, 0))
    return {
        "z": z,
        "lambda": lam,
        "residual": res,
        "fiber_volume": V,
        "lambda_vs_volume": abs(lam - V) / V,
        "second_moment": m2,
        "lambda_vs_volume_times_moment": abs(lam - V * m2) / (V * m2),
        "normalized": normalized,
        "convention_constant": 1.0 if normalized else raw_fs_volume(H.rank - 1),
    }


# -------------------------------------------------------------------- KE / isometry


def _fiber_nodes(grid: FiberGrid, max_nodes: int = 400):
    """Evenly thinned nodes of every chart: list of (chart, w)."""
    out = []
    for c in grid.charts:
        keep = np.flatnonzero(c.area > 0)
        step = max(1, len(keep) // max(1, max_nodes // len(grid.charts)))
        out.append((c.chart, c.w[keep[::step]]))
    return out


def _ke_sides(weight: ChartWeight, det_metric, z, grid: FiberGrid):
    z = np.asarray(z, dtype=complex).reshape(weight.n)
    zs = [np.asarray(z[k]) for k in range(weight.n)]
    dm = float(np.real(det_metric(z) if callable(det_metric) else det_metric))
    if not dm > 0:
        raise InputError("determinant factor must be positive")
    lhs, base = [], []
    for B, w in _fiber_nodes(grid):
        if weight.r == 0:
            lhs.append(np.ones(1))
            base.append(np.exp(-np.real(weight.phi(zs, [], B))) * np.ones(1) / dm)
            continue
        from .wirtinger import dual_jet2

        j = dual_jet2(lambda v: weight.phi(zs, v, B), w)
        g = 0.5 * (j.dd + np.conj(np.swapaxes(j.dd, -1, -2)))
        lhs.append(np.real(np.linalg.det(g)))
        phi = np.real(j.value)
        base.append(np.exp(-(weight.r + 1) * phi) / dm)
    return np.concatenate(lhs), np.concatenate(base)


def fit_ke_constant(weight: ChartWeight, det_metric, z, grid: FiberGrid) -> float:
    """Least-squares ``C`` in ``det(fiber Hessian) = C e^{-(r+1) phi} / det``."""
    lhs, base = _ke_sides(weight, det_metric, z, grid)
    return float(np.dot(lhs, base) / np.dot(base, base))


def ke_residual(weight: ChartWeight, det_metric, z, C: float, grid: Optional[FiberGrid] = None) -> float:
    """max over fiber nodes of ``|det W - C e^{-(r+1) phi} / det G|`` relative to the larger side.

    ``det_metric`` is ``det G`` of the metric on the bundle (a number or a
    callable of ``z``); ``W`` is the fiber Hessian of ``phi``.
    """
    grid = build_grid(weight.r, 32) if grid is None else grid
    lhs, base = _ke_sides(weight, det_metric, z, grid)
    rhs = C * base
    return float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.abs(rhs))))


def reference_ke_constant(r: int) -> float:
    """Claimed constant ``((r+1)!)^{-r}``; compared against, never asserted."""
    return 1.0 / math.factorial(r + 1) ** r


def normalization_constant_estimate(r: int, grid: Optional[FiberGrid] = None, base_points=None, H=None) -> dict:
    """Fit the KE constant for an induced weight against ``det L^2``.

    Uses the identity metric unless ``H`` is given; ``det L^2`` is integrated
    at each base point.  Reports the fitted values, their coefficient of
    variation, the residual, the reference value ``((r+1)!)^{-r}`` and the
    ratio fitted / reference.
    """
    if r not in (1, 2):
        raise InputError("normalization constant is estimated for r = 1, 2")
    grid = build_grid(r, 64 if r == 1 else 32) if grid is None else grid
    H = HermitianField.constant(np.eye(r + 1)) if H is None else _as_field(H)
    pts = (
        np.asarray([[0.05 * k + 0.03j * k] for k in range(10)], dtype=complex)
        if base_points is None
        else np.asarray(base_points, dtype=complex).reshape(-1, H.n)
    )
    weight = induced_weight(H)
    fits, res = [], []
    for z in pts:
        detL = float(np.real(np.linalg.det(l2_metric(weight, z, grid).matrix)))
        C = fit_ke_constant(weight, detL, z, grid)
        fits.append(C)
        res.append(ke_residual(weight, detL, z, C, grid))
    fits = np.asarray(fits)
    mean = float(fits.mean())
    ref = reference_ke_constant(r)
    return {
        "r": r,
        "fitted_C": mean,
        "fitted_per_point": fits,
        "coefficient_of_variation": float(fits.std() / abs(mean)),
        "max_ke_residual": float(max(res)),
        "reference_C": ref,
        "ratio_fitted_to_reference": mean / ref,
        "unit_mass_prediction": float((r + 1) ** -(r + 1)),
        "det_convention": "det of the complex fiber Hessian; det L^2 under the unit-mass measure",
    }


# ----------------------------------------------------------------------- duality


def l2_field(H, grid: Optional[FiberGrid] = None, normalized: bool = True) -> HermitianField:
    """The tabulated field ``z -> L^2(induced_weight(H))(z)``."""
    H = _as_field(H)
    weight = induced_weight(H)
    grid = build_grid(H.rank - 1, 64 if H.rank <= 2 else 32) if grid is None else grid

    def f(z):
        z = np.asarray(z, dtype=complex)
        flat = z.reshape(-1, H.n)
        out = np.stack([l2_metric(weight, p, grid, normalized).matrix for p in flat])
        return out.reshape(z.shape[:-1] + (H.rank, H.rank))

    return HermitianField(f, H.n, H.rank, f"L2({H.label})")


def duality_check(H, z, grid: Optional[FiberGrid] = None, normalized: bool = True) -> dict:
    """Curvature of the L^2 metric against the one predicted from the Kobayashi tensor.

    (a) Chern curvature of the tabulated ``L^2`` field (finite differences of
    quadrature values).  (b) The Kobayashi tensor ``K`` of the dual Finsler
    form, turned into the endomorphism ``-K_end^T`` and lowered with
    ``L^2(z)``.  Reports the best-fit scalar and the relative deviation.
    """
    H = _as_field(H)
    z = np.asarray(z, dtype=complex).reshape(H.n)
    L2 = l2_field(H, grid, normalized)
    Ta = chern_curvature(L2, z)
    weight = induced_weight(H)
    K = kobayashi_tensor(weight, z, np.eye(H.rank)[0])
    Kend = K.endomorphism(dual_field(H).at(z)).data
    pred_end = CurvatureTensor(-np.transpose(Kend, (1, 0, 2, 3)), lowered=False)
    Tb = pred_end.lower(Ta.meta["metric"])
    na, nb = float(np.linalg.norm(Ta.data)), float(np.linalg.norm(Tb.data))
    if na < 1e-10 and nb < 1e-10:
        return {"z": z, "constant": None, "deviation": 0.0, "note": "both sides vanish", "norm_l2_side": na, "norm_kobayashi_side": nb}
    lam, dev = _best_fit(Ta.data, Tb.data)
    return {
        "z": z,
        "constant": lam,
        "deviation": dev,
        "norm_l2_side": na,
        "norm_kobayashi_side": nb,
        "l2_curvature_est_error": Ta.est_error,
    }


# ------------------------------------------------------------------ pushforward


def geodesic_curvature_batch(weight: ChartWeight, z, w) -> np.ndarray:
    """Schur complements at many fiber points ``w`` (shape ``(M, r)``)."""
    n = weight.n
    M = len(w)
    dd, _ = _hessians(weight, np.broadcast_to(np.asarray(z, dtype=complex).reshape(1, n), (M, n)), w)
    B, C, D = _split(dd, n)
    if weight.r == 0:
        return B
    return B - C @ np.linalg.solve(D, np.conj(np.swapaxes(C, -1, -2)))


def det_pushforward_check(H, z, grid: Optional[FiberGrid] = None, normalized: bool = True) -> dict:
    """Fiber integral of the geodesic curvature against the curvature of ``det L^2``.

    Expected relation under unit mass: ``int c dmu = R_det / (r + 1)``.  The
    best-fit constant ``kappa`` with ``int c dmu ~ kappa R_det`` is reported
    together with the deviation from the expected value.
    """
    from .hermitian import det_curvature

    H = _as_field(H)
    z = np.asarray(z, dtype=complex).reshape(H.n)
    r = H.rank - 1
    weight = induced_weight(H)
    grid = build_grid(r, 64 if r <= 1 else 32) if grid is None else grid
    dens = fiber_densities(weight, z, grid, normalized)
    total = np.zeros((H.n, H.n), dtype=complex)
    for c, d in zip(grid.charts, dens):
        keep = d != 0
        if not np.any(keep):
            continue
        cw = geodesic_curvature_batch(weight.in_chart(c.chart), z, c.w[keep])
        total += np.tensordot(d[keep], cw, axes=(0, 0))
    Rdet = det_curvature(l2_field(H, grid, normalized), z)
    expected_factor = (1.0 if normalized else raw_fs_volume(r)) / (r + 1)
    scale = float(np.max(np.abs(Rdet)))
    if scale < 1e-10 and float(np.max(np.abs(total))) < 1e-10:
        return {"z": z, "deviation": 0.0, "kappa": None, "note": "both sides vanish", "expected_kappa": expected_factor}
    kappa, _ = _best_fit(total, Rdet)
    dev = float(np.max(np.abs(total - expected_factor * Rdet))) / max(scale * expected_factor, 1e-300)
    return {
        "z": z,
        "fiber_integral": total,
        "det_curvature_l2": Rdet,
        "kappa": kappa,
        "expected_kappa": expected_factor,
        "deviation": dev,
        "normalized": normalized,
    }
