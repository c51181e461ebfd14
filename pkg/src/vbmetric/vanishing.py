"""Threshold arithmetic, Lelong numbers and integrability of singular weights.

Lelong numbers follow the convention ``nu(c log|z|^2) = c``, under which
``e^{-t phi}`` with ``phi = c log|z|^2`` is locally integrable on a curve iff
``t c < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .dsl import Field
from .errors import CapabilityError, InputError
from .jet import value_of

MAX_R = 30
ANNULI = 64
MIXED_STEP = 2.0**-8


def symmetric_rank(r: int) -> int:
    """Rank ``C(2r+2, r+2)`` of ``S^{r+2}`` of a rank ``r+1`` space."""
    r = int(r)
    if r < 1:
        raise InputError("r must be at least 1")
    if r > MAX_R:
        raise InputError(f"r must be at most {MAX_R}")
    return math.comb(2 * r + 2, r + 2)


@dataclass(frozen=True)
class ThresholdReport:
    r: int
    R: int
    threshold: Fraction

    @property
    def value(self) -> float:
        return float(self.threshold)

    @property
    def gt_one(self) -> bool:
        return self.threshold > 1

    @property
    def t(self) -> Fraction:
        """Multiplier ``(r+2)(r+3) / (2R)`` applied to the base weight."""
        return 1 / self.threshold

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "R": self.R,
            "threshold": self.value,
            "threshold_exact": f"{self.threshold.numerator}/{self.threshold.denominator}",
            "gt_one": self.gt_one,
        }


def vanishing_threshold(r: int) -> ThresholdReport:
    """``2R / ((r+2)(r+3))`` as an exact fraction."""
    R = symmetric_rank(r)
    return ThresholdReport(int(r), R, Fraction(2 * R, (r + 2) * (r + 3)))


# ------------------------------------------------------------------------ Lelong


def _scalar_callable(phi, n: int = 1) -> Callable:
    if isinstance(phi, Field):
        return lambda z: np.real(np.asarray(value_of(phi(z=[z]))))
    if isinstance(phi, str):
        f = Field.parse(phi, n, 0)
        return lambda z: np.real(np.asarray(value_of(f(z=[z]))))
    if callable(phi):
        return lambda z: np.real(np.asarray(phi(z)))
    raise InputError("weight must be a Field, an expression string or a callable of z")


def lelong_estimate(phi, point=0j, radii: Optional[Sequence[float]] = None, n_angles: int = 64) -> dict:
    """Least-squares slope of ``max_{|z - p| = rho} phi`` against ``log rho^2``.

    The fit also carries ``rho`` and ``rho^2`` terms for the smooth part.

    Returns a dict with ``nu``, the fit residual and a confidence note.  A
    non-monotone circle maximum (as happens for noisy or non-psh input)
    yields ``nu = 0`` with a low-confidence note.
    """
    f = _scalar_callable(phi)
    radii = np.geomspace(1e-2, 1e-8, 13) if radii is None else np.asarray(radii, dtype=float)
    if len(radii) < 2 or np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise InputError("radii must be positive and strictly decreasing")
    if np.min(radii) < 1e-150:
        raise InputError("radii too close to underflow")
    theta = 2 * math.pi * np.arange(n_angles) / n_angles
    p = complex(point)
    M = np.array([np.max(f(p + rho * np.exp(1j * theta))) for rho in radii])
    x = np.log(radii**2)
    # the rho and rho^2 columns absorb the Taylor terms of a smooth part
    A = np.stack([x, np.ones_like(x), radii, radii**2], axis=1)
    coef, *_ = np.linalg.lstsq(A, M, rcond=None)
    slope = float(coef[0])
    resid = float(np.max(np.abs(A @ coef - M)))
    monotone = bool(np.all(np.diff(M) <= 1e-12 * np.maximum(1.0, np.abs(M[:-1]))))
    if not monotone:
        return {"nu": 0.0, "slope": slope, "fit_residual": resid, "confidence": "low: circle maxima are not monotone"}
    nu = max(slope, 0.0)
    if abs(nu) < 1e-9:
        nu = 0.0
    return {"nu": nu, "slope": slope, "fit_residual": resid, "confidence": "fit over %d radii" % len(radii)}


# ---------------------------------------------------------------- integrability


def _log_annulus_integrals(f, p: complex, eps: float, levels: int, n_s: int = 8, n_th: int = 16) -> np.ndarray:
    """log of the integral of ``e^{-t phi}`` over each dyadic annulus (outermost first)."""
    x, wx = np.polynomial.legendre.leggauss(n_s)
    theta = 2 * math.pi * (np.arange(n_th) + 0.5) / n_th
    out = np.empty(levels)
    ln2 = math.log(2.0)
    for k in range(levels):
        hi = math.log(eps) - k * ln2
        s = hi - 0.5 * ln2 * (1 - x)  # s in [hi - ln2, hi]
        ws = 0.5 * ln2 * wx
        rho = np.exp(s)
        z = p + rho[:, None] * np.exp(1j * theta)[None, :]
        logv = f(z) + 2 * s[:, None]  # rho drho dtheta = rho^2 ds dtheta
        logw = np.log(ws)[:, None] + math.log(2 * math.pi / n_th)
        a = logv + logw
        m = np.max(a)
        out[k] = m + math.log(np.sum(np.exp(a - m)))
    return out


def integrability_classify(phi, t: float, point=0j, eps: float = 0.5, levels: int = ANNULI) -> dict:
    """Classify local integrability of ``e^{-t phi}`` near ``point`` on a curve.

    The disc ``|z - p| < eps`` is cut into dyadic annuli; the truncated
    integrals over ``K``, ``2K`` and ``4K`` annuli (``K = levels``) are
    compared.  Divergent when both refinements grow the value by more than
    10%, integrable when both grow it by less than 1%, inconclusive
    otherwise.
    """
    if not t > 0:
        raise InputError("t must be positive")
    if isinstance(phi, Field) and phi.n != 1:
        raise CapabilityError("integrability is classified over a curve (n = 1) only")
    g = _scalar_callable(phi)
    f = lambda z: -t * g(z)
    logs = _log_annulus_integrals(f, complex(point), eps, 4 * levels)

    def cum(L):
        a = logs[:L]
        m = np.max(a)
        return m + math.log(np.sum(np.exp(a - m)))

    I = [cum(levels), cum(2 * levels), cum(4 * levels)]
    growth = [math.expm1(I[1] - I[0]), math.expm1(I[2] - I[1])]
    if all(gr > 0.10 for gr in growth):
        cls = "divergent"
    elif all(gr < 0.01 for gr in growth):
        cls = "integrable"
    else:
        cls = "inconclusive"
    return {
        "class": cls,
        "t": t,
        "log_integrals": I,
        "growth": growth,
        "annuli": [levels, 2 * levels, 4 * levels],
        "radius": eps,
    }


# ---------------------------------------------------------------- stable model


def stable_model_check(scene, samples=None, fiber_points=None, tol: float = 1e-8) -> dict:
    """Decomposition of the induced weight of the stable-bundle model.

    At each sample, the fiber form of the induced weight must have base
    block ``(1/(r+1)) d dbar phi_base``, fiber block equal to the
    Fubini-Study Hessian, and vanishing mixed blocks.
    """
    from .finsler import decomposition_residual, fiber_form, induced_weight, weight_from_field
    from .hermitian import HermitianField
    from .wirtinger import dual_jet2

    if scene.base_weight is None or scene.metric is None:
        raise InputError("stable_model_check needs a scene with a metric and a base weight")
    r, n = scene.r, scene.n
    weight = induced_weight(HermitianField.from_scene(scene))
    fs = weight_from_field(Field.parse("log(1 + " + " + ".join(f"abs2(w{k})" for k in range(1, r + 1)) + ")", n, r), n, r)
    pts = scene.samples if samples is None else np.asarray(samples, dtype=complex).reshape(-1, n)
    wpts = (
        np.array([[0.0] * r, [0.3 + 0.4j] * r, [-0.7 + 0.1j] + [0.2j] * (r - 1)], dtype=complex)
        if fiber_points is None
        else np.asarray(fiber_points, dtype=complex).reshape(-1, r)
    )
    base = scene.base_weight
    worst = {"base": 0.0, "fiber": 0.0, "mixed": 0.0, "decomposition": 0.0}
    records = []
    for z in pts:
        hb = dual_jet2(lambda v: base(z=v), z).dd / (r + 1)
        for w in wpts:
            F = fiber_form(weight, z, w)
            Ffs = fiber_form(fs, z, w)
            e_base = float(np.max(np.abs(F.base - hb)))
            e_fib = float(np.max(np.abs(F.fiber - Ffs.fiber)))
            # separable weight: the mixed stencil has no truncation error, so a
            # coarse step only lowers rounding noise
            Fm = fiber_form(weight, z, w, h=MIXED_STEP)
            e_mix = float(np.max(np.abs(Fm.mixed), initial=0.0))
            e_dec = decomposition_residual(weight, z, w)
            worst["base"] = max(worst["base"], e_base)
            worst["fiber"] = max(worst["fiber"], e_fib)
            worst["mixed"] = max(worst["mixed"], e_mix)
            worst["decomposition"] = max(worst["decomposition"], e_dec)
            records.append({"z": z, "w": w, "base_block": F.base, "expected_base_block": hb})
    return {
        "max_base_block_error": worst["base"],
        "max_fiber_block_error": worst["fiber"],
        "max_mixed_block": worst["mixed"],
        "max_decomposition_residual": worst["decomposition"],
        "pass": worst["mixed"] < tol and worst["base"] < 1e-6 and worst["fiber"] < 1e-6,
        "samples": len(pts) * len(wpts),
        "records": records,
    }


# ----------------------------------------------------------------------- report


def vanishing_report(scene, r: Optional[int] = None, singular_point=None, per_dim: int = 5) -> dict:
    """Check the hypotheses of the vanishing statement for a scene.

    Reports the strict-positivity proxy of the induced weight, the Lelong
    number estimate of the base weight, the threshold comparison, the
    integrability class of ``e^{-t phi}`` at ``t = (r+2)(r+3) / (2R)``, and a
    conclusion ``yes`` / ``no`` / ``inconclusive``.  Cohomology groups are not
    computed.
    """
    from .finsler import hx_membership, induced_weight, scene_weight
    from .hermitian import HermitianField

    r = scene.r if r is None else int(r)
    thr = vanishing_threshold(r)
    if scene.base_weight is None:
        raise InputError("vanishing_report needs a scene with a base weight")
    p = (
        complex(singular_point)
        if singular_point is not None
        else (complex(scene.punctures[0].center[0]) if scene.punctures else 0j)
    )
    lel = lelong_estimate(scene.base_weight, p)
    nu = lel["nu"]
    t = float(thr.t)
    integ = integrability_classify(scene.base_weight, t, p)
    weight = induced_weight(HermitianField.from_scene(scene)) if scene.metric is not None else scene_weight(scene)
    hx = hx_membership(weight, scene.samples, per_dim=per_dim)
    proxy = hx["big_proxy"]["value"]
    below = nu < thr.value
    if integ["class"] == "inconclusive":
        verdict = "inconclusive"
    elif proxy and below and integ["class"] == "integrable":
        verdict = "yes"
    else:
        verdict = "no"
    return {
        "r": r,
        "R": thr.R,
        "threshold": thr.value,
        "t": t,
        "lelong": lel,
        "nu_below_threshold": bool(below),
        "integrability": integ,
        "strict_positivity_proxy": {
            "value": bool(proxy),
            "label": hx["big_proxy"]["label"],
            "full_min_eigenvalue": hx["full_min_eigenvalue"],
        },
        "weight_finite_on_sampled_fibers": not hx["bad_fibers"],
        "hypotheses_satisfied": verdict,
        "nu_below_one": bool(nu < 1.0),
        "note_nu_below_one": (
            "nu < 1: the hypothesis also holds under the comparison criterion requiring nu(phi) < 1"
            if nu < 1.0
            else "nu >= 1: the comparison criterion requiring nu(phi) < 1 does not apply"
        ),
        "cohomology": "not computed: vanishing of H^q(Y, K_Y (x) E (x) det E) for q > 0 is asserted by the theorem under these hypotheses",
    }
