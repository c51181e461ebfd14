"""Invariant battery at reduced resolution.

Every check returns its measured value, the bound it is held to and a pass
flag.  The battery is deterministic: seeds are fixed and no wall-clock values
enter the report (elapsed time is compared against a budget and only the
resulting flag is recorded).
"""

from __future__ import annotations

import math
import sys
import time
from typing import Callable, List

import numpy as np

from .dsl import parse_field, to_source
from .finsler import (
    decomposition_residual,
    geodesic_curvature,
    induced_weight,
    kobayashi_tensor,
    positivity_equivalence_check,
    scene_weight,
    weight_from_field,
)
from .hermitian import (
    HermitianField,
    chern_curvature,
    demailly_skoda_check,
    dual_field,
    griffiths_verdict,
    log_pairing_hessian,
    nakano_verdict,
    pairing_hessian_check,
)
from .jet import jconj, jlog
from .l2 import (
    duality_check,
    fit_ke_constant,
    ke_residual,
    l2_metric,
    roundtrip_check,
    xi_chart_defect,
)
from .quadrature import build_grid, corrupted_volume, fs_moment, fs_moment_exact, integrate_fiber
from .scene import builtin
from .tensor import CurvatureTensor, hermitian_eigen, matrix_verdict, nakano_flatten
from .vanishing import integrability_classify, lelong_estimate, symmetric_rank, vanishing_threshold
from .wirtinger import jet2, jet_check

BUDGET_SECONDS = 600.0
SEED = 20240601


def _rec(name: str, module: str, value: float, bound: float, passed: bool, **extra) -> dict:
    return {"name": name, "module": module, "value": float(value), "bound": float(bound), "pass": bool(passed), **extra}


def _rng():
    return np.random.default_rng(SEED)


def _random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T


def _metric_scenes():
    return [
        builtin("trivial"),
        builtin("diagonal-exponential"),
        builtin("product"),
        builtin("stable-model"),
        builtin("rotated-exponential"),
    ]


# ----------------------------------------------------------------- tensor-core


def check_eigen_reconstruction():
    rng = _rng()
    worst = 0.0
    for d in range(1, 13):
        m = _random_hermitian(rng, d)
        lam, v = hermitian_eigen(m)
        rec = (v * lam) @ v.conj().T
        worst = max(worst, float(np.linalg.norm(rec - m) / np.linalg.norm(m)))
    return _rec("eigen-reconstruction", "tensor-core", worst, 1e-9, worst < 1e-9)


_ORDER = ["strictly-negative", "semi-negative", "indefinite", "semi-positive", "strictly-positive"]


def check_classify_monotone():
    rng = _rng()
    bad = 0
    for _ in range(50):
        m = _random_hermitian(rng, 3)
        v0 = matrix_verdict(m, normalize=False)
        for s in (0.1, 1.0, 10.0):
            v1 = matrix_verdict(m + s * np.eye(3), normalize=False)
            bad += _ORDER.index(v1.cls) < _ORDER.index(v0.cls)
    return _rec("classify-monotone", "tensor-core", bad, 0, bad == 0)


def check_nakano_flatten_hermitian():
    rng = _rng()
    worst = 0.0
    for _ in range(10):
        T = CurvatureTensor(rng.normal(size=(2, 2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2, 2))).hermitian_part()
        M = nakano_flatten(T, np.eye(2))
        worst = max(worst, float(np.max(np.abs(M - M.conj().T))))
    return _rec("nakano-flatten-hermitian", "tensor-core", worst, 0.0, worst == 0.0)


# ------------------------------------------------------------------ metric-dsl


def check_parse_idempotent():
    bad = 0
    for sc in _metric_scenes() + [builtin("fubini-study")]:
        for f in (sc.metric, sc.weight, sc.base_weight):
            if f is None:
                continue
            once = to_source(parse_field(str(f)))
            bad += to_source(parse_field(once)) != once
    return _rec("parse-print-parse", "metric-dsl", bad, 0, bad == 0)


def check_homogeneity():
    sc = builtin("trivial")
    lift = weight_from_field(sc.weight, sc.n, sc.r).lift
    rng = _rng()
    worst = 0.0
    for _ in range(20):
        z = [np.asarray(complex(*rng.normal(size=2)) * 0.5)]
        Z = [np.asarray(complex(*rng.normal(size=2))) for _ in range(2)]
        lam = complex(*rng.normal(size=2))
        g0 = complex(lift(z, Z))
        g1 = complex(lift(z, [lam * x for x in Z]))
        worst = max(worst, abs(g1 - abs(lam) ** 2 * g0) / abs(g1))
    return _rec("homogeneity", "metric-dsl", worst, 1e-12, worst < 1e-12)


# ------------------------------------------------------------- wirtinger-diff


def check_jet_hermitian():
    worst = 0.0
    for sc in _metric_scenes():
        H = HermitianField.from_scene(sc)
        f = lambda v: np.log(np.real(np.linalg.det(H(np.stack(v, axis=-1)))))
        j = jet2(f, sc.samples)
        defect = np.abs(j.dd - np.conj(np.swapaxes(j.dd, -1, -2))).max(axis=(-1, -2))
        worst = max(worst, float(np.max(defect - np.maximum(j.est_error, 1e-14))))
    return _rec("jet2-hermitian-within-est", "wirtinger-diff", worst, 0.0, worst <= 0.0)


def check_richardson():
    f = lambda v: np.log(1 + np.abs(v[0]) ** 2) + np.exp(-np.abs(v[0]) ** 2)
    worst = np.inf
    for p in (0.3, 0.1 + 0.4j, -0.5j):
        d = [jet2(f, np.array([p]), h=h, richardson=False).dd[0, 0] for h in (2.0**-6, 2.0**-7, 2.0**-8)]
        worst = min(worst, abs(d[0] - d[1]) / abs(d[1] - d[2]))
    return _rec("richardson-ratio", "wirtinger-diff", worst, 3.0, worst >= 3.0)


def check_fs_step_agreement():
    f = lambda v: jlog(1 + v[0] * jconj(v[0]))
    worst = max(jet_check(f, np.array([p]))["relative_step_disagreement"] for p in (0.2, 0.5 + 0.5j, 1.5j))
    return _rec("fs-step-agreement", "wirtinger-diff", worst, 1e-7, worst < 1e-7)


# --------------------------------------------------------- hermitian-geometry


def check_pair_symmetry():
    # returned tensors are exactly pair-symmetric; the raw finite-difference
    # defect must stay inside the Richardson error estimate
    worst, raw_over_est = 0.0, 0.0
    for sc in _metric_scenes():
        for z in sc.samples[:5]:
            T = chern_curvature(HermitianField.from_scene(sc), z)
            worst = max(worst, T.pair_symmetry_defect())
            raw = T.meta["pair_defect"] * T.scale
            raw_over_est = max(raw_over_est, raw / max(T.est_error, 1e-14))
    ok = worst < 1e-10 and raw_over_est <= 1.0
    return _rec("pair-symmetry", "hermitian-geometry", worst, 1e-10, ok, raw_defect_over_est_error=raw_over_est)


def check_rank1_coincidence():
    bad = 0
    for c in (1.0, -1.0, 0.0):
        sc = builtin("diagonal-exponential", c=[c])
        H = HermitianField.from_scene(sc)
        for z in sc.samples[:5]:
            T = chern_curvature(H, z)
            bad += griffiths_verdict(T).cls != nakano_verdict(T, T.meta["metric"]).cls
    return _rec("rank1-griffiths-nakano", "hermitian-geometry", bad, 0, bad == 0)


def check_dual_flip():
    worst = 0.0
    for sc in (builtin("diagonal-exponential"), builtin("rotated-exponential")):
        H = HermitianField.from_scene(sc)
        D = dual_field(H)
        for z in sc.samples[:4]:
            T = chern_curvature(H, z)
            E = T.endomorphism(T.meta["metric"]).data
            Td = chern_curvature(D, z)
            Ed = Td.endomorphism(Td.meta["metric"]).data
            worst = max(worst, float(np.max(np.abs(Ed + np.transpose(E, (1, 0, 2, 3))))) / max(T.scale, 1e-300))
    return _rec("dual-curvature-flip", "hermitian-geometry", worst, 1e-6, worst < 1e-6)


def check_log_pairing():
    rng = _rng()
    worst = np.inf
    for c in ([-1.0, -2.0], [-0.5]):
        sc = builtin("diagonal-exponential", c=c)
        H = HermitianField.from_scene(sc)
        for z in sc.samples[::5]:
            for _ in range(10):
                u = rng.normal(size=len(c)) + 1j * rng.normal(size=len(c))
                m = log_pairing_hessian(H, u, z)
                worst = min(worst, float(np.linalg.eigvalsh(m)[0]))
    return _rec("log-pairing-psd", "hermitian-geometry", worst, -1e-6, worst >= -1e-6)


def check_pairing_hessian():
    worst = 0.0
    for sc in _metric_scenes():
        for z in sc.samples[:3]:
            worst = max(worst, pairing_hessian_check(HermitianField.from_scene(sc), z)["max_deviation"])
    return _rec("pairing-hessian-vs-contraction", "hermitian-geometry", worst, 1e-5, worst < 1e-5)


def check_demailly_skoda():
    worst, ran = 0.0, 0
    for sc in (builtin("diagonal-exponential"), builtin("product"), builtin("rotated-exponential")):
        out = demailly_skoda_check(HermitianField.from_scene(sc), sc.samples[:6])
        if out["status"] == "skipped":
            continue
        ran += 1
        worst = min(worst, out["min_eigenvalue"])
    return _rec("demailly-skoda", "hermitian-geometry", worst, -1e-8, ran > 0 and worst >= -1e-8, scenes=ran)


# ----------------------------------------------------------- finsler-geometry


def check_decomposition():
    worst = 0.0
    w = np.array([0.0, 0.3 + 0.2j, -0.6 + 0.1j])
    for name in ("trivial", "product", "diagonal-exponential", "stable-model"):
        sc = builtin(name)
        weight = scene_weight(sc)
        for z in sc.samples[::5]:
            for wi in w:
                worst = max(worst, decomposition_residual(weight, z, [wi]))
    return _rec("decomposition", "finsler-geometry", worst, 1e-5, worst < 1e-5)


def check_schur():
    worst = 0.0
    for name in ("product", "diagonal-exponential", "stable-model"):
        sc = builtin(name)
        weight = scene_weight(sc)
        for z in sc.samples[::6]:
            a, b = geodesic_curvature(weight, z, [0.2 - 0.1j], both=True)
            worst = max(worst, float(np.max(np.abs(a - b))))
    return _rec("schur-two-ways", "finsler-geometry", worst, 1e-8, worst < 1e-8)


def check_collapse():
    worst = 0.0
    for c in ([1.0, 2.0], [0.5, -1.0]):
        sc = builtin("diagonal-exponential", c=c)
        H = HermitianField.from_scene(sc)
        D = dual_field(H)
        weight = induced_weight(H)
        for z in sc.samples[::6]:
            K = kobayashi_tensor(weight, z, np.eye(2)[0])
            Tdual = chern_curvature(D, z)
            worst = max(worst, float(np.max(np.abs(K.data - Tdual.data))))
    return _rec("hermitian-collapse", "finsler-geometry", worst, 1e-6, worst < 1e-6)


def check_equivalence():
    bad = 0
    for sc in _metric_scenes() + [builtin("diagonal-exponential", c=[-1.0, -2.0])]:
        out = positivity_equivalence_check(HermitianField.from_scene(sc), sc.samples[::8], per_dim=3)
        bad += sum(not r["agree"] for r in out["records"])
    return _rec("positivity-equivalence", "finsler-geometry", bad, 0, bad == 0)


# ----------------------------------------------------------- fiber-quadrature


_RES = {1: 32, 2: 32}


def check_moments():
    worst = 0.0
    pats = [(0, 0), (0, 1), (1, 1), (0, 0, 0, 0), (0, 0, 1, 1), (0, 1, 1, 0), (0, 1, 0, 1)]
    for r in (1, 2):
        g = build_grid(r, _RES[r])
        for p in pats:
            ex = fs_moment_exact(r, p)
            got = fs_moment(r, p, g)
            worst = max(worst, abs(got - ex) / max(abs(ex), 1.0 / ((r + 1) * (r + 2))))
    return _rec("fs-moments", "fiber-quadrature", worst, 1e-6, worst < 1e-6)


def check_unitary():
    rng = _rng()
    worst = 0.0
    for r in (1, 2):
        g = build_grid(r, _RES[r])
        q, _ = np.linalg.qr(rng.normal(size=(r + 1, r + 1)) + 1j * rng.normal(size=(r + 1, r + 1)))
        for p in ((0, 0), (0, 0, 1, 1), (0, 1, 0, 1)):
            worst = max(worst, abs(fs_moment(r, p, g, unitary=q) - fs_moment(r, p, g)))
    return _rec("unitary-invariance", "fiber-quadrature", worst, 1e-6, worst < 1e-6)


def check_mass():
    worst = 0.0
    for r in (1, 2):
        g = build_grid(r, _RES[r])
        tot = sum(fs_moment(r, (a, a), g) for a in range(r + 1))
        worst = max(worst, abs(tot - 1.0))
    return _rec("mass-consistency", "fiber-quadrature", worst, 1e-6, worst < 1e-6)


def check_chart_independence():
    sc = builtin("product")
    weight = scene_weight(sc)
    z = sc.samples[3]
    f = lambda Z, w, B: np.abs(Z[:, 0]) ** 4 / np.sum(np.abs(Z) ** 2, axis=-1) ** 2
    a = integrate_fiber(f, weight, z, build_grid(1, 64, "partition"))
    vals = [integrate_fiber(f, weight.in_chart(B), z, build_grid(1, 64, "single", B)) for B in (0, 1)]
    dev = float(max(abs(v - a) for v in vals) / abs(a))
    return _rec("chart-independence", "fiber-quadrature", dev, 2e-6, dev < 2e-6)


# ---------------------------------------------------------------- l2-descent


def check_xi():
    rng = _rng()
    weight = scene_weight(builtin("product"))
    worst = 0.0
    for _ in range(100):
        coeffs = rng.normal(size=2) + 1j * rng.normal(size=2)
        w = [complex(*rng.normal(size=2)) * 0.7]
        worst = max(worst, xi_chart_defect(coeffs, weight, np.array([0.2 + 0.1j]), w, 0, 1))
    return _rec("xi-cross-chart", "l2-descent", worst, 1e-12, worst < 1e-12)


def check_shift():
    sc = builtin("product")
    weight = scene_weight(sc)
    g = build_grid(1, 32)
    z = sc.samples[2]
    a = l2_metric(weight, z, g).matrix
    b = l2_metric(weight.shifted(0.7), z, g).matrix
    dev = float(np.max(np.abs(b - math.exp(-0.7) * a)) / np.max(np.abs(a)))
    return _rec("l2-shift-equivariance", "l2-descent", dev, 1e-12, dev < 1e-12)


def check_roundtrip():
    g = build_grid(1, 32)
    worst_res, worst_vol, worst_mom = 0.0, 0.0, 0.0
    for name in ("diagonal-exponential", "rotated-exponential", "stable-model"):
        sc = builtin(name)
        H = HermitianField.from_scene(sc)
        for z in sc.samples[::8]:
            out = roundtrip_check(H, z, g)
            worst_res = max(worst_res, out["residual"])
            worst_vol = max(worst_vol, out["lambda_vs_volume"])
            worst_mom = max(worst_mom, out["lambda_vs_volume_times_moment"])
    return [
        _rec("roundtrip-proportional", "l2-descent", worst_res, 1e-4, worst_res < 1e-4),
        _rec("roundtrip-constant-equals-volume", "l2-descent", worst_vol, 1e-4, worst_vol < 1e-4),
        _rec("roundtrip-constant-equals-volume-times-moment", "l2-descent", worst_mom, 1e-4, worst_mom < 1e-4),
    ]


def check_ke():
    worst = 0.0
    for M in (np.eye(2), np.array([[2.0, 0.3j], [-0.3j, 1.0]])):
        H = HermitianField.constant(M)
        weight = induced_weight(H)
        g = build_grid(1, 32)
        d = float(np.real(np.linalg.det(M)))
        z = np.zeros(1)
        C = fit_ke_constant(weight, d, z, g)
        worst = max(worst, ke_residual(weight, d, z, C, g))
    return _rec("ke-residual", "l2-descent", worst, 1e-6, worst < 1e-6)


def check_duality():
    sc = builtin("diagonal-exponential", c=[1.0])
    out = duality_check(HermitianField.from_scene(sc), sc.samples[7], build_grid(0, 8))
    return _rec("duality-rank1", "l2-descent", out["deviation"], 1e-3, out["deviation"] < 1e-3)


# --------------------------------------------------------------- vanishing-lab


def check_threshold():
    bad = 0
    for r in range(1, 31):
        bad += symmetric_rank(r) != math.comb(2 * r + 2, r)
        bad += vanishing_threshold(r).gt_one != (r > 1)
    bad += vanishing_threshold(2).value != 1.5 or symmetric_rank(2) != 15
    return _rec("threshold-arithmetic", "vanishing-lab", bad, 0, bad == 0)


def check_integrability_grid():
    bad = 0
    for c in (0.5, 1.0, 2.0):
        for f in (0.9, 1.1):
            got = integrability_classify(f"{c!r}*log(abs2(z1))", f / c)["class"]
            bad += got != ("integrable" if f < 1 else "divergent")
    return _rec("integrability-boundary", "vanishing-lab", bad, 0, bad == 0)


def check_lelong():
    worst = 0.0
    for p in ("sin(z1 + conj(z1))", "cos(3*abs2(z1))", "exp(-abs2(z1))"):
        worst = max(worst, abs(lelong_estimate(f"0.7*log(abs2(z1)) + {p}")["nu"] - 0.7))
    return _rec("lelong-perturbation", "vanishing-lab", worst, 1e-2, worst < 1e-2)


CHECKS: List[Callable] = [
    check_eigen_reconstruction,
    check_classify_monotone,
    check_nakano_flatten_hermitian,
    check_parse_idempotent,
    check_homogeneity,
    check_jet_hermitian,
    check_richardson,
    check_fs_step_agreement,
    check_pair_symmetry,
    check_rank1_coincidence,
    check_dual_flip,
    check_log_pairing,
    check_pairing_hessian,
    check_demailly_skoda,
    check_decomposition,
    check_schur,
    check_collapse,
    check_equivalence,
    check_moments,
    check_unitary,
    check_mass,
    check_chart_independence,
    check_xi,
    check_shift,
    check_roundtrip,
    check_ke,
    check_duality,
    check_threshold,
    check_integrability_grid,
    check_lelong,
]


def run_selfcheck(corrupt_volume: bool = False, budget: float = BUDGET_SECONDS, log=sys.stderr) -> dict:
    """Run the battery; returns the report body (no wall-clock values)."""
    t0 = time.perf_counter()
    records = []

    def run_all():
        for chk in CHECKS:
            try:
                out = chk()
            except Exception as exc:  # a crashing check is a failing check
                out = {"name": chk.__name__[6:], "module": "?", "pass": False, "error": f"{type(exc).__name__}: {exc}"}
            records.extend(out if isinstance(out, list) else [out])

    if corrupt_volume:
        with corrupted_volume(1.1):
            run_all()
    else:
        run_all()
    elapsed = time.perf_counter() - t0
    if log is not None:
        print(f"selfcheck: {elapsed:.1f} s", file=log)
    failures = [r["name"] for r in records if not r["pass"]]
    return {
        "checks": records,
        "passed": sum(r["pass"] for r in records),
        "failed": len(failures),
        "failures": failures,
        "all_pass": not failures,
        "corrupt_volume": corrupt_volume,
        "timing": {"budget_seconds": budget, "within_budget": elapsed <= budget},
    }
