"""Command-line front end.

    vbmetric run <analysis> [scene] [options]
    vbmetric selfcheck [--debug-corrupt-volume]

``scene`` is a builtin family name or a path to a TOML scene file; builtin
parameters are passed with ``--param key=value``.  Reports are JSON on
standard output.  Exit codes: 0 success, 2 verdict failure, 1 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .errors import VBMetricError
from .report import dumps, make_report

ANALYSES = (
    "curvature",
    "griffiths",
    "nakano",
    "decompose",
    "l2metric",
    "roundtrip",
    "ke",
    "duality",
    "pushforward",
    "membership",
    "threshold",
    "lelong",
    "integrability",
    "vanishing-report",
    "selfcheck",
)
NEEDS_SCENE = {"curvature", "griffiths", "nakano", "decompose", "l2metric", "roundtrip", "duality", "pushforward", "membership", "vanishing-report"}
EXPENSIVE = {"l2metric": 5, "roundtrip": 10, "duality": 3, "pushforward": 3}
FIBER_POINTS = ([0.0], [0.3 + 0.2j], [-0.6 + 0.1j])

EXIT_OK, EXIT_INPUT, EXIT_VERDICT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vbmetric", description="Curvature, Finsler and L^2 analyses of vector-bundle metrics.")
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run one analysis on a scene")
    run.add_argument("analysis", help="one of: " + ", ".join(ANALYSES))
    run.add_argument("scene", nargs="?", help="builtin family name or TOML scene file")
    run.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="builtin parameter (JSON value)")
    run.add_argument("--resolution", type=int, default=None, help="fiber quadrature resolution")
    run.add_argument("--tol", type=float, default=None, help="override the analysis tolerance")
    run.add_argument("--chart", type=int, default=None, help="fiber chart index")
    run.add_argument("--seed", type=int, default=0, help="seed for Griffiths restarts")
    run.add_argument("--raw-measure", action="store_true", help="use the raw fiber measure instead of unit mass")
    run.add_argument("--r", type=int, default=None, help="fiber dimension for threshold / ke")
    run.add_argument("--max-samples", type=int, default=None, help="limit the number of base samples")
    run.add_argument("--expect", choices=["positive", "strictly-positive", "negative", "strictly-negative"], help="expected verdict for griffiths / nakano")
    run.add_argument("--phi", default=None, help="base weight expression for lelong / integrability")
    run.add_argument("--point", default=None, help="singular point for lelong / integrability")
    run.add_argument("--t", type=float, default=None, help="multiplier t for integrability")
    sc = sub.add_parser("selfcheck", help="run the invariant battery")
    sc.add_argument("--debug-corrupt-volume", action="store_true", help="negative control: corrupt the fiber measure")
    return p


def _load_scene(args):
    from .scene import BUILTINS, builtin, load_scene

    if args.scene is None:
        return None
    params = {}
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = _value(v)
    if args.chart is not None:
        params["chart"] = args.chart
    if args.scene in BUILTINS:
        return builtin(args.scene, **params)
    if not os.path.exists(args.scene):
        raise UsageError(f"scene {args.scene!r} is neither a builtin ({', '.join(BUILTINS)}) nor a file")
    if params:
        raise UsageError("--param applies to builtin scenes only")
    return load_scene(args.scene)


def _samples(scene, args, analysis):
    pts = scene.samples
    k = args.max_samples if args.max_samples is not None else EXPENSIVE.get(analysis)
    return pts if k is None else pts[:k]


def _tol(scene, args, key, default=None):
    if args.tol is not None:
        return args.tol
    if scene is not None and key in scene.tolerances:
        return scene.tolerances[key]
    from .scene import DEFAULT_TOLERANCES

    return DEFAULT_TOLERANCES.get(key, default)


def _grid(r, args):
    from .quadrature import build_grid

    res = args.resolution if args.resolution is not None else (64 if r <= 1 else 32)
    return build_grid(r, res)


def _conventions(r: Optional[int], args) -> dict:
    from .quadrature import raw_fs_volume

    out = {"measure": "raw" if args.raw_measure else "unit-mass", "lelong": "nu(c log|z|^2) = c"}
    if r is not None:
        out["raw_fs_volume"] = raw_fs_volume(r) if r <= 3 else None
        # multiply measure-linear results by this to obtain raw-measure values
        out["to_raw_measure_factor"] = 1.0 if args.raw_measure else (raw_fs_volume(r) if r <= 3 else None)
    return out


def _verdict_ok(cls: str, expect: Optional[str]) -> bool:
    if expect is None:
        return True
    if expect == "positive":
        return cls in ("semi-positive", "strictly-positive")
    if expect == "negative":
        return cls in ("semi-negative", "strictly-negative")
    return cls == expect


def _metric(scene):
    from .errors import InputError
    from .hermitian import HermitianField

    if scene.metric is None:
        raise InputError(f"scene {scene.name!r} has no Hermitian metric")
    return HermitianField.from_scene(scene)


def analyze(analysis: str, scene, args) -> tuple:
    """Return (result, warnings, verdict_ok, r)."""
    from . import finsler, hermitian, l2, vanishing

    warnings = []
    normalized = not args.raw_measure
    ok = True

    if analysis in ("curvature", "griffiths", "nakano"):
        H = _metric(scene)
        tol = _tol(scene, args, "positivity")
        recs = []
        for z in _samples(scene, args, analysis):
            T = hermitian.chern_curvature(H, z)
            rec = {"z": z}
            if analysis == "curvature":
                rec.update(tensor=T.data, est_error=T.est_error, pair_defect=T.meta["pair_defect"])
            elif analysis == "griffiths":
                v = hermitian.griffiths_verdict(T, tol, seed=args.seed)
                rec["verdict"] = v
                ok &= _verdict_ok(v.cls, args.expect)
            else:
                v = hermitian.nakano_verdict(T, T.meta["metric"], tol)
                rec["verdict"] = v
                ok &= _verdict_ok(v.cls, args.expect)
            if T.est_error > 1e-6 * max(T.scale, 1.0):
                warnings.append({"operation": "chern_curvature", "point": z, "message": f"large derivative error estimate {T.est_error:.3e}"})
            recs.append(rec)
        return {"records": recs, "tolerance": tol, "expect": args.expect}, warnings, ok, scene.r

    if analysis == "decompose":
        weight = finsler.scene_weight(scene, args.chart)
        tol = _tol(scene, args, "decomposition")
        recs, worst = [], 0.0
        for z in _samples(scene, args, analysis):
            for w in FIBER_POINTS:
                w = list(w) * scene.r
                res = finsler.decomposition_residual(weight, z, w, normalized=normalized)
                worst = max(worst, res)
                recs.append({"z": z, "w": w, "residual": res})
        ok = worst < tol
        return {"records": recs, "max_residual": worst, "tolerance": tol}, warnings, ok, scene.r

    if analysis == "l2metric":
        weight = finsler.scene_weight(scene, args.chart)
        grid = _grid(scene.r, args)
        recs = []
        for z in _samples(scene, args, analysis):
            m = l2.l2_metric(weight, z, grid, normalized, monitor_tail=True)
            if m.divergence and m.divergence["divergent"]:
                warnings.append({"operation": "l2_metric", "point": z, "message": "fiber integral flagged divergent"})
            recs.append({"z": z, "matrix": m.matrix, "tail": m.divergence})
        return {"records": recs, "resolution": grid.resolution}, warnings, ok, scene.r

    if analysis == "roundtrip":
        H = _metric(scene)
        grid = _grid(scene.r, args)
        tol = _tol(scene, args, "roundtrip")
        recs = [l2.roundtrip_check(H, z, grid, normalized) for z in _samples(scene, args, analysis)]
        worst_res = max(r["residual"] for r in recs)
        worst_vol = max(r["lambda_vs_volume"] for r in recs)
        worst_mom = max(r["lambda_vs_volume_times_moment"] for r in recs)
        ok = worst_res < tol and worst_vol < tol
        return (
            {
                "records": recs,
                "max_residual": worst_res,
                "max_lambda_vs_volume": worst_vol,
                "max_lambda_vs_volume_times_moment": worst_mom,
                "tolerance": tol,
            },
            warnings,
            ok,
            scene.r,
        )

    if analysis == "ke":
        r = args.r if args.r is not None else (scene.r if scene is not None else 1)
        grid = _grid(r, args)
        H = _metric(scene) if scene is not None and scene.metric is not None and scene.r == r else None
        out = l2.normalization_constant_estimate(r, grid, H=H)
        tol = _tol(scene, args, "ke")
        ok = out["max_ke_residual"] < tol and out["coefficient_of_variation"] < 1e-6
        return out, warnings, ok, r

    if analysis in ("duality", "pushforward"):
        H = _metric(scene)
        grid = _grid(scene.r, args)
        tol = _tol(scene, args, analysis)
        fn = l2.duality_check if analysis == "duality" else l2.det_pushforward_check
        recs = [fn(H, z, grid, normalized) for z in _samples(scene, args, analysis)]
        worst = max(r["deviation"] for r in recs)
        ok = worst < tol
        return {"records": recs, "max_deviation": worst, "tolerance": tol}, warnings, ok, scene.r

    if analysis == "membership":
        weight = finsler.scene_weight(scene, args.chart)
        out = finsler.hx_membership(weight, _samples(scene, args, analysis), tol=_tol(scene, args, "positivity"))
        for b in out["bad_fibers"]:
            warnings.append({"operation": "hx_membership", "point": b["z"], "message": b["error"]})
        return out, warnings, ok, scene.r

    if analysis == "threshold":
        r = args.r if args.r is not None else (scene.r if scene is not None else None)
        if r is None:
            raise UsageError("threshold needs --r or a scene")
        return vanishing.vanishing_threshold(r).to_dict(), warnings, ok, r

    if analysis in ("lelong", "integrability"):
        phi = args.phi if args.phi is not None else (scene.base_weight if scene is not None else None)
        if phi is None:
            raise UsageError(f"{analysis} needs --phi or a scene with a base weight")
        try:
            point = complex(str(args.point or "0").replace(" ", "").replace("i", "j"))
        except ValueError:
            raise UsageError(f"cannot parse --point {args.point!r}") from None
        if analysis == "lelong":
            return vanishing.lelong_estimate(phi, point), warnings, ok, None
        if args.t is None:
            if scene is None:
                raise UsageError("integrability needs --t or a scene")
            t = float(vanishing.vanishing_threshold(scene.r).t)
        else:
            t = args.t
        return vanishing.integrability_classify(phi, t, point), warnings, ok, None

    if analysis == "vanishing-report":
        out = vanishing.vanishing_report(scene, args.r)
        return out, warnings, ok, out["r"]

    raise UsageError(f"unknown analysis {analysis!r}")


def _emit(report: dict) -> None:
    text = dumps(report)
    sys.stdout.write(text)
    sys.stdout.flush()


def _params(args) -> dict:
    keys = ("resolution", "tol", "chart", "seed", "raw_measure", "r", "max_samples", "expect", "phi", "point", "t")
    return {k: getattr(args, k, None) for k in keys if getattr(args, k, None) is not None}


def cmd_selfcheck(corrupt: bool) -> int:
    from .selfcheck import run_selfcheck

    body = run_selfcheck(corrupt_volume=corrupt)
    _emit(make_report("selfcheck", body, params={"debug_corrupt_volume": corrupt}))
    return EXIT_OK if body["all_pass"] else EXIT_VERDICT


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "vbmetric: error: a command is required")
        if args.command == "selfcheck":
            return cmd_selfcheck(args.debug_corrupt_volume)
        if args.analysis not in ANALYSES:
            raise UsageError(f"{parser.format_usage()}vbmetric: error: unknown analysis {args.analysis!r}; choose from {', '.join(ANALYSES)}")
        if args.analysis == "selfcheck":
            return cmd_selfcheck(False)
        scene = _load_scene(args)
        if args.analysis in NEEDS_SCENE and scene is None:
            raise UsageError(f"analysis {args.analysis!r} needs a scene")
        result, warnings, ok, r = analyze(args.analysis, scene, args)
        result["verdict_pass"] = bool(ok)
        _emit(make_report(args.analysis, result, scene, _params(args), _conventions(r, args), warnings))
        return EXIT_OK if ok else EXIT_VERDICT
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except VBMetricError as exc:
        print(f"vbmetric: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"vbmetric: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
