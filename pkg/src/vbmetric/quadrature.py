"""Quadrature over the fibers ``P^r`` against ``omega_phi^r / r!``.

Default scheme: ``P^r`` is split into the ``r + 1`` closed polydiscs
``{|Z_a| <= |Z_A| for all a}``, each written in its affine chart ``A`` as the
unit polydisc in ``C^r``.  Every coordinate uses ``t = |w|^2`` with
Gauss-Legendre nodes on ``[0, 1]`` and a uniform angular rule, so the
Lebesgue area element is ``(1/2) dt dtheta`` per coordinate.  The partition
weight of a point is the indicator of the first chart of maximal modulus.

A single-chart scheme covering all of ``C^r`` (``t = u / (1 - u)``) is
available for chart-independence checks.

Measures are reported either raw (``omega^r / r!``, total FS mass
``(2 pi)^r / r!``) or with unit mass (each ``i dd-bar`` factor divided by
``2 pi`` and the ``1/r!`` dropped, total FS mass 1).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, DegenerateMetricError, InputError
from .jet import jconj
from .wirtinger import dual_jet2

SUPPORTED_R = (0, 1, 2, 3)

# negative-control hook: a factor != 1 deliberately breaks the measure
_volume_scale = 1.0


@contextmanager
def corrupted_volume(scale: float = 1.1):
    """Temporarily multiply every fiber measure by ``scale`` (debug only)."""
    global _volume_scale
    old, _volume_scale = _volume_scale, float(scale)
    try:
        yield
    finally:
        _volume_scale = old


@dataclass(frozen=True)
class ChartNodes:
    chart: int
    w: np.ndarray  # (M, r) affine coordinates
    area: np.ndarray  # (M,) Lebesgue area weights times partition weight


@dataclass(frozen=True)
class FiberGrid:
    r: int
    resolution: int
    charts: tuple
    scheme: str = "partition"

    @property
    def size(self) -> int:
        return sum(len(c.area) for c in self.charts)

    def homogeneous(self, c: ChartNodes) -> np.ndarray:
        """Homogeneous coordinates ``Z`` (``Z_A = 1``) of the nodes of chart ``c``."""
        M = len(c.area)
        Z = np.ones((M, self.r + 1), dtype=complex)
        idx = [a for a in range(self.r + 1) if a != c.chart]
        Z[:, idx] = c.w
        return Z


def _gauss_t(nt: int, scheme: str):
    x, wt = np.polynomial.legendre.leggauss(nt)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wt
    if scheme == "partition":
        return u, wu
    # whole plane: t = u / (1 - u), dt = du / (1 - u)^2
    return u / (1.0 - u), wu / (1.0 - u) ** 2


def partition_weight(Z: np.ndarray, chart: int) -> np.ndarray:
    """1 where ``chart`` is the first index of maximal ``|Z_a|``, else 0."""
    mod = np.abs(Z)
    first = np.argmax(mod >= mod.max(axis=-1, keepdims=True), axis=-1)
    return (first == chart).astype(float)


def build_grid(r: int, resolution: int = 64, scheme: str = "partition", chart: int = 0) -> FiberGrid:
    """Deterministic fiber grid.

    Parameters
    ----------
    r : int
        Fiber dimension, ``0 <= r <= 3``.
    resolution : int
        At least 8; per coordinate ``resolution // 2`` angular nodes and
        ``max(4, resolution // 4)`` radial nodes.
    scheme : {"partition", "single"}
        Polydisc partition over all charts, or one chart covering ``C^r``.
    """
    if r not in SUPPORTED_R:
        raise CapabilityError(f"fiber dimension r={r} is not supported (0..3)")
    if resolution < 8:
        raise InputError("resolution must be at least 8")
    if scheme not in ("partition", "single"):
        raise InputError(f"unknown quadrature scheme {scheme!r}")
    if r == 0:
        return FiberGrid(0, resolution, (ChartNodes(0, np.zeros((1, 0), dtype=complex), np.ones(1)),), scheme)
    nth = resolution // 2
    nt = max(4, resolution // 4) if scheme == "partition" else max(8, resolution // 2)
    t, wt = _gauss_t(nt, scheme)
    theta = 2 * math.pi * (np.arange(nth) + 0.5) / nth
    w1 = (np.sqrt(t)[:, None] * np.exp(1j * theta)[None, :]).ravel()
    a1 = np.repeat(0.5 * wt * (2 * math.pi / nth), nth)
    mesh_w = np.meshgrid(*([w1] * r), indexing="ij")
    mesh_a = np.meshgrid(*([a1] * r), indexing="ij")
    W = np.stack([m.ravel() for m in mesh_w], axis=-1)
    A = np.prod(np.stack([m.ravel() for m in mesh_a], axis=-1), axis=-1)
    charts = []
    targets = range(r + 1) if scheme == "partition" else [chart]
    for B in targets:
        nodes = ChartNodes(B, W.copy(), A.copy())
        if scheme == "partition":
            Z = FiberGrid(r, resolution, (), scheme).homogeneous(nodes)
            # interior GL nodes never tie, but keep the indicator explicit
            nodes = ChartNodes(B, W.copy(), A * partition_weight(Z, B))
        charts.append(nodes)
    return FiberGrid(r, resolution, tuple(charts), scheme)


def raw_fs_volume(r: int) -> float:
    """``int_{P^r} omega_FS^r / r! = (2 pi)^r / r!``."""
    return (2 * math.pi) ** r / math.factorial(r)


def density_factor(r: int, normalized: bool) -> float:
    """Factor turning ``det(fiber Hessian) dA`` into the measure."""
    if normalized:
        return _volume_scale * math.factorial(r) / math.pi**r
    return _volume_scale * 2.0**r


def fiber_densities(weight, z, grid: FiberGrid, normalized: bool = True) -> list:
    """Per-chart measure weights ``density * area`` at fixed base point ``z``."""
    z = np.asarray(z, dtype=complex).reshape(weight.n)
    zs = [z[k] for k in range(weight.n)]
    out = []
    fac = density_factor(grid.r, normalized)
    for c in grid.charts:
        if grid.r == 0:
            out.append(c.area.astype(float))
            continue
        B = c.chart
        keep = c.area > 0
        dens = np.zeros(len(c.area))
        if np.any(keep):
            j = dual_jet2(lambda v: weight.phi(zs, v, B), c.w[keep])
            g = 0.5 * (j.dd + np.conj(np.swapaxes(j.dd, -1, -2)))
            det = np.real(np.linalg.det(g))
            if np.any(~(det > 0)):
                bad = int(np.flatnonzero(~(det > 0))[0])
                node = c.w[keep][bad]
                raise DegenerateMetricError(
                    f"fiber Hessian is not positive at chart {B} node w={node.tolist()} (det {det[bad]:.3e})"
                )
            dens[keep] = det
        out.append(fac * dens * c.area)
    return out


def integrate_fiber(f: Callable, weight, z, grid: FiberGrid, normalized: bool = True, densities=None):
    """``int f dmu`` over the fiber at ``z``.

    ``f(Z, w, chart)`` receives homogeneous coordinates ``Z`` (shape
    ``(M, r+1)``, ``Z_chart = 1``), the affine ``w`` and the chart index, and
    returns values of shape ``(M,) + out``.  ``f`` must be a global function
    (invariant under the chart change).
    """
    dens = fiber_densities(weight, z, grid, normalized) if densities is None else densities
    total = None
    for c, d in zip(grid.charts, dens):
        keep = d != 0
        if not np.any(keep):
            continue
        Z = grid.homogeneous(c)[keep]
        vals = np.asarray(f(Z, c.w[keep], c.chart))
        part = np.tensordot(d[keep], vals, axes=(0, 0))
        total = part if total is None else total + part
    return total


def fiber_volume(weight, z, grid: FiberGrid, normalized: bool = True) -> float:
    return float(np.real(integrate_fiber(lambda Z, w, B: np.ones(len(Z)), weight, z, grid, normalized)))


# --------------------------------------------------------------------- moments


def fs_weight(r: int):
    """The Fubini-Study chart weight ``log |Z|^2`` (no base dependence)."""
    from .finsler import ChartWeight

    return ChartWeight(1, r, 0, lambda zs, Zs: sum(Zk * jconj(Zk) for Zk in Zs), True, "fubini-study")


def _check_pattern(r: int, pattern: Sequence[int]) -> tuple:
    pat = tuple(int(p) for p in pattern)
    if len(pat) not in (2, 4):
        raise InputError("moment pattern must have 2 or 4 indices")
    if any(not 0 <= p <= r for p in pat):
        raise InputError(f"moment indices must lie in 0..{r}")
    return pat


def fs_moment_exact(r: int, pattern: Sequence[int]) -> float:
    """Closed form of the unit-mass Fubini-Study moments.

    ``(a, b)``: ``delta_ab / (r + 1)``; ``(a, b, s, t)`` for
    ``Z_a conj(Z_b) Z_s conj(Z_t) / |Z|^4``:
    ``(delta_ab delta_st + delta_at delta_sb) / ((r + 1)(r + 2))``.
    """
    pat = _check_pattern(r, pattern)
    if len(pat) == 2:
        a, b = pat
        return float(a == b) / (r + 1)
    a, b, s, t = pat
    return (float(a == b and s == t) + float(a == t and s == b)) / ((r + 1) * (r + 2))


def fs_moment(r: int, pattern: Sequence[int], grid: Optional[FiberGrid] = None, unitary=None, normalized: bool = True) -> complex:
    """Quadrature value of a Fubini-Study moment (see :func:`fs_moment_exact`).

    ``unitary`` optionally replaces ``Z`` by ``U Z`` inside the integrand.
    """
    pat = _check_pattern(r, pattern)
    grid = build_grid(r, 64 if r == 1 else 32) if grid is None else grid
    U = None if unitary is None else np.asarray(unitary, dtype=complex)

    def f(Z, w, B):
        Y = Z if U is None else Z @ U.T
        q = np.sum(np.abs(Z) ** 2, axis=-1)
        if len(pat) == 2:
            a, b = pat
            return Y[:, a] * np.conj(Y[:, b]) / q
        a, b, s, t = pat
        return Y[:, a] * np.conj(Y[:, b]) * Y[:, s] * np.conj(Y[:, t]) / q**2

    return complex(integrate_fiber(f, fs_weight(r), np.zeros(1), grid, normalized))


def fs_moment_tables(r: int, grid: Optional[FiberGrid] = None, normalized: bool = True) -> tuple:
    """All second and fourth Fubini-Study moments from one quadrature pass.

    Returns ``(M2, M4)`` with ``M2[a, b]`` and ``M4[a, b, s, t]`` indexed as
    in :func:`fs_moment`.
    """
    if r not in SUPPORTED_R:
        raise CapabilityError(f"fiber dimension r={r} is not supported (0..3)")
    grid = build_grid(r, 64 if r == 1 else 32) if grid is None else grid

    def f(Z, w, B):
        U = Z / np.sqrt(np.sum(np.abs(Z) ** 2, axis=-1, keepdims=True))
        P = U[:, :, None] * np.conj(U[:, None, :])
        return np.concatenate([P.reshape(len(Z), -1), np.einsum("mab,mst->mabst", P, P).reshape(len(Z), -1)], axis=1)

    R = r + 1
    flat = np.asarray(integrate_fiber(f, fs_weight(r), np.zeros(1), grid, normalized))
    return flat[: R * R].reshape(R, R), flat[R * R :].reshape(R, R, R, R)
