"""Complex matrix and curvature-tensor arithmetic plus positivity classification.

Curvature tensors are stored as arrays ``T[alpha, beta, i, j]`` of shape
``(r+1, r+1, n, n)``: the first pair indexes the bundle (``alpha``, ``beta-bar``),
the second the base (``i``, ``j-bar``).  A *lowered* tensor is metric-paired,
``T_{alpha beta-bar i j-bar} = H(Theta_{i j-bar} u_alpha, u_beta)``, and has the
pair symmetry ``T[a, b, i, j] == conj(T[b, a, j, i])``.  An *endomorphism* tensor
holds the matrices ``Theta_{i j-bar}`` acting on coordinate columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, NumericalError

DEFAULT_TOL = 1e-8

STRICTLY_POSITIVE = "strictly-positive"
SEMI_POSITIVE = "semi-positive"
INDEFINITE = "indefinite"
SEMI_NEGATIVE = "semi-negative"
STRICTLY_NEGATIVE = "strictly-negative"

# Ordering used by monotonicity checks: larger means "more positive".
CLASS_RANK = {
    STRICTLY_NEGATIVE: 0,
    SEMI_NEGATIVE: 1,
    INDEFINITE: 2,
    SEMI_POSITIVE: 3,
    STRICTLY_POSITIVE: 4,
}


@dataclass(frozen=True)
class Verdict:
    """Positivity classification of a Hermitian form.

    ``min_value``/``max_value`` are the extremal values of the (normalized)
    form, ``witness_min``/``witness_max`` the vectors attaining them.
    """

    cls: str
    min_value: float
    max_value: float
    tol: float
    witness_min: Optional[np.ndarray] = None
    witness_max: Optional[np.ndarray] = None
    scale: float = 1.0
    note: str = ""
    heuristic: bool = False
    restarts: int = 0

    @property
    def extremal(self) -> float:
        if self.cls in (SEMI_NEGATIVE, STRICTLY_NEGATIVE):
            return self.max_value
        return self.min_value

    @property
    def positive(self) -> bool:
        return self.cls in (SEMI_POSITIVE, STRICTLY_POSITIVE)

    @property
    def negative(self) -> bool:
        return self.cls in (SEMI_NEGATIVE, STRICTLY_NEGATIVE) or (
            self.cls == SEMI_POSITIVE and "also semi-negative" in self.note
        )

    def to_dict(self) -> dict:
        out = {
            "class": self.cls,
            "extremal": self.extremal,
            "min": self.min_value,
            "max": self.max_value,
            "tol": self.tol,
            "scale": self.scale,
        }
        if self.witness_min is not None:
            out["witness_min"] = self.witness_min
        if self.witness_max is not None:
            out["witness_max"] = self.witness_max
        if self.note:
            out["note"] = self.note
        if self.heuristic:
            out["heuristic"] = True
            out["restarts"] = self.restarts
        return out


def classify(values: Sequence[float], tol: float = DEFAULT_TOL, **extra) -> Verdict:
    """Classify a real spectrum (or just its extremes) against ``tol``.

    >>> classify([0.5, 2.0]).cls
    'strictly-positive'
    >>> classify([-0.3, 0.7]).cls
    'indefinite'
    """
    if tol <= 0:
        raise InputError("tolerance must be positive")
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise InputError("empty spectrum")
    if not np.all(np.isfinite(vals)):
        raise InputError("non-finite spectrum")
    lo, hi = float(vals.min()), float(vals.max())
    note = extra.pop("note", "")
    if lo > tol:
        cls = STRICTLY_POSITIVE
    elif hi < -tol:
        cls = STRICTLY_NEGATIVE
    elif lo >= -tol and hi > tol:
        cls = SEMI_POSITIVE
    elif hi <= tol and lo < -tol:
        cls = SEMI_NEGATIVE
    elif lo >= -tol and hi <= tol:
        cls = SEMI_POSITIVE
        note = (note + "; " if note else "") + "zero form: also semi-negative"
    else:
        cls = INDEFINITE
    return Verdict(cls=cls, min_value=lo, max_value=hi, tol=tol, note=note, **extra)


def is_hermitian(m: np.ndarray, rtol: float = 1e-12) -> bool:
    m = np.asarray(m)
    scale = max(float(np.max(np.abs(m))), 1.0) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= rtol * scale)


def hermitian_eigen(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix.

    Returns ascending real eigenvalues and a unitary matrix whose columns are
    the corresponding eigenvectors.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InputError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError("matrix has non-finite entries")
    if not is_hermitian(m):
        raise InputError("matrix is not Hermitian within 1e-12 relative")
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"Hermitian eigensolver did not converge: {exc}", iterations=30 * m.shape[0]) from exc
    return vals, vecs


def matrix_verdict(m, tol: float = DEFAULT_TOL, normalize: bool = True, note: str = "") -> Verdict:
    """Eigen-classify a Hermitian matrix, scaled by its max absolute entry."""
    m = np.asarray(m, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    scale = float(np.max(np.abs(m))) if normalize else 1.0
    if scale == 0.0:
        scale = 1.0
    vals, vecs = hermitian_eigen(m / scale)
    return classify(
        vals,
        tol,
        witness_min=vecs[:, 0],
        witness_max=vecs[:, -1],
        scale=scale,
        note=note,
    )


@dataclass(frozen=True)
class CurvatureTensor:
    """4-index curvature tensor ``T[alpha, beta, i, j]``."""

    data: np.ndarray
    lowered: bool = True
    est_error: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 4 or d.shape[0] != d.shape[1] or d.shape[2] != d.shape[3]:
            raise InputError(f"curvature tensor must have shape (R, R, n, n), got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def rank(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[2]

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.data), initial=0.0))

    def pair_symmetry_defect(self) -> float:
        """max |T[a,b,i,j] - conj(T[b,a,j,i])| relative to the tensor scale."""
        d = self.data
        diff = np.max(np.abs(d - np.conj(d.transpose(1, 0, 3, 2))), initial=0.0)
        return float(diff / max(self.scale, 1e-300)) if diff else 0.0

    def hermitian_part(self) -> "CurvatureTensor":
        d = 0.5 * (self.data + np.conj(self.data.transpose(1, 0, 3, 2)))
        return CurvatureTensor(d, self.lowered, self.est_error, dict(self.meta))

    def endomorphism(self, h) -> "CurvatureTensor":
        """Raise the fiber index with the metric matrix ``h`` (entries ``H_{a b-bar}``)."""
        if not self.lowered:
            return self
        h = np.asarray(h, dtype=complex)
        hinv = np.linalg.inv(h)
        # lowered = E^T h  =>  E = (lowered h^-1)^T, per (i, j)
        e = np.einsum("abij,bc->caij", self.data, hinv)
        return CurvatureTensor(e, False, self.est_error, dict(self.meta))

    def lower(self, h) -> "CurvatureTensor":
        """Inverse of :meth:`endomorphism`."""
        if self.lowered:
            return self
        h = np.asarray(h, dtype=complex)
        d = np.einsum("caij,cb->abij", self.data, h)
        return CurvatureTensor(d, True, self.est_error, dict(self.meta))

    def contract(self, s, v) -> complex:
        """sum T[a,b,i,j] s_a conj(s_b) v_i conj(v_j)."""
        s = np.asarray(s, dtype=complex)
        v = np.asarray(v, dtype=complex)
        return complex(np.einsum("abij,a,b,i,j->", self.data, s, s.conj(), v, v.conj()))

    def fiber_contract(self, s) -> np.ndarray:
        """n x n matrix sum_{a,b} T[a,b,i,j] s_a conj(s_b)."""
        s = np.asarray(s, dtype=complex)
        return np.einsum("abij,a,b->ij", self.data, s, s.conj())


def nakano_flatten(T: CurvatureTensor, H) -> np.ndarray:
    """Flatten a curvature tensor into the ``n(r+1)``-dimensional Nakano form.

    The row/column index is ``(alpha, i)`` flattened as ``alpha * n + i``.  With
    ``v[(alpha, i)] = conj(s^i_alpha)`` the quadratic form ``v^* M v`` equals
    ``sum T_{alpha beta-bar i j-bar} s^i_alpha conj(s^j_beta)``, where ``T`` is
    metric-paired with ``H``.  An endomorphism-valued tensor is first lowered
    with ``H``, so for rank one the single entry is ``Theta * H``.
    """
    H = np.asarray(H, dtype=complex)
    R, n = T.rank, T.n
    if H.shape != (R, R):
        raise InputError(f"metric shape {H.shape} does not match tensor rank {R}")
    low = T.lower(H).data
    M = low.transpose(0, 2, 1, 3).reshape(R * n, R * n)
    return 0.5 * (M + M.conj().T)
