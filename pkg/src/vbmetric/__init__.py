"""Numerical toolkit for Hermitian and Finsler metrics on holomorphic vector bundles.

Curvature and positivity of Hermitian metrics, Finsler weights on the
projectivized bundle, Fubini-Study fiber quadrature, the fiberwise L^2
metric, and Lelong/integrability checks for singular weights.
"""

__version__ = "0.1.0"

from .errors import (
    CapabilityError,
    DegenerateMetricError,
    DomainError,
    InputError,
    NumericalError,
    ParseError,
    VBMetricError,
)
from .dsl import Field, parse_field
from .scene import Scene, builtin, load_scene, BUILTINS
from .tensor import CurvatureTensor, Verdict, classify, matrix_verdict
from .wirtinger import Jet2, jet2, dual_jet2, jet_check
from .hermitian import (
    HermitianField,
    chern_curvature,
    dual_field,
    griffiths_verdict,
    nakano_verdict,
    twist_with_det,
)
from .finsler import (
    ChartWeight,
    decomposition_residual,
    fiber_form,
    induced_weight,
    kobayashi_tensor,
)
from .quadrature import build_grid, fiber_volume, fs_moment, fs_moment_exact, fs_moment_tables
from .l2 import l2_metric, roundtrip_check, duality_check, det_pushforward_check
from .vanishing import (
    integrability_classify,
    lelong_estimate,
    symmetric_rank,
    vanishing_report,
    vanishing_threshold,
)

__all__ = [name for name in dir() if not name.startswith("_")]
