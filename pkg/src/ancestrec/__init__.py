"""Higher-genus ancestor correlators of A_n singularities.

Residue recursion at semisimple points, a quantization oracle, and a
contour kernel that survives the collision of critical values.
"""

__version__ = "0.1.0"

from .frobenius import AnModel, CanonicalFrame, CausticError, build_model, canonical_frame
from .localdata import LocalExpansion, a1_period, propagator_diag, v_matrices
from .quantization import ancestor_via_quantization, dvv_intersection, witten_correlator
from .recursion import CorrelatorTable, build_table, eo_step
from .rmatrix import RMatrix, compute_r, saddle_expansion, verify_r
from .series import ComplexPolynomial, MatrixSeriesZ, PuiseuxSeries, poly_roots, puiseux_arith, puiseux_residue

__all__ = [
    "__version__",
    "AnModel",
    "CanonicalFrame",
    "CausticError",
    "build_model",
    "canonical_frame",
    "LocalExpansion",
    "a1_period",
    "propagator_diag",
    "v_matrices",
    "ancestor_via_quantization",
    "dvv_intersection",
    "witten_correlator",
    "CorrelatorTable",
    "build_table",
    "eo_step",
    "RMatrix",
    "compute_r",
    "saddle_expansion",
    "verify_r",
    "ComplexPolynomial",
    "MatrixSeriesZ",
    "PuiseuxSeries",
    "poly_roots",
    "puiseux_arith",
    "puiseux_residue",
]
