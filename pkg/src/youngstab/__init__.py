"""Numerical laboratory for the sharp twisted trilinear inequality.

Gaussian-polynomial data, closed-form and quadrature evaluation of the
convolution-type trilinear functional, the symmetry group acting on triples,
second-order expansion tools, and batch experiments with a CLI.
"""

from .core import (
    AttachedParams,
    ExponentTriple,
    HPoint,
    group_mul,
    optimal_constant,
    symplectic,
    standard_gaussians,
    symplectic_defect_norm,
    symplectic_matrix,
)
from .expansion import (
    BalanceConfig,
    BalanceResult,
    HermiteSystem,
    SharpFlatSplit,
    balance,
    hermite_mode,
    hermite_system,
    orthogonality_index_set,
    orthogonality_residuals,
    sharp_flat_split,
    tdoubleprime,
    tdoubleprime_gaussian_expansion,
    tprime,
    tprime_gaussian_expansion,
)
from .gausspoly import (
    GaussianPolynomial,
    GaussTerm,
    integrate,
    lp_norm_closed,
    product,
    trilinear_closed,
)
from .labcli import (
    ExperimentConfig,
    ExponentFit,
    exponent_fit_experiment,
    lambda_family,
    lambda_family_experiment,
    main,
    verify_suite,
)
from .quadrature import (
    EvaluableFunction,
    QuadratureScheme,
    deficit,
    deficit_result,
    lp_norm,
    lp_norm_gausspoly,
    phi_gausspoly,
    trilinear_quadrature,
)
from .symmetry import (
    Dilate,
    DistanceConfig,
    DistanceReport,
    GlAction,
    ModulateFull,
    ModulateX,
    Scale,
    Shear,
    SpAction,
    SymmetryWord,
    TranslateMod,
    apply,
    invariance_residual,
    normalize_entry,
    orbit_distance_upper,
)

__all__ = [
    "AttachedParams",
    "BalanceConfig",
    "BalanceResult",
    "Dilate",
    "DistanceConfig",
    "DistanceReport",
    "EvaluableFunction",
    "ExperimentConfig",
    "ExponentFit",
    "ExponentTriple",
    "GaussTerm",
    "GaussianPolynomial",
    "GlAction",
    "HPoint",
    "HermiteSystem",
    "ModulateFull",
    "ModulateX",
    "QuadratureScheme",
    "Scale",
    "SharpFlatSplit",
    "Shear",
    "SpAction",
    "SymmetryWord",
    "TranslateMod",
    "apply",
    "balance",
    "deficit",
    "deficit_result",
    "exponent_fit_experiment",
    "group_mul",
    "hermite_mode",
    "hermite_system",
    "integrate",
    "invariance_residual",
    "lambda_family",
    "lambda_family_experiment",
    "lp_norm",
    "lp_norm_closed",
    "lp_norm_gausspoly",
    "main",
    "normalize_entry",
    "optimal_constant",
    "orbit_distance_upper",
    "orthogonality_index_set",
    "orthogonality_residuals",
    "phi_gausspoly",
    "product",
    "sharp_flat_split",
    "symplectic",
    "standard_gaussians",
    "symplectic_defect_norm",
    "symplectic_matrix",
    "tdoubleprime",
    "tdoubleprime_gaussian_expansion",
    "tprime",
    "tprime_gaussian_expansion",
    "trilinear_closed",
    "trilinear_quadrature",
    "verify_suite",
]
