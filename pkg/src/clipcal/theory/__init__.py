"""Closed-form and numerical entropy analysis of feature clipping."""

from .entropy import (
    DegenerateClipWarning,
    DerivativeMethod,
    FeatureModel,
    TheoryParams,
    TheoryPoint,
    clipped_entropy,
    d_delta_h_d_sigma,
    delta_h,
    half_normal_entropy,
    half_normal_pdf,
    rectified_entropy,
    theory_point,
    trunc_normal_entropy,
    trunc_normal_pdf,
)
from .quadrature import adaptive_simpson
from .report import (
    compare_derivatives,
    curves_to_csv,
    emit_theory_curves,
    scan_derivative_sign,
    scan_monotonicity,
)
from .special import Phi, erf, erfc, normal_upper_tail, phi

__all__ = [
    "DegenerateClipWarning",
    "DerivativeMethod",
    "FeatureModel",
    "TheoryParams",
    "TheoryPoint",
    "Phi",
    "adaptive_simpson",
    "clipped_entropy",
    "compare_derivatives",
    "curves_to_csv",
    "d_delta_h_d_sigma",
    "delta_h",
    "emit_theory_curves",
    "erf",
    "erfc",
    "half_normal_entropy",
    "half_normal_pdf",
    "normal_upper_tail",
    "phi",
    "rectified_entropy",
    "scan_derivative_sign",
    "scan_monotonicity",
    "theory_point",
    "trunc_normal_entropy",
    "trunc_normal_pdf",
]
