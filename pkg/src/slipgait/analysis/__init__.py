"""Stability analysis, gait fitting and summary reporting."""
from .gait_fit import GaitTargets, fit_nominal_gait, fit_residual, nominal_speed
from .poincare import (
    PoincareContext,
    PoincareResult,
    find_fixed_point,
    linearize_poincare,
    nominal_section_point,
    poincare_map,
)
from .summary import ROW_LABELS, Summary, summarize
from .transverse import TransverseSpec, analytic_eigenvalues, transverse_matrix

__all__ = [
    "GaitTargets", "fit_nominal_gait", "fit_residual", "nominal_speed",
    "PoincareContext", "PoincareResult", "find_fixed_point", "linearize_poincare",
    "nominal_section_point", "poincare_map",
    "ROW_LABELS", "Summary", "summarize",
    "TransverseSpec", "analytic_eigenvalues", "transverse_matrix",
]
