"""Pseudo-expected estimating equations for regression with one incomplete covariate."""

__version__ = "0.1.0"

from .augment import (
    AugmentedTable,
    GammaFit,
    augment_discrete,
    augment_linear_moment,
    augment_monte_carlo,
    draw_uniforms,
    fit_gamma,
)
from .baselines import bootstrap_variance, complete_case_fit, mib_fit, stack_imputations
from .core import (
    IncompleteSpec,
    PeeeFit,
    compute_g_hat,
    compute_h_hat,
    peee_fit,
    sandwich_components,
    variance,
    variance_closed_form,
    variance_closed_form_mc,
)
from .estimators import CompleteCaseRegressor, PEEERegressor, TypeBImputationRegressor
from .formula import build_design, parse_formula
from .rng import stream
from .splines import SplineBasis, eval_basis
from .tabular import ObservationTable, Schema, load_csv, missingness_summary, write_csv

__all__ = [
    "AugmentedTable", "GammaFit", "augment_discrete", "augment_linear_moment",
    "augment_monte_carlo", "draw_uniforms", "fit_gamma", "bootstrap_variance",
    "complete_case_fit", "mib_fit", "stack_imputations", "IncompleteSpec", "PeeeFit",
    "compute_g_hat", "compute_h_hat", "peee_fit", "sandwich_components", "variance",
    "variance_closed_form", "variance_closed_form_mc", "CompleteCaseRegressor",
    "PEEERegressor", "TypeBImputationRegressor", "build_design", "parse_formula", "stream",
    "SplineBasis", "eval_basis", "ObservationTable", "Schema", "load_csv",
    "missingness_summary", "write_csv",
]
