"""Comparators: complete-case analysis, type B multiple imputation, bootstrap."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .augment import draw_uniforms, fit_gamma
from .core import _fit_family
from .exceptions import BootstrapError, ConfigurationError, PeeeError
from .formula import build_design, parse_formula, response_vector, spline_bases_for

MIN_SUCCESS_FRACTION = 0.95


@dataclass(eq=False)
class BootstrapResult:
    replicate_estimates: np.ndarray
    se: np.ndarray
    B: int
    failures: int


def complete_case_fit(table, analysis_formula, family):
    """Fit the analysis model on rows whose incomplete column is observed."""
    formula = parse_formula(analysis_formula)
    sub = table.take(np.flatnonzero(~table.mask))
    design = build_design(formula, sub, spline_bases=spline_bases_for(formula, sub))
    y = response_vector(formula, sub)
    return _fit_family(family, design.values, y, np.ones(sub.n), design.column_names)


def stack_imputations(table, gamma_fit, S, rng=None, *, uniforms=None, moment_plan=None):
    """S completed copies of ``table`` stacked copy-major (``n * S`` rows).

    Draws use the same uniforms, consumed in the same order, as
    :func:`~peee.augment.augment_monte_carlo`, so a shared generator state
    yields identical imputations.

    Returns
    -------
    stacked : ObservationTable
    weights : ndarray
        ``1/S`` for every row.
    """
    if uniforms is None:
        if rng is None:
            raise ConfigurationError("imputation needs an rng or uniforms")
        uniforms = draw_uniforms(table, S, rng)
    n = table.n
    column = gamma_fit.column
    mask = table.mask
    W = gamma_fit.design.values[mask]
    copies = []
    for j in range(S):
        x = np.array(table[column])
        if mask.any():
            x[mask] = gamma_fit.quantile(gamma_fit.coefficients, W, uniforms[mask, j])
        copies.append(x)
    stacked = table.take(np.tile(np.arange(n), S), relabel=True)
    x = np.concatenate(copies)
    derived = {}
    for name, moment in (moment_plan or {}).items():
        if moment != "square":
            raise ConfigurationError(f"unknown moment {moment!r}")
        derived[name] = x ** 2
    stacked = stacked.with_columns(**{column: x}, **derived)
    return stacked, np.full(n * S, 1.0 / S)


def mib_fit(table, analysis_formula, family, incomplete_spec, S, rng=None, *, uniforms=None):
    """Type B multiple imputation: one weighted fit on S stacked imputed copies."""
    formula = parse_formula(analysis_formula)
    gamma_fit = fit_gamma(table, incomplete_spec.formula, incomplete_spec.kind)
    if gamma_fit.kind == "linear-mean":
        raise ConfigurationError("imputation draws need kind 'linear-mean+variance'")
    stacked, weights = stack_imputations(table, gamma_fit, S, rng, uniforms=uniforms,
                                         moment_plan=incomplete_spec.moment_plan)
    design = build_design(formula, stacked, spline_bases=spline_bases_for(formula, table))
    y = response_vector(formula, stacked)
    return _fit_family(family, design.values, y, weights, design.column_names)


def bootstrap_variance(table, estimator, B, rng, *, threads=1, pass_rng=False):
    """Subject-level nonparametric bootstrap of a full estimation pipeline.

    Parameters
    ----------
    table : ObservationTable
    estimator : callable
        ``estimator(table)`` (or ``estimator(table, rng)`` with ``pass_rng``)
        returning the parameter vector.
    B : int
        Number of replicates, at least 2.
    rng : numpy.random.Generator
        Parent stream; each replicate gets its own spawned child.
    """
    if B < 2:
        raise ConfigurationError("bootstrap needs B >= 2")
    n = table.n
    children = rng.spawn(B)

    def one(child):
        idx = child.integers(0, n, n)
        sample = table.take(idx, relabel=True)
        try:
            est = estimator(sample, child) if pass_rng else estimator(sample)
        except (PeeeError, np.linalg.LinAlgError, FloatingPointError):
            return None
        return np.asarray(est, dtype=float)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, children))
    else:
        results = [one(c) for c in children]
    ok = [r for r in results if r is not None]
    failures = B - len(ok)
    if len(ok) < max(2, math.ceil(MIN_SUCCESS_FRACTION * B)):
        raise BootstrapError(f"{failures} of {B} bootstrap replicates failed")
    if failures:
        warnings.warn(f"{failures} of {B} bootstrap replicates failed and were excluded",
                      RuntimeWarning, stacklevel=2)
    est = np.vstack(ok)
    return BootstrapResult(replicate_estimates=est, se=est.std(axis=0, ddof=1), B=B,
                           failures=failures)
