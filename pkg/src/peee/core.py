"""Two-stage pseudo-expected estimating equations and their sandwich variance.

Stage one fits a model for the incomplete column on complete cases; stage
two expands incomplete subjects into weighted pseudo-records and solves the
weighted complete-data estimating equation. The variance of the second
stage estimate accounts for the first stage through a correction matrix
(the derivative of the incomplete subjects' expected score with respect to
the first-stage parameter) applied to the first-stage influence functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit

from .augment import (REGIMES, augment_discrete, augment_linear_moment,
                      augment_monte_carlo, fit_gamma)
from .exceptions import ConfigurationError, NumericalError, StateError
from .formula import build_design, parse_formula, response_vector, spline_bases_for
from .glm import collapse_rows, fit_weighted_linear, fit_weighted_logistic
from .numdiff import JacobianConfig, jacobian_fd

FAMILIES = ("logistic", "linear")


@dataclass(frozen=True)
class IncompleteSpec:
    """How to model and expand the incomplete column.

    Attributes
    ----------
    formula : str
        First-stage model, e.g. ``"z2 ~ z1 + y + a"``.
    kind : {"multinomial", "linear-mean", "linear-mean+variance"}
    regime : {"linear-moment", "discrete", "monte-carlo"}
    S : int, optional
        Draws per incomplete subject (monte-carlo only).
    moment_plan : mapping, optional
        Derived second-moment columns, see
        :func:`~peee.augment.augment_linear_moment`.
    force : bool
        Permit monte-carlo expansion of a categorical column.
    """

    formula: str
    kind: str = "multinomial"
    regime: str = "discrete"
    S: int | None = None
    moment_plan: Mapping[str, str] = field(default_factory=dict)
    force: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.regime == "monte-carlo" and (self.S is None or self.S < 1):
            raise ConfigurationError("monte-carlo regime needs S >= 1")


@dataclass(eq=False)
class PeeeFit:
    theta_hat: np.ndarray
    gamma_fit: object
    augmented: object
    analysis_fit: object
    regime: str
    n_subjects: int
    formula: object
    family: str
    design: object

    @property
    def column_names(self):
        return self.design.column_names

    @property
    def m(self):
        aug = self.augmented
        return int(np.unique(aug.source_row[aug.observed == 0]).size)


@dataclass(eq=False)
class SandwichComponents:
    psi_dot_inv: np.ndarray
    subject_scores: np.ndarray
    correction: np.ndarray
    omega_hat: np.ndarray
    gamma_inv_information: np.ndarray
    gamma_scores: np.ndarray

    def covariance(self):
        n = self.subject_scores.shape[0]
        corrected = self.subject_scores + self.omega_hat @ self.correction.T
        meat = corrected.T @ corrected / n
        omega = self.psi_dot_inv @ meat @ self.psi_dot_inv
        v = omega / n
        return 0.5 * (v + v.T)


def _fit_family(family, X, y, w, names):
    if family == "logistic":
        return fit_weighted_logistic(X, y, w, column_names=names)
    if family == "linear":
        return fit_weighted_linear(X, y, w, column_names=names)
    raise ConfigurationError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _row_psi(family, theta, X, y):
    eta = X @ theta
    resid = y - (expit(eta) if family == "logistic" else eta)
    return resid[:, None] * X


def _augment(table, spec, gamma_fit, rng, uniforms):
    if spec.regime == "linear-moment":
        return augment_linear_moment(table, gamma_fit, spec.moment_plan)
    if spec.regime == "discrete":
        return augment_discrete(table, gamma_fit)
    return augment_monte_carlo(table, gamma_fit, spec.S, rng, uniforms=uniforms,
                               moment_plan=spec.moment_plan, force=spec.force)


def peee_fit(table, analysis_formula, family, incomplete_spec, rng=None, uniforms=None):
    """Fit the analysis model with the incomplete column handled by PEEE.

    Parameters
    ----------
    table : ObservationTable
    analysis_formula : str or Formula
    family : {"logistic", "linear"}
    incomplete_spec : IncompleteSpec
    rng : numpy.random.Generator, optional
        Needed for the monte-carlo regime unless ``uniforms`` is given.
    uniforms : ndarray (n, S), optional
        Frozen uniforms for the monte-carlo regime.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown family {family!r}; expected one of {FAMILIES}")
    formula = parse_formula(analysis_formula)
    spec = incomplete_spec
    column = parse_formula(spec.formula).response
    referenced = {formula.response, *formula.variables}
    if column not in referenced and not referenced.intersection(spec.moment_plan):
        raise ConfigurationError(f"incomplete column {column!r} does not enter the analysis model")
    if family == "logistic" and formula.response != column:
        y = table[formula.response]
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ConfigurationError("logistic family needs a 0/1 response")

    gamma_fit = fit_gamma(table, spec.formula, spec.kind)
    aug = _augment(table, spec, gamma_fit, rng, uniforms)
    bases = spline_bases_for(formula, table)
    design = build_design(formula, aug.table, spline_bases=bases)
    y = response_vector(formula, aug.table)
    fit = _fit_family(family, design.values, y, aug.weights, design.column_names)
    return PeeeFit(theta_hat=fit.coefficients, gamma_fit=gamma_fit, augmented=aug,
                   analysis_fit=fit, regime=spec.regime, n_subjects=table.n, formula=formula,
                   family=family, design=design)


def collapse_subject_scores(analysis_fit, augmented):
    """Sum the weighted score rows of each subject's pseudo-records (subject order)."""
    if analysis_fit.scores.shape[0] != augmented.n_rows:
        raise StateError("score rows do not align with the augmented table")
    return collapse_rows(analysis_fit.scores, augmented.subject_id)


def _mean_incomplete_score(fit, config=None):
    """Map gamma -> n^-1 sum over incomplete pseudo-records of weight * psi_theta_hat."""
    aug = fit.augmented
    rows = aug.incomplete_rows
    n = fit.n_subjects
    theta = fit.theta_hat
    if aug.regime == "discrete":
        X = fit.design.values[rows]
        y = response_vector(fit.formula, aug.table)[rows]
        psi = _row_psi(fit.family, theta, X, y)

        def f(gamma):
            _, w = aug.pseudo_values(fit.gamma_fit, gamma, rows)
            return w @ psi / n
        return f

    sub = aug.table.take(rows, relabel=True)
    bases = fit.design.spline_bases

    def f(gamma):
        values, w = aug.pseudo_values(fit.gamma_fit, gamma, rows)
        X = build_design(fit.formula, sub, overrides=values, spline_bases=bases).values
        y = response_vector(fit.formula, sub, overrides=values)
        return w @ _row_psi(fit.family, theta, X, y) / n
    return f


def _correction(fit, config):
    d = fit.theta_hat.shape[0]
    q = fit.gamma_fit.q
    if fit.augmented.incomplete_rows.size == 0:
        return np.zeros((d, q))
    return jacobian_fd(_mean_incomplete_score(fit), fit.gamma_fit.coefficients, config)


def compute_g_hat(fit, config=None):
    """Correction matrix (d x q) for the exact-expectation regimes."""
    if fit.regime not in ("linear-moment", "discrete"):
        raise StateError(f"G is defined for exact regimes, not {fit.regime!r}")
    return _correction(fit, config)


def compute_h_hat(fit, config=None):
    """Correction matrix (d x q) for the Monte Carlo regime, uniforms held fixed."""
    if fit.regime != "monte-carlo":
        raise StateError("H is defined for the monte-carlo regime only")
    aug = fit.augmented
    if aug.draw_uniforms is None:
        raise StateError("augmented table has no retained uniforms")
    return _correction(fit, config)


def sandwich_components(fit, config=None):
    psi_dot_inv = fit.n_subjects * fit.analysis_fit.bread
    subject_scores = collapse_subject_scores(fit.analysis_fit, fit.augmented)
    if fit.regime == "monte-carlo":
        correction = compute_h_hat(fit, config)
    else:
        correction = compute_g_hat(fit, config)
    return SandwichComponents(
        psi_dot_inv=psi_dot_inv,
        subject_scores=subject_scores,
        correction=correction,
        omega_hat=fit.gamma_fit.influence(),
        gamma_inv_information=fit.gamma_fit.inv_information,
        gamma_scores=fit.gamma_fit.scores,
    )


def _check_psd(v):
    if not np.all(np.isfinite(v)):
        raise NumericalError("non-finite variance estimate")
    tr = np.trace(v)
    if np.linalg.eigvalsh(v).min() < -1e-10 * max(tr, 1e-300):
        raise NumericalError("variance estimate is not positive semi-definite")
    return v


def _robust(fit):
    scores = collapse_subject_scores(fit.analysis_fit, fit.augmented)
    bread = fit.analysis_fit.bread
    v = bread @ (scores.T @ scores) @ bread
    return 0.5 * (v + v.T)


def variance_closed_form(fit, config: JacobianConfig | None = None):
    """Covariance of the estimate for the linear-moment and discrete regimes."""
    if fit.regime not in ("linear-moment", "discrete"):
        raise StateError("use variance_closed_form_mc for the monte-carlo regime")
    if fit.augmented.incomplete_rows.size == 0:
        return _check_psd(_robust(fit))
    return _check_psd(sandwich_components(fit, config).covariance())


def variance_closed_form_mc(fit, config: JacobianConfig | None = None):
    """Covariance of the Monte Carlo estimate."""
    if fit.regime != "monte-carlo":
        raise StateError("variance_closed_form_mc needs the monte-carlo regime")
    if fit.augmented.incomplete_rows.size == 0:
        return _check_psd(_robust(fit))
    return _check_psd(sandwich_components(fit, config).covariance())


def variance(fit, config=None):
    if fit.regime == "monte-carlo":
        return variance_closed_form_mc(fit, config)
    return variance_closed_form(fit, config)
