"""scikit-learn style estimators wrapping the functional API.

Inputs to ``fit`` are :class:`~peee.tabular.ObservationTable` objects or data
frames with ``NaN`` marking the missing cells of the single incomplete
column. Categorical columns are integer coded ``1..K``.
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import bootstrap_variance, complete_case_fit, mib_fit
from .core import IncompleteSpec, peee_fit, variance
from .formula import build_design, parse_formula
from .validation import check_family, check_random_state, check_table


class _RegressionMixin:
    """Inference helpers shared by the fitted estimators."""

    @property
    def standard_errors_(self):
        check_is_fitted(self, "covariance_")
        return np.sqrt(np.diag(self.covariance_))

    def conf_int(self, alpha=0.05):
        z = stats.norm.ppf(1 - alpha / 2)
        se = self.standard_errors_
        return np.column_stack([self.coef_ - z * se, self.coef_ + z * se])

    def summary(self, alpha=0.05):
        """Rows of (name, estimate, se, lower, upper, p-value[, odds ratio])."""
        ci = self.conf_int(alpha)
        se = self.standard_errors_
        pvals = 2 * stats.norm.sf(np.abs(self.coef_ / se))
        rows = []
        for j, name in enumerate(self.feature_names_):
            row = {"term": name, "estimate": float(self.coef_[j]), "se": float(se[j]),
                   "lower": float(ci[j, 0]), "upper": float(ci[j, 1]),
                   "p_value": float(pvals[j])}
            if self.family == "logistic":
                row["odds_ratio"] = float(np.exp(self.coef_[j]))
                row["or_lower"] = float(np.exp(ci[j, 0]))
                row["or_upper"] = float(np.exp(ci[j, 1]))
            rows.append(row)
        return rows

    def _design(self, X):
        check_is_fitted(self, "coef_")
        table = check_table(X, (self.formula,))
        return build_design(parse_formula(self.formula), table,
                            spline_bases=self.spline_bases_).values

    def decision_function(self, X):
        return self._design(X) @ self.coef_

    def predict(self, X):
        """Fitted mean response (probability for the logistic family)."""
        eta = self.decision_function(X)
        return expit(eta) if self.family == "logistic" else eta


class PEEERegressor(_RegressionMixin, BaseEstimator):
    """Analysis model fitted by pseudo-expected estimating equations.

    Parameters
    ----------
    formula : str
        Analysis model, e.g. ``"y ~ z1 + cat(z2)"``.
    incomplete_formula : str
        Model for the incomplete column given fully observed columns.
    family : {"logistic", "linear"}
    kind : {"multinomial", "linear-mean", "linear-mean+variance"}
    regime : {"discrete", "linear-moment", "monte-carlo"}
    n_imputations : int, optional
        Draws per incomplete subject for the monte-carlo regime.
    moment_plan : dict, optional
    random_state : int or Generator, optional

    Attributes
    ----------
    coef_ : ndarray
    covariance_ : ndarray
        Closed-form sandwich covariance accounting for the first stage.
    fit_ : PeeeFit
    """

    def __init__(self, formula="y ~ x", incomplete_formula=None, family="logistic",
                 kind="multinomial", regime="discrete", n_imputations=None,
                 moment_plan=None, random_state=None):
        self.formula = formula
        self.incomplete_formula = incomplete_formula
        self.family = family
        self.kind = kind
        self.regime = regime
        self.n_imputations = n_imputations
        self.moment_plan = moment_plan
        self.random_state = random_state

    def _spec(self):
        return IncompleteSpec(self.incomplete_formula, self.kind, self.regime,
                              S=self.n_imputations, moment_plan=dict(self.moment_plan or {}))

    def fit(self, X, y=None):
        check_family(self.family)
        table = check_table(X, (self.formula, self.incomplete_formula),
                            categorical=[parse_formula(self.incomplete_formula).response]
                            if self.kind == "multinomial" else ())
        rng = check_random_state(self.random_state) if self.regime == "monte-carlo" else None
        self.fit_ = peee_fit(table, self.formula, self.family, self._spec(), rng=rng)
        self.coef_ = self.fit_.theta_hat
        self.covariance_ = variance(self.fit_)
        self.feature_names_ = self.fit_.column_names
        self.spline_bases_ = self.fit_.design.spline_bases
        self.n_subjects_ = table.n
        return self


class CompleteCaseRegressor(_RegressionMixin, BaseEstimator):
    """Analysis model on complete cases only, with a robust covariance."""

    def __init__(self, formula="y ~ x", family="logistic"):
        self.formula = formula
        self.family = family

    def fit(self, X, y=None):
        check_family(self.family)
        table = check_table(X, (self.formula,))
        fit = complete_case_fit(table, self.formula, self.family)
        self.coef_ = fit.coefficients
        self.covariance_ = fit.robust_vcov()
        self.feature_names_ = fit.column_names
        self.spline_bases_ = {}
        self.fit_ = fit
        return self


class TypeBImputationRegressor(_RegressionMixin, BaseEstimator):
    """Type B multiple imputation with bootstrap standard errors."""

    def __init__(self, formula="y ~ x", incomplete_formula=None, family="logistic",
                 kind="multinomial", n_imputations=10, n_bootstrap=100, random_state=None):
        self.formula = formula
        self.incomplete_formula = incomplete_formula
        self.family = family
        self.kind = kind
        self.n_imputations = n_imputations
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def fit(self, X, y=None):
        check_family(self.family)
        categorical = ([parse_formula(self.incomplete_formula).response]
                       if self.kind == "multinomial" else ())
        table = check_table(X, (self.formula, self.incomplete_formula), categorical=categorical)
        rng = check_random_state(self.random_state)
        spec = IncompleteSpec(self.incomplete_formula, self.kind, "monte-carlo",
                              S=self.n_imputations, force=True)

        def estimate(tbl, r):
            return mib_fit(tbl, self.formula, self.family, spec, self.n_imputations, r)

        fit = estimate(table, rng)
        boot = bootstrap_variance(table, lambda t, r: estimate(t, r).coefficients,
                                  self.n_bootstrap, rng, pass_rng=True)
        self.coef_ = fit.coefficients
        self.covariance_ = np.cov(boot.replicate_estimates, rowvar=False)
        self.feature_names_ = fit.column_names
        self.spline_bases_ = {}
        self.bootstrap_ = boot
        return self
