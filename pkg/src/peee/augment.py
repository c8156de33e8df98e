"""First-stage fits for the incomplete column and pseudo-record expansion.

Three expansion regimes are supported:

``linear-moment``
    one row per incomplete subject carrying the conditional mean (and, on
    request, conditional second moments in derived columns);
``discrete``
    one row per level of a categorical column, weighted by its fitted
    conditional probability;
``monte-carlo``
    ``S`` rows per incomplete subject carrying inverse-CDF draws at frozen
    uniforms, each weighted ``1/S``.

Complete subjects always keep their single row with weight 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .exceptions import (ConfigurationError, NumericalError, SchemaError,
                         UnsupportedRegimeError)
from .formula import build_design, parse_formula
from .glm import (fit_multinomial_logit, fit_weighted_linear,
                  multinomial_score_contributions, predict_multinomial)

KINDS = ("multinomial", "linear-mean", "linear-mean+variance")
REGIMES = ("linear-moment", "discrete", "monte-carlo")


@dataclass(eq=False)
class GammaFit:
    """Fitted model for the incomplete column given the fully observed ones.

    ``coefficients`` is the flattened parameter vector. For the multinomial
    kind it stacks the coefficient rows of levels 2..K; for
    ``linear-mean+variance`` the residual variance is the last entry.
    ``scores`` holds per-subject estimating-function contributions (zero
    for incomplete subjects) and ``inv_information`` the inverse of minus
    their summed Jacobian, so that ``n * inv_information @ U_i`` is the
    influence of subject i.
    """

    kind: str
    formula: object
    column: str
    coefficients: np.ndarray
    vcov: np.ndarray
    scores: np.ndarray
    inv_information: np.ndarray
    design: object
    n_levels: int | None = None
    fit: object = None

    @property
    def q(self):
        return self.coefficients.shape[0]

    @property
    def has_variance(self):
        return self.kind == "linear-mean+variance"

    def influence(self):
        n = self.scores.shape[0]
        return n * self.scores @ self.inv_information.T

    def _beta(self, gamma):
        return gamma[:-1] if self.has_variance else gamma

    def mean(self, gamma, W):
        if self.kind == "multinomial":
            raise ConfigurationError("conditional mean of a categorical column is undefined")
        return W @ self._beta(np.asarray(gamma))

    def variance(self, gamma):
        if not self.has_variance:
            raise ConfigurationError(f"{self.kind!r} model carries no variance parameter")
        return float(gamma[-1])

    def probabilities(self, gamma, W):
        q_w = W.shape[1]
        return predict_multinomial(np.asarray(gamma).reshape(-1, q_w), W)

    def quantile(self, gamma, W, u):
        """Inverse conditional CDF at uniforms ``u`` (one per row of ``W``)."""
        if self.kind == "multinomial":
            cdf = np.cumsum(self.probabilities(gamma, W), axis=1)
            level = (u[:, None] > cdf[:, :-1]).sum(axis=1) + 1
            return level.astype(float)
        if not self.has_variance:
            raise UnsupportedRegimeError(
                "linear-mean model specifies no full conditional distribution; "
                "use kind 'linear-mean+variance' for Monte Carlo draws")
        return self.mean(gamma, W) + np.sqrt(self.variance(gamma)) * ndtri(u)


def fit_gamma(table, formula, kind):
    """Fit the incomplete-column model on complete cases.

    Parameters
    ----------
    table : ObservationTable
    formula : str or Formula
        Response is the incomplete column; terms are fully observed columns.
    kind : {"multinomial", "linear-mean", "linear-mean+variance"}
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown incomplete-model kind {kind!r}")
    formula = parse_formula(formula)
    column = formula.response
    if table.incomplete is not None and column != table.incomplete:
        raise SchemaError(f"model response {column!r} is not the incomplete column "
                          f"{table.incomplete!r}")
    if column not in table:
        raise SchemaError(f"unknown column {column!r}")
    design = build_design(formula, table)
    W = design.values
    n = table.n
    obs = ~np.isnan(table[column])
    y = table[column]

    if kind == "multinomial":
        if not table.is_categorical(column):
            raise ConfigurationError(f"multinomial model needs a categorical column, got {column!r}")
        K = table.n_levels(column)
        fit = fit_multinomial_logit(W[obs], y[obs], n_levels=K, column_names=design.column_names)
        scores = multinomial_score_contributions(fit, W, np.where(obs, y, 1.0), obs)
        return GammaFit(kind, formula, column, fit.flat.copy(), fit.vcov, scores, fit.vcov,
                        design, n_levels=K, fit=fit)

    fit = fit_weighted_linear(W[obs], y[obs], column_names=design.column_names)
    beta = fit.coefficients
    resid = np.where(obs, np.where(obs, y, 0.0) - W @ beta, 0.0)
    scores = resid[:, None] * W
    if kind == "linear-mean":
        return GammaFit(kind, formula, column, beta.copy(), fit.naive_vcov, scores, fit.bread,
                        design, fit=fit)
    m_obs = int(obs.sum())
    eta2 = float(np.sum(resid[obs] ** 2) / m_obs)
    var_scores = np.where(obs, resid ** 2 - eta2, 0.0)
    q = W.shape[1]
    inv_info = np.zeros((q + 1, q + 1))
    inv_info[:q, :q] = fit.bread
    inv_info[q, q] = 1.0 / m_obs
    vcov = np.zeros((q + 1, q + 1))
    vcov[:q, :q] = fit.naive_vcov
    vcov[q, q] = float(np.var(resid[obs] ** 2)) / m_obs
    return GammaFit(kind, formula, column, np.append(beta, eta2), vcov,
                    np.column_stack([scores, var_scores]), inv_info, design, fit=fit)


@dataclass(eq=False)
class AugmentedTable:
    """Pseudo-complete weighted dataset.

    ``table`` holds one row per pseudo-record with the incomplete column
    filled in (plus derived moment columns); ``subject_id`` and
    ``source_row`` map each pseudo-record back to its subject.
    """

    table: object
    weights: np.ndarray
    subject_id: np.ndarray
    source_row: np.ndarray
    observed: np.ndarray
    regime: str
    column: str
    n_subjects: int
    S: int | None = None
    level: np.ndarray | None = None
    draw_uniforms: np.ndarray | None = None
    moment_plan: dict = field(default_factory=dict)

    @property
    def n_rows(self):
        return self.weights.shape[0]

    @property
    def incomplete_rows(self):
        return np.flatnonzero(self.observed == 0)

    def pseudo_values(self, gamma_fit, gamma, rows=None):
        """Values and weights of incomplete pseudo-records at parameter ``gamma``.

        Returns
        -------
        values : dict
            Column name to values for ``rows`` (the incomplete column and any
            derived moment columns).
        weights : ndarray
        """
        rows = self.incomplete_rows if rows is None else rows
        gamma = np.asarray(gamma, dtype=float)
        W = gamma_fit.design.values[self.source_row[rows]]
        if self.regime == "linear-moment":
            mean = gamma_fit.mean(gamma, W)
            values = {self.column: mean}
            for name, moment in self.moment_plan.items():
                values[name] = _moment(moment, mean, gamma_fit, gamma)
            return values, np.ones(rows.shape[0])
        if self.regime == "discrete":
            P = gamma_fit.probabilities(gamma, W)
            level = self.level[rows]
            weights = P[np.arange(rows.shape[0]), level.astype(np.int64) - 1]
            if not np.all(np.isfinite(weights)):
                raise NumericalError("non-finite predicted probability")
            return {self.column: level}, weights
        draws = gamma_fit.quantile(gamma, W, self.draw_uniforms[rows])
        values = {self.column: draws}
        for name, moment in self.moment_plan.items():
            values[name] = _moment_draw(moment, draws)
        return values, np.full(rows.shape[0], 1.0 / self.S)


def _moment(moment, mean, gamma_fit, gamma):
    if moment != "square":
        raise ConfigurationError(f"unknown moment {moment!r}")
    return mean ** 2 + gamma_fit.variance(gamma)


def _moment_draw(moment, draws):
    if moment != "square":
        raise ConfigurationError(f"unknown moment {moment!r}")
    return draws ** 2


def _expand(table, gamma_fit, regime, counts, moment_plan=None, S=None, uniforms=None):
    n = table.n
    column = gamma_fit.column
    obs = ~table.mask if table.incomplete is not None else np.ones(n, dtype=bool)
    source = np.repeat(np.arange(n), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    within = np.arange(source.shape[0]) - starts
    observed = obs[source].astype(np.int64)
    pseudo = table.take(source, relabel=True)
    moment_plan = dict(moment_plan or {})
    aug = AugmentedTable(
        table=pseudo, weights=np.ones(source.shape[0]), subject_id=table.subject_id[source],
        source_row=source, observed=observed, regime=regime, column=column, n_subjects=n,
        S=S, moment_plan=moment_plan)
    if regime == "discrete":
        aug.level = np.where(observed == 1, pseudo[column], within + 1.0)
    if regime == "monte-carlo":
        u = np.full(source.shape[0], np.nan)
        inc = observed == 0
        u[inc] = uniforms[source[inc], within[inc]]
        aug.draw_uniforms = u

    x = np.array(pseudo[column])
    complete_x = x[observed == 1]
    derived = {}
    for name, moment in moment_plan.items():
        if name in table:
            raise ConfigurationError(f"derived moment column {name!r} already exists")
        col = np.full(source.shape[0], np.nan)
        col[observed == 1] = _moment_draw(moment, complete_x)
        derived[name] = col
    rows = aug.incomplete_rows
    if rows.size:
        values, weights = aug.pseudo_values(gamma_fit, gamma_fit.coefficients, rows)
        x[rows] = values[column]
        for name in moment_plan:
            derived[name][rows] = values[name]
        aug.weights[rows] = weights
    aug.table = pseudo.with_columns(**{column: x}, **derived)
    return aug


def augment_linear_moment(table, gamma_fit, moment_plan=None):
    """Single deterministic imputation by the conditional mean.

    ``moment_plan`` maps a new derived column name to ``"square"``; that
    column holds ``x**2`` for complete rows and ``E[x**2 | W]`` (mean
    squared plus residual variance) for incomplete ones.
    """
    if gamma_fit.kind == "multinomial":
        raise UnsupportedRegimeError("linear-moment expansion needs a linear-mean model")
    if moment_plan and not gamma_fit.has_variance:
        raise ConfigurationError("second moments need a 'linear-mean+variance' model")
    counts = np.ones(table.n, dtype=np.int64)
    return _expand(table, gamma_fit, "linear-moment", counts, moment_plan)


def augment_discrete(table, gamma_fit, levels=None):
    """K pseudo-records per incomplete subject weighted by fitted probabilities."""
    if gamma_fit.kind != "multinomial":
        raise UnsupportedRegimeError("discrete expansion needs a multinomial model")
    K = gamma_fit.n_levels
    if levels is not None and int(levels) != K:
        raise ConfigurationError(f"level count {levels} does not match fitted model ({K})")
    counts = np.where(table.mask, K, 1).astype(np.int64)
    return _expand(table, gamma_fit, "discrete", counts)


def draw_uniforms(table, S, rng):
    """The ``m x S`` uniform matrix consumed by Monte Carlo expansion (rows in subject order)."""
    m = int(table.mask.sum())
    full = np.full((table.n, S), np.nan)
    full[table.mask] = rng.random((m, S))
    return full


def augment_monte_carlo(table, gamma_fit, S, rng=None, *, uniforms=None, moment_plan=None,
                        force=False):
    """S inverse-CDF draws per incomplete subject, each with weight ``1/S``.

    Parameters
    ----------
    rng : numpy.random.Generator, optional
        Source of the uniforms; ignored when ``uniforms`` (``n x S``, as from
        :func:`draw_uniforms`) is given.
    force : bool
        Allow Monte Carlo expansion of a categorical column, for which the
        exact ``discrete`` regime is normally preferred.
    """
    if S < 1:
        raise ConfigurationError("S must be >= 1")
    if gamma_fit.kind == "multinomial" and not force:
        raise UnsupportedRegimeError(
            "categorical column: use the exact discrete expansion (or force=True)")
    if gamma_fit.kind == "linear-mean":
        raise UnsupportedRegimeError(
            "linear-mean model has no invertible conditional CDF; "
            "use kind 'linear-mean+variance'")
    if uniforms is None:
        if rng is None:
            raise ConfigurationError("monte-carlo expansion needs an rng or uniforms")
        uniforms = draw_uniforms(table, S, rng)
    counts = np.where(table.mask, S, 1).astype(np.int64)
    return _expand(table, gamma_fit, "monte-carlo", counts, moment_plan, S=S, uniforms=uniforms)
