"""Weighted linear, logistic and multinomial-logit fits with case weights.

Every fit reports per-row score contributions with the weight folded in,
so the column sums vanish at the solution, and a ``bread`` matrix: the
inverse of minus the summed score Jacobian.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, logsumexp

from .exceptions import (ConfigurationError, ConvergenceError, DegenerateLevelError,
                         SeparationWarning, SingularDesignError)

TOL = 1e-8
MAX_ITER = 100
SEPARATION_BOUND = 30.0
MAX_HALVINGS = 40


@dataclass(eq=False)
class FitResult:
    """Outcome of a weighted fit.

    Attributes
    ----------
    coefficients : ndarray (p,)
    naive_vcov : ndarray (p, p)
        Model-based covariance. For the linear family this is
        ``sigma2 * bread``; for the logistic family it equals ``bread``.
    scores : ndarray (n_rows, p)
        Weighted per-row estimating-function contributions.
    bread : ndarray (p, p)
    deviance : float
        Binomial deviance, or the weighted residual sum of squares for the
        linear family.
    """

    coefficients: np.ndarray
    naive_vcov: np.ndarray
    scores: np.ndarray
    bread: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    family: str
    column_names: tuple = ()
    sigma2: float | None = None
    separation: bool = False
    weights: np.ndarray | None = None
    deviance_path: list = field(default_factory=list)

    @property
    def standard_errors(self):
        return np.sqrt(np.diag(self.naive_vcov))

    def robust_vcov(self, groups=None):
        """Information sandwich, optionally summing scores within ``groups`` first."""
        scores = self.scores
        if groups is not None:
            scores = collapse_rows(scores, groups)
        meat = scores.T @ scores
        v = self.bread @ meat @ self.bread
        return 0.5 * (v + v.T)


@dataclass(eq=False)
class MultinomFit:
    """Multinomial logit with level 1 as reference.

    ``coefficients`` has one row per non-reference level (2..K); the
    flattened parameter vector stacks those rows in order.
    """

    coefficients: np.ndarray
    vcov: np.ndarray
    scores: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    n_levels: int
    column_names: tuple = ()

    @property
    def flat(self):
        return self.coefficients.ravel()


def collapse_rows(rows, groups):
    """Sum rows sharing a group label; output ordered by first appearance."""
    groups = np.asarray(groups)
    _, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    out = np.zeros((order.shape[0],) + rows.shape[1:])
    np.add.at(out, rank[inverse.ravel()], rows)
    return out


def _check_inputs(X, y, weights):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigurationError("design must be 2-d")
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if y.shape != (n,) or w.shape != (n,):
        raise ConfigurationError("design, response and weights must have matching rows")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ConfigurationError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ConfigurationError("all weights are zero")
    pos = w > 0
    if not np.all(np.isfinite(X[pos])) or not np.all(np.isfinite(y[pos])):
        raise ConfigurationError("non-finite values among positively weighted rows")
    return X, y, w


def _check_rank(X, column_names=None):
    p = X.shape[1]
    if p == 0 or np.linalg.matrix_rank(X) == p:
        return
    names = list(column_names) if column_names else [f"x{j}" for j in range(p)]
    kept, dependent = [], []
    for j in range(p):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept = trial
        else:
            dependent.append(names[j])
    raise SingularDesignError(
        "design is rank deficient; linearly dependent columns: " + ", ".join(dependent),
        dependent_columns=dependent)


def _sym_inverse(A):
    try:
        c = linalg.cho_factor(A)
        inv = linalg.cho_solve(c, np.eye(A.shape[0]))
    except linalg.LinAlgError:
        raise SingularDesignError("information matrix is not positive definite") from None
    return 0.5 * (inv + inv.T)


def fit_weighted_linear(X, y, weights=None, column_names=()):
    """Weighted least squares with case weights.

    ``sigma2`` is the weighted SSE over ``sum(w) - p``.
    """
    X, y, w = _check_inputs(X, y, weights)
    _check_rank(X[w > 0], column_names)
    xtwx = X.T @ (w[:, None] * X)
    bread = _sym_inverse(xtwx)
    theta = linalg.cho_solve(linalg.cho_factor(xtwx), X.T @ (w * y))
    resid = y - X @ theta
    sse = float(np.sum(w * resid ** 2))
    df = w.sum() - X.shape[1]
    sigma2 = sse / df if df > 0 else float("nan")
    return FitResult(
        coefficients=theta,
        naive_vcov=sigma2 * bread,
        scores=(w * resid)[:, None] * X,
        bread=bread,
        converged=True,
        iterations=1,
        deviance=sse,
        family="linear",
        column_names=tuple(column_names),
        sigma2=sigma2,
        weights=w,
    )


def _binomial_deviance(eta, y, w):
    # -2 * sum w [y log p + (1 - y) log(1 - p)], overflow-safe
    return 2.0 * float(np.sum(w * (y * np.logaddexp(0.0, -eta) + (1 - y) * np.logaddexp(0.0, eta))))


def fit_weighted_logistic(X, y, weights=None, column_names=(), tol=TOL, max_iter=MAX_ITER,
                          start=None):
    """Logistic regression by Newton-Raphson (IRLS) with step halving.

    Responses may be fractional in [0, 1] (deterministic imputation of a
    binary outcome produces them). Iteration stops once every step satisfies
    ``|delta_j| < tol * max(|theta_j|, 1)``.
    """
    X, y, w = _check_inputs(X, y, weights)
    pos = w > 0
    if np.any((y[pos] < 0) | (y[pos] > 1)):
        raise ConfigurationError("logistic responses must lie in [0, 1]")
    _check_rank(X[pos], column_names)
    theta = np.zeros(X.shape[1]) if start is None else np.asarray(start, dtype=float).copy()
    eta = X @ theta
    dev = _binomial_deviance(eta, y, w)
    path = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = X.T @ (w * (y - p))
        info = X.T @ ((w * p * (1 - p))[:, None] * X)
        try:
            step = linalg.solve(info, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            if np.any(np.abs(theta) > SEPARATION_BOUND):
                break
            raise ConvergenceError("singular information during IRLS", theta, it) from None
        for _ in range(MAX_HALVINGS):
            cand = theta + step
            eta_c = X @ cand
            dev_c = _binomial_deviance(eta_c, y, w)
            if dev_c <= dev * (1 + 1e-12) + 1e-12:
                break
            step = step / 2
        theta, eta, dev = cand, eta_c, dev_c
        path.append(dev)
        if np.all(np.abs(step) < tol * np.maximum(np.abs(theta), 1.0)):
            converged = True
            break
    separation = bool(np.any(np.abs(theta) > SEPARATION_BOUND))
    if not converged and not separation:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", theta, it)
    p = expit(eta)
    info = X.T @ ((w * p * (1 - p))[:, None] * X)
    # under separation the information is (numerically) singular; keep going
    bread = np.linalg.pinv(info, hermitian=True) if separation else _sym_inverse(info)
    if separation:
        warnings.warn("possible separation: a logit coefficient exceeds "
                      f"{SEPARATION_BOUND} in magnitude", SeparationWarning, stacklevel=2)
    return FitResult(
        coefficients=theta,
        naive_vcov=bread,
        scores=(w * (y - p))[:, None] * X,
        bread=bread,
        converged=converged,
        iterations=it,
        deviance=dev,
        family="logistic",
        column_names=tuple(column_names),
        separation=separation,
        weights=w,
        deviance_path=path,
    )


def _softmax_ref(coef, X):
    eta = np.column_stack([np.zeros(X.shape[0]), X @ np.asarray(coef).T])
    return np.exp(eta - logsumexp(eta, axis=1, keepdims=True))


def predict_multinomial(fit, X):
    """Class probabilities ``n x K`` (column k is level k + 1)."""
    coef = fit.coefficients if isinstance(fit, MultinomFit) else np.atleast_2d(fit)
    return _softmax_ref(coef, np.asarray(X, dtype=float))


def _multinom_info(X, P, w):
    Pt = P[:, 1:]
    K1 = Pt.shape[1]
    A = -Pt[:, :, None] * Pt[:, None, :]
    A[:, np.arange(K1), np.arange(K1)] += Pt
    A *= w[:, None, None]
    q = X.shape[1]
    info = np.einsum("ikl,ia,ib->kalb", A, X, X, optimize=True)
    return info.reshape(K1 * q, K1 * q)


def fit_multinomial_logit(X, y, weights=None, n_levels=None, column_names=(), tol=TOL,
                          max_iter=MAX_ITER):
    """Multinomial logit (level 1 reference) by Newton-Raphson.

    Parameters
    ----------
    X : ndarray (n, q)
    y : ndarray (n,)
        Level codes ``1..K``.
    weights : ndarray (n,), optional
    n_levels : int, optional
        ``K``; defaults to the largest code present.
    """
    X, y, w = _check_inputs(X, y, weights)
    pos = w > 0
    codes = y.astype(np.int64)
    if np.any(codes[pos] != y[pos]) or np.any(codes[pos] < 1):
        raise ConfigurationError("multinomial responses must be integer codes 1..K")
    K = int(n_levels or codes[pos].max())
    if K < 2:
        raise DegenerateLevelError("need at least two levels")
    for k in range(1, K + 1):
        if not np.any(pos & (codes == k)):
            raise DegenerateLevelError(f"level {k} is absent among positively weighted rows")
    _check_rank(X[pos], column_names)
    n, q = X.shape
    Y = np.zeros((n, K))
    Y[pos, codes[pos] - 1] = 1.0
    coef = np.zeros((K - 1, q))

    def loglik(c):
        eta = np.column_stack([np.zeros(n), X @ c.T])
        lp = eta - logsumexp(eta, axis=1, keepdims=True)
        return float(np.sum(w[pos] * np.sum(Y[pos] * lp[pos], axis=1)))

    ll = loglik(coef)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        P = _softmax_ref(coef, X)
        grad = ((w[:, None] * (Y - P))[:, 1:].T @ X).ravel()
        info = _multinom_info(X, P, w)
        try:
            step = linalg.solve(info, grad, assume_a="pos").reshape(K - 1, q)
        except (linalg.LinAlgError, ValueError):
            raise ConvergenceError("singular information in multinomial Newton", coef, it) from None
        for _ in range(MAX_HALVINGS):
            cand = coef + step
            ll_c = loglik(cand)
            if ll_c >= ll - 1e-12 * (1 + abs(ll)):
                break
            step = step / 2
        coef, ll = cand, ll_c
        if np.all(np.abs(step) < tol * np.maximum(np.abs(coef), 1.0)):
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"multinomial Newton did not converge in {max_iter} iterations",
                               coef, it)
    P = _softmax_ref(coef, X)
    vcov = _sym_inverse(_multinom_info(X, P, w))
    scores = np.einsum("ik,ia->ika", (w[:, None] * (Y - P))[:, 1:], X).reshape(n, -1)
    return MultinomFit(coefficients=coef, vcov=vcov, scores=scores, converged=converged,
                       iterations=it, loglik=ll, n_levels=K, column_names=tuple(column_names))


def multinomial_score_contributions(fit, X, y, complete_flag):
    """Per-row score ``x_i (I(y_i = k) - p_ik)`` for k = 2..K; zero where incomplete."""
    X = np.asarray(X, dtype=float)
    flag = np.asarray(complete_flag).astype(bool)
    y = np.asarray(y, dtype=float)
    P = predict_multinomial(fit, X)
    K = P.shape[1]
    Y = np.zeros_like(P)
    Y[flag, y[flag].astype(np.int64) - 1] = 1.0
    resid = (Y - P)[:, 1:] * flag[:, None]
    return np.einsum("ik,ia->ika", resid, X).reshape(X.shape[0], (K - 1) * X.shape[1])
