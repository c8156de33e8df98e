"""B-spline bases by the Cox-de Boor recursion.

Boundary knots are repeated ``order`` times; inputs outside the boundary
are clamped, so every row of the basis matrix sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class SplineBasis:
    """B-spline basis of the given order (degree ``order - 1``)."""

    order: int
    internal_knots: tuple
    lo: float
    hi: float

    def __post_init__(self):
        knots = tuple(float(k) for k in self.internal_knots)
        object.__setattr__(self, "internal_knots", knots)
        if self.order < 1:
            raise ConfigurationError("spline order must be >= 1")
        if not self.lo < self.hi:
            raise ConfigurationError(f"boundary ({self.lo}, {self.hi}) is empty")
        if any(not (self.lo < k < self.hi) for k in knots):
            raise ConfigurationError("internal knots must lie strictly inside the boundary")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ConfigurationError("internal knots must be strictly increasing")

    @property
    def n_internal(self):
        return len(self.internal_knots)

    @property
    def dim(self):
        return self.n_internal + self.order

    @property
    def full_knots(self):
        return np.concatenate([
            np.full(self.order, self.lo),
            np.asarray(self.internal_knots, dtype=float),
            np.full(self.order, self.hi),
        ])

    @classmethod
    def from_data(cls, x, n_internal, order):
        """Boundary at the data range, internal knots at equally spaced quantiles."""
        x = np.asarray(x, dtype=float)
        x = x[~np.isnan(x)]
        if x.size == 0:
            raise ConfigurationError("cannot place spline knots without data")
        probs = np.arange(1, n_internal + 1) / (n_internal + 1)
        knots = np.quantile(x, probs) if n_internal else ()
        return cls(order=int(order), internal_knots=tuple(knots),
                   lo=float(x.min()), hi=float(x.max()))


def eval_basis(basis, x):
    """Evaluate every basis function at ``x``.

    Returns
    -------
    ndarray of shape (len(x), basis.dim)
    """
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), basis.lo, basis.hi)
    t = basis.full_knots
    n_pieces = t.shape[0] - 1

    # order-1 indicators on half-open intervals; x == hi goes to the last
    # non-degenerate interval
    B = ((t[:-1][None, :] <= x[:, None]) & (x[:, None] < t[1:][None, :])).astype(float)
    last = n_pieces - basis.order
    B[x >= basis.hi, :] = 0.0
    B[x >= basis.hi, last] = 1.0

    for k in range(2, basis.order + 1):
        left_den = t[k - 1:-1] - t[:-k]
        right_den = t[k:] - t[1:-k + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[:-k]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[k:] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :-1] + right * B[:, 1:]
    return B
