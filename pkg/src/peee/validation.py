"""Input validation shared by the estimator classes and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigurationError, SchemaError
from .formula import Categorical, parse_formula
from .rng import stream
from .tabular import ObservationTable


def check_family(family):
    if family not in ("logistic", "linear"):
        raise ConfigurationError(f"family must be 'logistic' or 'linear', got {family!r}")
    return family


def check_random_state(random_state):
    """Generator from None, an integer seed, or an existing Generator."""
    if random_state is None:
        return np.random.default_rng()
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, numbers.Integral):
        return stream(int(random_state))
    raise ConfigurationError(f"cannot build a random generator from {random_state!r}")


def check_table(X, formulas=(), incomplete=None, categorical=()):
    """Coerce ``X`` to an :class:`ObservationTable`.

    ``X`` may already be a table, or any frame-like object exposing
    ``columns`` and column indexing. Categorical columns are those named in
    ``cat()`` terms of ``formulas`` plus ``categorical``; the incomplete
    column defaults to the single column holding missing values.
    """
    if isinstance(X, ObservationTable):
        return X
    if not hasattr(X, "columns"):
        raise ConfigurationError("expected an ObservationTable or a data frame")
    cats = set(categorical)
    for text in formulas:
        if text is None:
            continue
        f = parse_formula(text)
        cats.update(t.name for t in f.terms if isinstance(t, Categorical))
    if incomplete is None:
        with_nan = [c for c in X.columns
                    if np.isnan(np.asarray(X[c], dtype=float)).any()]
        if len(with_nan) > 1:
            raise SchemaError(f"more than one column has missing values: {with_nan}")
        incomplete = with_nan[0] if with_nan else None
    id_column = "id" if "id" in X.columns else None
    return ObservationTable.from_frame(X, id_column=id_column, incomplete=incomplete,
                                       categorical=sorted(cats))
