"""A small model-formula language and design-matrix construction.

Grammar::

    formula := response "~" term ("+" term)*
    term    := "1" | ident | "cat(" ident ")" | "bs(" ident "," int "," int ")"

``cat(z)`` expands a categorical column into indicators for every level but
the reference (smallest code). ``bs(a, N, m)`` is a B-spline basis with ``N``
internal knots of order ``m``. The intercept is always column 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exceptions import MissingDataError, ParseError, SchemaError
from .splines import SplineBasis, eval_basis


@dataclass(frozen=True)
class Numeric:
    name: str

    def label(self):
        return self.name


@dataclass(frozen=True)
class Categorical:
    name: str
    reference: int = 1

    def label(self):
        return f"cat({self.name})"


@dataclass(frozen=True)
class Spline:
    name: str
    n_knots: int
    order: int

    def label(self):
        return f"bs({self.name},{self.n_knots},{self.order})"


@dataclass(frozen=True)
class Formula:
    response: str
    terms: tuple = ()

    @property
    def variables(self):
        return [t.name for t in self.terms]

    def __str__(self):
        rhs = " + ".join(t.label() for t in self.terms) or "1"
        return f"{self.response} ~ {rhs}"


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple
    spline_bases: Mapping[str, SplineBasis] = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape


_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)(?![A-Za-z_])|(?P<ident>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<sym>[~+(),]))")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN.match(text, pos)
        if match is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unknown token at position {start}: {text[start:start + 10]!r}",
                             position=start)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def error(self, what, tok=None):
        tok = tok or self.peek()
        shown = tok[1] or "end of input"
        raise ParseError(f"{what} at position {tok[2]} (got {shown!r})", position=tok[2])

    def expect(self, kind, value=None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            self.error(f"expected {value or kind}")
        self.i += 1
        return tok

    def parse(self):
        response = self.expect("ident")[1]
        self.expect("sym", "~")
        terms = []
        seen = set()
        while True:
            start = self.peek()
            term = self.term()
            if term is not None:
                if term.name == response:
                    raise ParseError(
                        f"response {response!r} reused as a term at position {start[2]}",
                        position=start[2])
                if term.name in seen:
                    raise ParseError(f"duplicate term {term.name!r} at position {start[2]}",
                                     position=start[2])
                seen.add(term.name)
                terms.append(term)
            if self.peek()[:2] == ("sym", "+"):
                self.i += 1
                continue
            break
        if self.peek()[0] != "end":
            self.error("unexpected token")
        return Formula(response=response, terms=tuple(terms))

    def term(self):
        tok = self.peek()
        if tok[0] == "int":
            if tok[1] != "1":
                self.error("only '1' may appear as a bare number")
            self.i += 1
            return None
        name = self.expect("ident")[1]
        if self.peek()[:2] != ("sym", "("):
            return Numeric(name)
        if name not in ("cat", "bs"):
            self.error(f"unknown function {name!r}", tok)
        self.i += 1
        arg = self.expect("ident")[1]
        if name == "cat":
            self.expect("sym", ")")
            return Categorical(arg)
        self.expect("sym", ",")
        n_knots = int(self.expect("int")[1])
        self.expect("sym", ",")
        order = int(self.expect("int")[1])
        if order < 1:
            self.error("spline order must be >= 1", tok)
        self.expect("sym", ")")
        return Spline(arg, n_knots, order)


def parse_formula(text):
    """Parse a formula string into a :class:`Formula`."""
    if isinstance(text, Formula):
        return text
    return _Parser(text).parse()


def spline_bases_for(formula, table):
    """Fit knot placements for every spline term on the observed values."""
    bases = {}
    for term in formula.terms:
        if isinstance(term, Spline):
            bases[term.name] = SplineBasis.from_data(table[term.name], term.n_knots, term.order)
    return bases


def _column(table, name, overrides):
    if overrides is not None and name in overrides:
        values = np.asarray(overrides[name], dtype=float)
    elif name in table:
        values = table[name]
    else:
        raise SchemaError(f"formula refers to unknown column {name!r}")
    bad = np.isnan(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise MissingDataError(f"missing value in column {name!r} at row {row}",
                               row=row, column=name)
    return values


def build_design(formula, table, overrides=None, *, spline_bases=None,
                 full_spline_block=False):
    """Design matrix for the right-hand side of ``formula``.

    Parameters
    ----------
    formula : Formula or str
    table : ObservationTable
    overrides : mapping, optional
        Column name to substitute values (same length as the table). Used to
        plug pseudo-values into the incomplete column.
    spline_bases : mapping, optional
        Frozen knot placements keyed by column; computed from ``table`` when
        absent.
    full_spline_block : bool
        Emit all ``N + m`` basis columns of a spline term. By default the
        first is dropped since the intercept already spans the partition of
        unity.
    """
    formula = parse_formula(formula)
    bases = dict(spline_bases or {})
    cols = [np.ones(table.n)]
    names = ["(Intercept)"]
    for term in formula.terms:
        values = _column(table, term.name, overrides)
        if isinstance(term, Numeric):
            cols.append(values)
            names.append(term.name)
        elif isinstance(term, Categorical):
            if not table.is_categorical(term.name):
                raise SchemaError(f"column {term.name!r} is not categorical")
            labels = table.levels[term.name]
            for code in range(1, len(labels) + 1):
                if code == term.reference:
                    continue
                cols.append((values == code).astype(float))
                names.append(f"{term.name}[{labels[code - 1]}]")
        else:
            basis = bases.get(term.name)
            if basis is None:
                basis = SplineBasis.from_data(table[term.name], term.n_knots, term.order)
                bases[term.name] = basis
            block = eval_basis(basis, values)
            first = 0 if full_spline_block else 1
            for s in range(first, basis.dim):
                cols.append(block[:, s])
                names.append(f"bs({term.name})[{s + 1}]")
    return DesignMatrix(values=np.column_stack(cols), column_names=tuple(names),
                        spline_bases=bases)


def response_vector(formula, table, overrides=None):
    formula = parse_formula(formula)
    return _column(table, formula.response, overrides)
