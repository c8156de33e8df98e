"""Observation tables with a single incompletely observed column.

Cells of the incomplete column that are missing hold ``NaN``; every other
column is fully observed. Categorical columns are stored as float codes
``1..K`` with the original labels kept in ``levels``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ParseError, SchemaError

ROLES = ("response", "covariate", "auxiliary")
DEFAULT_NA = ("", "NA")


@dataclass(frozen=True)
class MissingnessSummary:
    n: int
    m: int
    rate: float


@dataclass(frozen=True)
class Schema:
    """Role map for a delimited file.

    ``levels`` pins the level order of a categorical column; otherwise
    labels are coded in order of first appearance (numerically sorted when
    every label is an integer).
    """

    id: str | None
    response: str
    covariates: Sequence[str] = ()
    auxiliary: Sequence[str] = ()
    categorical: Sequence[str] = ()
    incomplete: str | None = None
    levels: Mapping[str, Sequence[str]] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping):
        if isinstance(mapping, Schema):
            return mapping
        m = dict(mapping)

        def _seq(key):
            value = m.get(key, ())
            if isinstance(value, str):
                return (value,)
            return tuple(value)

        return cls(
            id=m.get("id"),
            response=m["response"],
            covariates=_seq("covariates") or _seq("covariate"),
            auxiliary=_seq("auxiliary"),
            categorical=_seq("categorical"),
            incomplete=m.get("incomplete"),
            levels={k: tuple(v) for k, v in dict(m.get("levels", {})).items()},
        )

    def column_roles(self):
        roles = {self.response: "response"}
        for name in self.covariates:
            roles[name] = "covariate"
        for name in self.auxiliary:
            roles[name] = "auxiliary"
        return roles


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Rectangular dataset; see module docstring for the storage conventions."""

    subject_id: np.ndarray
    data: Mapping[str, np.ndarray]
    roles: Mapping[str, str]
    incomplete: str | None = None
    levels: Mapping[str, tuple] = field(default_factory=dict)
    id_name: str = "id"

    def __post_init__(self):
        ids = np.asarray(self.subject_id, dtype=np.int64)
        object.__setattr__(self, "subject_id", ids)
        n = ids.shape[0]
        if np.unique(ids).shape[0] != n:
            raise SchemaError("subject ids must be unique")
        data = {}
        for name, values in self.data.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise SchemaError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            data[name] = arr
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "roles", dict(self.roles))
        object.__setattr__(self, "levels", {k: tuple(v) for k, v in self.levels.items()})
        if self.incomplete is not None and self.incomplete not in data:
            raise SchemaError(f"incomplete column {self.incomplete!r} not in table")
        for name, arr in data.items():
            if name != self.incomplete and np.isnan(arr).any():
                row = int(np.flatnonzero(np.isnan(arr))[0])
                raise SchemaError(
                    f"missing value in column {name!r} (row {row}) which is not "
                    "declared incomplete; only one incomplete column is supported"
                )
        for name, labels in self.levels.items():
            if name not in data:
                raise SchemaError(f"levels given for unknown column {name!r}")
            if len(labels) < 2:
                raise SchemaError(f"categorical column {name!r} needs at least 2 levels")
            arr = data[name]
            obs = arr[~np.isnan(arr)]
            if obs.size and not np.all(np.isin(obs, np.arange(1, len(labels) + 1))):
                raise SchemaError(f"categorical column {name!r} has codes outside 1..{len(labels)}")

    @property
    def n(self):
        return self.subject_id.shape[0]

    @property
    def columns(self):
        return list(self.data)

    def __contains__(self, name):
        return name in self.data

    def __getitem__(self, name):
        return self.data[name]

    @property
    def missing_mask(self):
        """Per-column boolean masks; all-false except possibly the incomplete column."""
        return {name: np.isnan(arr) for name, arr in self.data.items()}

    @property
    def mask(self):
        if self.incomplete is None:
            return np.zeros(self.n, dtype=bool)
        return np.isnan(self.data[self.incomplete])

    @property
    def observed(self):
        """The R indicator as a 0/1 integer vector."""
        return (~self.mask).astype(np.int64)

    def is_categorical(self, name):
        return name in self.levels

    def n_levels(self, name):
        return len(self.levels[name])

    def take(self, rows, relabel=False):
        """Row subset (with repetition allowed when ``relabel`` is true)."""
        rows = np.asarray(rows, dtype=np.int64)
        ids = np.arange(rows.shape[0]) if relabel else self.subject_id[rows]
        return ObservationTable(
            subject_id=ids,
            data={k: v[rows] for k, v in self.data.items()},
            roles=self.roles,
            incomplete=self.incomplete,
            levels=self.levels,
            id_name=self.id_name,
        )

    def with_columns(self, **values):
        data = dict(self.data)
        data.update(values)
        return ObservationTable(
            subject_id=self.subject_id,
            data=data,
            roles=self.roles,
            incomplete=self.incomplete,
            levels=self.levels,
            id_name=self.id_name,
        )

    @classmethod
    def from_frame(cls, frame, *, id_column=None, incomplete=None, categorical=(),
                   roles=None, levels=None):
        """Build a table from a pandas-like frame (``NaN``/``None`` = missing).

        Categorical columns must already be integer coded ``1..K``; their
        level labels are the codes unless ``levels`` says otherwise.
        """
        names = [str(c) for c in frame.columns]
        ids = (np.arange(len(frame)) if id_column is None
               else np.asarray(frame[id_column], dtype=np.int64))
        data = {}
        for name in names:
            if name == id_column:
                continue
            data[name] = np.asarray(
                [np.nan if v is None else v for v in frame[name]], dtype=float)
        levels = dict(levels or {})
        for name in categorical:
            if name not in levels:
                codes = data[name][~np.isnan(data[name])]
                k = int(codes.max()) if codes.size else 0
                levels[name] = tuple(str(i) for i in range(1, k + 1))
        if roles is None:
            roles = {name: "covariate" for name in data}
        return cls(ids, data, roles, incomplete=incomplete, levels=levels,
                   id_name=id_column or "id")


def missingness_summary(table):
    """Counts of rows with the incomplete column unobserved."""
    m = int(table.mask.sum())
    n = table.n
    return MissingnessSummary(n=n, m=m, rate=(m / n) if n else 0.0)


def _code_levels(tokens, explicit=None):
    if explicit is not None:
        labels = tuple(str(v) for v in explicit)
    else:
        seen = list(dict.fromkeys(tokens))
        try:
            labels = tuple(sorted(seen, key=int))
        except ValueError:
            labels = tuple(seen)
    index = {label: i + 1 for i, label in enumerate(labels)}
    return labels, index


def load_csv(path, schema, *, delimiter=",", na_values: Iterable[str] = DEFAULT_NA,
             encoding="utf-8"):
    """Read a delimited file into an :class:`ObservationTable`.

    Parameters
    ----------
    path : path-like
    schema : Schema or mapping
        Role map; see :meth:`Schema.from_mapping` for the mapping keys.
    delimiter : str
        Field separator, ``","`` by default.
    na_values : iterable of str
        Tokens (after stripping whitespace) read as missing.
    """
    schema = Schema.from_mapping(schema)
    na_values = set(na_values)
    path = Path(path)
    with path.open(newline="", encoding=encoding) as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}",
                    line=lineno)
            rows.append((lineno, [cell.strip() for cell in row]))

    roles = schema.column_roles()
    wanted = list(roles)
    for name in schema.categorical:
        if name not in roles:
            wanted.append(name)
            roles[name] = "covariate"
    if schema.incomplete is not None and schema.incomplete not in roles:
        raise SchemaError(f"incomplete column {schema.incomplete!r} has no role")
    needed = wanted + ([schema.id] if schema.id else [])
    for name in needed:
        if name not in header:
            raise SchemaError(f"column {name!r} not found in header of {path}")
    pos = {name: header.index(name) for name in needed}

    if schema.id:
        try:
            ids = np.array([int(r[pos[schema.id]]) for _, r in rows], dtype=np.int64)
        except ValueError as exc:
            raise ParseError(f"{path}: non-integer subject id ({exc})") from None
    else:
        ids = np.arange(len(rows), dtype=np.int64)

    data, levels = {}, {}
    for name in wanted:
        tokens = [r[pos[name]] for _, r in rows]
        missing = [t in na_values for t in tokens]
        if any(missing) and name != schema.incomplete:
            lineno = rows[missing.index(True)][0]
            raise SchemaError(
                f"{path}:{lineno}: missing value in column {name!r}, which is not "
                "declared incomplete")
        if name in schema.categorical:
            labels, index = _code_levels(
                [t for t, miss in zip(tokens, missing) if not miss],
                schema.levels.get(name))
            try:
                values = [math.nan if miss else float(index[t])
                          for t, miss in zip(tokens, missing)]
            except KeyError as exc:
                raise SchemaError(f"level {exc} of {name!r} not in configured levels") from None
            levels[name] = labels
        else:
            values = []
            for (lineno, _), t, miss in zip(rows, tokens, missing):
                if miss:
                    values.append(math.nan)
                    continue
                try:
                    values.append(float(t))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: cannot parse {t!r} in column {name!r}",
                        line=lineno) from None
        data[name] = np.array(values, dtype=float)

    return ObservationTable(
        subject_id=ids, data=data, roles=roles, incomplete=schema.incomplete,
        levels=levels, id_name=schema.id or "id")


def write_csv(table, path, *, delimiter=",", na_token=""):
    """Write ``table`` so that :func:`load_csv` reproduces it exactly."""
    names = table.columns
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow([table.id_name] + names)
        for i in range(table.n):
            row = [str(int(table.subject_id[i]))]
            for name in names:
                v = table.data[name][i]
                if math.isnan(v):
                    row.append(na_token)
                elif name in table.levels:
                    row.append(table.levels[name][int(v) - 1])
                else:
                    row.append(repr(float(v)))
            writer.writerow(row)


def schema_for(table):
    """Schema that reloads a table written by :func:`write_csv`."""
    by_role = {role: [n for n, r in table.roles.items() if r == role] for role in ROLES}
    response = by_role["response"][0] if by_role["response"] else table.columns[0]
    return Schema(
        id=table.id_name,
        response=response,
        covariates=tuple(n for n in table.columns
                         if n != response and table.roles.get(n) != "auxiliary"),
        auxiliary=tuple(by_role["auxiliary"]),
        categorical=tuple(table.levels),
        incomplete=table.incomplete,
        levels=dict(table.levels),
    )
