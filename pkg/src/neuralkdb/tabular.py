"""Tabular ingestion: CSV loading, mode imputation, equal-frequency binning, encoding.

The pipeline is ``load_csv -> impute_missing -> discretize -> encode``. Each step
returns a new immutable value. :class:`Preprocessor` fits the imputation fills and
bin edges on one table and replays them on another, which is how held-out rows
are prepared without leaking test statistics.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

MISSING_TOKENS = frozenset({"", "?"})
ALL_MISSING_FILL = "NA"


@dataclass(frozen=True)
class RawTable:
    """Row-major grid of optional text tokens; ``None`` marks a missing cell."""

    column_names: tuple[str, ...]
    cells: tuple[tuple[str | None, ...], ...]
    label_column: str

    def __post_init__(self):
        names = tuple(self.column_names)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "cells", tuple(tuple(r) for r in self.cells))
        label = self.label_column
        if isinstance(label, int):
            if not 0 <= label < len(names):
                raise DataError(f"label column index {label} out of range")
            label = names[label]
            object.__setattr__(self, "label_column", label)
        hits = names.count(label)
        if hits != 1:
            raise DataError(
                f"label column {label!r} "
                + ("not found" if hits == 0 else "is not unique")
                + f" among columns {list(names)}"
            )
        for r, row in enumerate(self.cells):
            if len(row) != len(names):
                raise DataError(
                    f"row {r} has {len(row)} cells, expected {len(names)}"
                )

    @property
    def label_index(self) -> int:
        return self.column_names.index(self.label_column)

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.column_names if c != self.label_column]

    @property
    def num_rows(self) -> int:
        return len(self.cells)

    def column(self, name: str) -> list[str | None]:
        j = self.column_names.index(name)
        return [row[j] for row in self.cells]

    def select_rows(self, indices: Iterable[int]) -> RawTable:
        return RawTable(self.column_names, [self.cells[i] for i in indices], self.label_column)

    def drop_columns(self, names: Iterable[str]) -> RawTable:
        names = set(names)
        if self.label_column in names:
            raise DataError(f"cannot drop the label column {self.label_column!r}")
        unknown = names - set(self.column_names)
        if unknown:
            raise DataError(f"cannot drop unknown columns {sorted(unknown)}")
        keep = [j for j, c in enumerate(self.column_names) if c not in names]
        return RawTable(
            [self.column_names[j] for j in keep],
            [[row[j] for j in keep] for row in self.cells],
            self.label_column,
        )


@dataclass(frozen=True)
class PreprocessSpec:
    num_bins: int = 5
    imputation: str = "mode"
    numeric_threshold: float = 0.95
    dropped_columns: tuple[str, ...] = ()

    def __post_init__(self):
        if self.num_bins < 2:
            raise ValueError("num_bins must be at least 2")
        if self.imputation != "mode":
            raise ValueError(f"unsupported imputation policy {self.imputation!r}")
        if not 0.0 < self.numeric_threshold <= 1.0:
            raise ValueError("numeric_threshold must lie in (0, 1]")
        object.__setattr__(self, "dropped_columns", tuple(self.dropped_columns))


def _normalize_cell(token: str) -> str | None:
    token = token.strip()
    return None if token in MISSING_TOKENS else token


def read_csv_rows(path) -> tuple[list[str], list[list[str | None]]]:
    """Read a headed CSV file; returns the header and the rows with missing cells as ``None``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: file is empty (a header row is required)")
    header = [h.strip() for h in rows[0]]
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(
                f"{path}: ragged rows, line {lineno} has {len(row)} fields, header has {len(header)}"
            )
        body.append([_normalize_cell(c) for c in row])
    return header, body


def load_csv(path, label_column: str | int) -> RawTable:
    header, body = read_csv_rows(path)
    try:
        return RawTable(header, body, label_column)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


# -- imputation ------------------------------------------------------------------

def column_mode(values: Iterable[str | None]) -> str:
    """Most frequent present token; ties go to the lexicographically smallest."""
    counts = Counter(v for v in values if v is not None)
    if not counts:
        return ALL_MISSING_FILL
    top = max(counts.values())
    return min(tok for tok, c in counts.items() if c == top)


def impute_missing(table: RawTable) -> RawTable:
    fills = [column_mode(table.column(c)) for c in table.column_names]
    cells = [
        [fills[j] if v is None else v for j, v in enumerate(row)] for row in table.cells
    ]
    return RawTable(table.column_names, cells, table.label_column)


# -- discretization --------------------------------------------------------------

def parse_number(token: str | None) -> float | None:
    if token is None:
        return None
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def is_numeric_column(values: Sequence[str | None], threshold: float) -> bool:
    if not values:
        return False
    parsed = sum(parse_number(v) is not None for v in values)
    return parsed / len(values) >= threshold


def bin_edges(values: Sequence[float], num_bins: int) -> tuple[float, ...]:
    """Upper edges of the first ``B - 1`` equal-frequency bins.

    ``B = min(num_bins, distinct values)``. Edge ``j`` is the lower empirical
    ``j/B``-quantile ``s[ceil(j*n/B) - 1]`` of the sorted values, so a bin is
    ``(edge[j-1], edge[j]]`` and a value equal to an edge lands in the lower bin.
    """
    s = sorted(values)
    n = len(s)
    b = min(num_bins, len(set(s)))
    if b <= 1:
        return ()
    return tuple(s[-(-j * n // b) - 1] for j in range(1, b))


def bin_label(value: float, edges: Sequence[float]) -> str:
    return f"bin{bisect_left(edges, value)}"


@dataclass(frozen=True)
class ColumnRule:
    """Fill token for missing cells plus bin edges (``None`` for categorical columns)."""

    name: str
    fill: str
    edges: tuple[float, ...] | None = None

    def apply(self, token: str | None) -> str:
        if token is None:
            token = self.fill
        if self.edges is not None:
            value = parse_number(token)
            if value is not None:
                return bin_label(value, self.edges)
        return token

    def to_dict(self) -> dict:
        return {"name": self.name, "fill": self.fill,
                "edges": None if self.edges is None else list(self.edges)}

    @classmethod
    def from_dict(cls, d: dict) -> ColumnRule:
        edges = d.get("edges")
        return cls(d["name"], d["fill"], None if edges is None else tuple(float(e) for e in edges))


def _numeric_edges(values: Sequence[str], spec: PreprocessSpec) -> tuple[float, ...] | None:
    if not is_numeric_column(values, spec.numeric_threshold):
        return None
    return bin_edges([v for v in map(parse_number, values) if v is not None], spec.num_bins)


def discretize(table: RawTable, spec: PreprocessSpec) -> RawTable:
    """Replace numeric feature columns by ``bin{j}`` labels; the label column is never binned."""
    rules = []
    for name in table.column_names:
        edges = None
        if name != table.label_column:
            edges = _numeric_edges(table.column(name), spec)
        rules.append(ColumnRule(name, ALL_MISSING_FILL, edges))
    cells = [[rule.apply(v) for rule, v in zip(rules, row)] for row in table.cells]
    return RawTable(table.column_names, cells, table.label_column)


@dataclass(frozen=True)
class Preprocessor:
    """Imputation fills and bin edges fitted on one table, replayable on others."""

    label_column: str
    label_fill: str
    rules: tuple[ColumnRule, ...]
    dropped_columns: tuple[str, ...] = ()

    @classmethod
    def fit(cls, table: RawTable, spec: PreprocessSpec = PreprocessSpec()) -> Preprocessor:
        if spec.dropped_columns:
            table = table.drop_columns(spec.dropped_columns)
        rules = []
        for name in table.feature_columns:
            column = table.column(name)
            fill = column_mode(column)
            filled = [fill if v is None else v for v in column]
            rules.append(ColumnRule(name, fill, _numeric_edges(filled, spec)))
        return cls(table.label_column, column_mode(table.column(table.label_column)),
                   tuple(rules), tuple(spec.dropped_columns))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rules)

    def feature_tokens(self, column_names: Sequence[str], row: Sequence[str | None]) -> tuple[str, ...]:
        """Discrete feature tokens for one raw row, columns matched by name."""
        pos = {c: j for j, c in enumerate(column_names)}
        missing = [r.name for r in self.rules if r.name not in pos]
        if missing:
            raise DataError(f"input lacks feature columns {missing}")
        return tuple(r.apply(row[pos[r.name]]) for r in self.rules)

    def transform(self, table: RawTable) -> RawTable:
        names = list(self.feature_names) + [self.label_column]
        li = table.label_index
        cells = []
        for row in table.cells:
            label = row[li] if row[li] is not None else self.label_fill
            cells.append(list(self.feature_tokens(table.column_names, row)) + [label])
        return RawTable(names, cells, self.label_column)

    def to_dict(self) -> dict:
        return {
            "label_column": self.label_column,
            "label_fill": self.label_fill,
            "dropped_columns": list(self.dropped_columns),
            "columns": [r.to_dict() for r in self.rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Preprocessor:
        return cls(d["label_column"], d["label_fill"],
                   tuple(ColumnRule.from_dict(c) for c in d["columns"]),
                   tuple(d.get("dropped_columns", ())))


# -- encoding --------------------------------------------------------------------

def _frozen_int_array(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Integer-encoded discrete dataset.

    ``X[r, i]`` indexes ``feature_alphabets[i]`` and ``y[r]`` indexes
    ``label_alphabet``.
    """

    feature_names: tuple[str, ...]
    feature_alphabets: tuple[tuple[str, ...], ...]
    label_name: str
    label_alphabet: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    _dicts: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_alphabets", tuple(tuple(a) for a in self.feature_alphabets))
        object.__setattr__(self, "label_alphabet", tuple(self.label_alphabet))
        m = len(self.feature_names)
        X = _frozen_int_array(self.X).reshape(-1, m)
        y = _frozen_int_array(self.y).reshape(-1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if len(self.feature_alphabets) != m:
            raise DataError("one alphabet per feature is required")
        if X.shape[0] != y.shape[0]:
            raise DataError("X and y row counts differ")
        if any(len(a) < 1 for a in self.feature_alphabets):
            raise DataError("every feature alphabet needs at least one value")
        if len(self.label_alphabet) < 2:
            raise DataError("at least 2 label values are required")
        sizes = np.array(self.alphabet_sizes, dtype=np.int64)
        if X.size and ((X < 0).any() or (X >= sizes).any()):
            raise DataError("feature index outside its alphabet")
        if y.size and ((y < 0).any() or (y >= len(self.label_alphabet)).any()):
            raise DataError("label index outside the label alphabet")
        object.__setattr__(self, "_dicts", [
            {tok: r for r, tok in enumerate(a)} for a in self.feature_alphabets
        ])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return len(self.feature_names)

    @property
    def num_labels(self) -> int:
        return len(self.label_alphabet)

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.feature_alphabets)

    @property
    def avg_alphabet_size(self) -> Fraction:
        return Fraction(sum(self.alphabet_sizes), self.m)

    @property
    def value_dictionaries(self) -> list[dict[str, int]]:
        return self._dicts

    @property
    def label_dictionary(self) -> dict[str, int]:
        return {tok: c for c, tok in enumerate(self.label_alphabet)}

    @property
    def rows(self) -> list[tuple[tuple[int, ...], int]]:
        return [(tuple(int(v) for v in x), int(c)) for x, c in zip(self.X, self.y)]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_labels)

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.feature_names, self.feature_alphabets, self.label_name,
                       self.label_alphabet, self.X[idx], self.y[idx])

    def decode(self) -> RawTable:
        cells = [
            [self.feature_alphabets[i][v] for i, v in enumerate(x)] + [self.label_alphabet[c]]
            for x, c in zip(self.X.tolist(), self.y.tolist())
        ]
        return RawTable(list(self.feature_names) + [self.label_name], cells, self.label_name)

    def encode_row(self, tokens: Sequence[str]) -> np.ndarray:
        """Encode feature tokens, mapping unseen tokens to ``-1``."""
        if len(tokens) != self.m:
            raise DataError(f"row has {len(tokens)} features, expected {self.m}")
        return np.array([d.get(t, -1) for d, t in zip(self._dicts, tokens)], dtype=np.int64)


def encode(table: RawTable, label_alphabet: Sequence[str] | None = None) -> Dataset:
    """Lexicographically ordered alphabets and integer-encoded rows.

    ``label_alphabet`` pins the class list, e.g. so a training partition keeps
    classes it happens not to contain.
    """
    for r, row in enumerate(table.cells):
        if any(v is None for v in row):
            raise DataError(f"row {r} has missing cells; impute before encoding")
    features = table.feature_columns
    columns = {c: table.column(c) for c in table.column_names}
    alphabets = [tuple(sorted(set(columns[c]))) for c in features]
    labels = tuple(sorted(set(columns[table.label_column]))) if label_alphabet is None \
        else tuple(label_alphabet)
    if len(labels) < 2:
        raise DataError(
            f"label column {table.label_column!r} has {len(labels)} distinct value(s); need at least 2"
        )
    lookup = [{tok: r for r, tok in enumerate(a)} for a in alphabets]
    label_lookup = {tok: c for c, tok in enumerate(labels)}
    X = np.array(
        [[lookup[f][v] for v in columns[c]] for f, c in enumerate(features)],
        dtype=np.int64,
    ).T.reshape(table.num_rows, len(features))
    try:
        y = [label_lookup[v] for v in columns[table.label_column]]
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} not in the label alphabet") from exc
    return Dataset(features, alphabets, table.label_column, labels, X, y)


def prepare(table: RawTable, spec: PreprocessSpec = PreprocessSpec()) -> tuple[Dataset, Preprocessor]:
    """Fit preprocessing on ``table`` and encode it."""
    pre = Preprocessor.fit(table, spec)
    return encode(pre.transform(table)), pre
