"""Column-major table with a per-cell missing mask, CSV I/O and encoders."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import CsvParseError, SchemaError, UsageError

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "NaN", "?"})

_DECIMAL = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


@dataclass(frozen=True)
class ColumnKind:
    """Numeric when ``cardinality`` is None, categorical otherwise."""

    cardinality: int | None = None

    @property
    def is_categorical(self) -> bool:
        return self.cardinality is not None

    @property
    def is_numeric(self) -> bool:
        return self.cardinality is None

    def __repr__(self) -> str:
        if self.is_numeric:
            return "Numeric"
        return f"Categorical({self.cardinality})"


NUMERIC = ColumnKind()


def categorical(cardinality: int) -> ColumnKind:
    return ColumnKind(cardinality=int(cardinality))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _is_missing_value(v: Any) -> bool:
    if v is None:
        return True
    return isinstance(v, float) and math.isnan(v)


def _looks_numeric(values: Iterable[Any]) -> bool:
    for v in values:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, float, np.integer, np.floating)):
            return False
    return True


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column-major table.

    ``mask[j, i]`` is True when cell ``i`` of column ``j`` is missing. Masked
    numeric cells hold NaN and masked categorical cells hold None, but callers
    must go through the mask rather than rely on the placeholder.
    """

    names: tuple[str, ...]
    columns: tuple[np.ndarray, ...]
    kinds: tuple[ColumnKind, ...]
    mask: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            dupes = sorted(n for n, c in Counter(self.names).items() if c > 1)
            raise SchemaError(f"duplicate column names: {dupes}")
        if not (len(self.names) == len(self.columns) == len(self.kinds)):
            raise SchemaError("names, columns and kinds differ in length")
        n = len(self.columns[0]) if self.columns else 0
        if any(len(c) != n for c in self.columns):
            raise SchemaError("columns have unequal lengths")
        if self.mask.shape != (len(self.columns), n):
            raise SchemaError(f"mask shape {self.mask.shape} does not match table ({len(self.columns)}, {n})")
        object.__setattr__(self, "_index", {name: j for j, name in enumerate(self.names)})

    @classmethod
    def from_columns(
        cls,
        names: Sequence[str],
        columns: Sequence[Sequence[Any]],
        mask: Sequence[Sequence[bool]] | np.ndarray | None = None,
        kinds: Sequence[ColumnKind] | None = None,
    ) -> Dataset:
        """Build a dataset, inferring missing cells and kinds where not given.

        Without an explicit mask, None and NaN cells are treated as missing.
        Columns whose observed values are all numbers become numeric.
        """
        names = tuple(str(n) for n in names)
        raw = [list(c) for c in columns]
        n_rows = len(raw[0]) if raw else 0
        if any(len(c) != n_rows for c in raw):
            raise SchemaError("columns have unequal lengths")
        if mask is None:
            m = np.array([[_is_missing_value(v) for v in c] for c in raw], dtype=bool).reshape(len(raw), n_rows)
        else:
            m = np.array(mask, dtype=bool).reshape(len(raw), n_rows)
        cols = []
        out_kinds = []
        for j, c in enumerate(raw):
            observed = [v for v, miss in zip(c, m[j]) if not miss]
            if kinds is not None:
                numeric = kinds[j].is_numeric
            else:
                numeric = _looks_numeric(observed)
            if numeric:
                arr = np.array([math.nan if miss else float(v) for v, miss in zip(c, m[j])], dtype=float)
                out_kinds.append(NUMERIC)
            else:
                arr = np.empty(n_rows, dtype=object)
                for i, (v, miss) in enumerate(zip(c, m[j])):
                    arr[i] = None if miss else str(v)
                out_kinds.append(categorical(len(set(arr[~m[j]]))))
            cols.append(_freeze(arr))
        return cls(names, tuple(cols), tuple(out_kinds), _freeze(m.copy()))

    # -- shape and lookup ---------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.mask.shape[1]

    @property
    def n_cols(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UsageError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.index(name)]

    def column_mask(self, name: str) -> np.ndarray:
        return self.mask[self.index(name)]

    def kind(self, name: str) -> ColumnKind:
        return self.kinds[self.index(name)]

    def missing_count(self, name: str | None = None) -> int:
        if name is None:
            return int(self.mask.sum())
        return int(self.column_mask(name).sum())

    def is_complete(self) -> bool:
        return not self.mask.any()

    # -- derived tables -----------------------------------------------------

    def with_column(
        self,
        name: str,
        values: Sequence[Any],
        mask: Sequence[bool] | None = None,
        kind: ColumnKind | None = None,
    ) -> Dataset:
        """Return a copy with column ``name`` replaced (or appended if new)."""
        single = Dataset.from_columns(
            [name], [values], None if mask is None else [mask], None if kind is None else [kind]
        )
        if name in self._index:
            j = self._index[name]
            return self._splice(j, j + 1, single)
        return self._splice(self.n_cols, self.n_cols, single)

    def _splice(self, start: int, stop: int, other: Dataset) -> Dataset:
        names = self.names[:start] + other.names + self.names[stop:]
        cols = self.columns[:start] + other.columns + self.columns[stop:]
        kinds = self.kinds[:start] + other.kinds + self.kinds[stop:]
        mask = np.concatenate([self.mask[:start], other.mask, self.mask[stop:]], axis=0)
        return Dataset(names, cols, kinds, _freeze(mask.reshape(len(names), self.n_rows)))

    def fill(self, name: str, rows: Sequence[int] | np.ndarray, values: Sequence[Any]) -> Dataset:
        """Return a copy where the given cells of ``name`` are set and unmasked."""
        j = self.index(name)
        rows = np.asarray(rows, dtype=int)
        col = self.columns[j].copy()
        if self.kinds[j].is_numeric:
            col[rows] = np.asarray(values, dtype=float)
        else:
            for i, v in zip(rows, values):
                col[i] = str(v)
        mask = self.mask.copy()
        mask[j, rows] = False
        kind = self.kinds[j]
        if kind.is_categorical:
            kind = categorical(len(set(col[~mask[j]])))
        cols = self.columns[:j] + (_freeze(col),) + self.columns[j + 1:]
        kinds = self.kinds[:j] + (kind,) + self.kinds[j + 1:]
        return Dataset(self.names, cols, kinds, _freeze(mask))

    def take_rows(self, rows: Sequence[int] | np.ndarray) -> Dataset:
        rows = np.asarray(rows, dtype=int)
        cols = tuple(_freeze(c[rows].copy()) for c in self.columns)
        return Dataset.from_columns(
            self.names, cols, self.mask[:, rows], self.kinds
        )

    def select(self, names: Sequence[str]) -> Dataset:
        idx = [self.index(n) for n in names]
        return Dataset(
            tuple(self.names[j] for j in idx),
            tuple(self.columns[j] for j in idx),
            tuple(self.kinds[j] for j in idx),
            _freeze(self.mask[idx].copy().reshape(len(idx), self.n_rows)),
        )

    # -- comparison ---------------------------------------------------------

    def equals(self, other: Dataset, atol: float = 0.0) -> bool:
        """Value-, kind- and mask-equality; masked placeholders are ignored."""
        if self.names != other.names or self.kinds != other.kinds:
            return False
        if not np.array_equal(self.mask, other.mask):
            return False
        for j, kind in enumerate(self.kinds):
            keep = ~self.mask[j]
            a, b = self.columns[j][keep], other.columns[j][keep]
            if kind.is_numeric:
                if atol == 0.0:
                    if not np.array_equal(a, b):
                        return False
                elif not np.allclose(a, b, rtol=0.0, atol=atol):
                    return False
            elif list(a) != list(b):
                return False
        return True

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.equals(other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Dataset({self.n_rows} rows, columns={list(self.names)}, missing={self.missing_count()})"


# -- CSV ----------------------------------------------------------------------


def _is_decimal(token: str) -> bool:
    return _DECIMAL.fullmatch(token.strip()) is not None


def read_csv(path: str | Path, missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> Dataset:
    """Read a headed CSV file.

    Cells equal to a missing token (after stripping whitespace) are masked.
    A column is numeric when every unmasked token is a decimal number.
    Row numbers in parse errors count the header as row 1.
    """
    tokens = set(missing_tokens)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file, expected a header row", row=1) from None
        except csv.Error as exc:
            raise CsvParseError(str(exc), row=1) from None
        if len(set(header)) != len(header):
            dupes = sorted(n for n, c in Counter(header).items() if c > 1)
            raise SchemaError(f"duplicate header names: {dupes}")
        records: list[list[str]] = []
        try:
            for rownum, rec in enumerate(reader, start=2):
                if not rec:
                    # a blank line is an empty field in a one-column file, noise otherwise
                    if len(header) != 1:
                        continue
                    rec = [""]
                if len(rec) != len(header):
                    raise CsvParseError(f"expected {len(header)} fields, found {len(rec)}", row=rownum)
                records.append(rec)
        except csv.Error as exc:
            raise CsvParseError(str(exc), row=reader.line_num) from None

    n_cols = len(header)
    raw_cols = [[rec[j].strip() for rec in records] for j in range(n_cols)]
    mask = np.array([[tok in tokens for tok in col] for col in raw_cols], dtype=bool).reshape(n_cols, len(records))
    columns: list[list[Any]] = []
    kinds: list[ColumnKind] = []
    for j, col in enumerate(raw_cols):
        observed = [tok for tok, miss in zip(col, mask[j]) if not miss]
        if all(_is_decimal(tok) for tok in observed):
            columns.append([None if miss else float(tok) for tok, miss in zip(col, mask[j])])
            kinds.append(NUMERIC)
        else:
            columns.append([None if miss else tok for tok, miss in zip(col, mask[j])])
            kinds.append(categorical(len(set(observed))))
    return Dataset.from_columns(header, columns, mask, kinds)


def format_number(v: float) -> str:
    """Shortest round-tripping text for a float; integral values drop ``.0``."""
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def format_cell(d: Dataset, j: int, i: int) -> str:
    if d.mask[j, i]:
        return ""
    v = d.columns[j][i]
    return format_number(v) if d.kinds[j].is_numeric else str(v)


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write ``d`` as CSV; masked cells become empty fields."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(d.names)
        for i in range(d.n_rows):
            writer.writerow([format_cell(d, j, i) for j in range(d.n_cols)])


# -- encoders -----------------------------------------------------------------


@dataclass(frozen=True)
class EncodingMap:
    column: str
    categories: tuple[str, ...]

    @property
    def codes(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.categories)}

    @property
    def inverse(self) -> dict[int, str]:
        return dict(enumerate(self.categories))

    def __len__(self) -> int:
        return len(self.categories)

    def encode(self, value: str) -> int:
        return self.codes[value]

    def decode(self, code: float) -> str:
        return self.categories[int(round(code))]


def _require_categorical(d: Dataset, column: str) -> int:
    j = d.index(column)
    if not d.kinds[j].is_categorical:
        raise UsageError(f"column {column!r} is not categorical")
    return j


def label_encode(d: Dataset, column: str) -> tuple[Dataset, EncodingMap]:
    """Replace a categorical column by integer codes in lexicographic order."""
    j = _require_categorical(d, column)
    m = d.mask[j]
    emap = EncodingMap(column, tuple(sorted(set(d.columns[j][~m]))))
    codes = emap.codes
    values = [None if miss else float(codes[v]) for v, miss in zip(d.columns[j], m)]
    return d.with_column(column, values, m, NUMERIC), emap


def label_decode(d: Dataset, emap: EncodingMap) -> Dataset:
    """Inverse of :func:`label_encode`."""
    j = d.index(emap.column)
    m = d.mask[j]
    values = [None if miss else emap.decode(v) for v, miss in zip(d.columns[j], m)]
    observed = {v for v in values if v is not None}
    return d.with_column(emap.column, values, m, categorical(len(observed)))


def one_hot_encode(d: Dataset, column: str) -> Dataset:
    """Expand a categorical column into ``<col>=<category>`` indicator columns."""
    j = _require_categorical(d, column)
    card = d.kinds[j].cardinality
    if card < 2:
        raise UsageError(f"column {column!r} has cardinality {card}; one-hot needs at least 2")
    m = d.mask[j]
    cats = sorted(set(d.columns[j][~m]))
    values = d.columns[j]
    names = [f"{column}={c}" for c in cats]
    for n in names:
        if n in d._index:
            raise SchemaError(f"one-hot column {n!r} already exists")
    cols = [[None if miss else float(v == c) for v, miss in zip(values, m)] for c in cats]
    block = Dataset.from_columns(names, cols, [m] * len(cats), [NUMERIC] * len(cats))
    return d._splice(j, j + 1, block)


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class ColumnStats:
    """None marks an undefined statistic."""

    mean: float | None
    std: float | None
    mode: Any
    missing: int


def _mode(values: Sequence[Any]) -> Any:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def column_stats(d: Dataset, column: str) -> ColumnStats:
    """Statistics over observed cells; std uses the population denominator."""
    j = d.index(column)
    m = d.mask[j]
    observed = d.columns[j][~m]
    missing = int(m.sum())
    if observed.size == 0:
        return ColumnStats(None, None, None, missing)
    if d.kinds[j].is_categorical:
        return ColumnStats(None, None, _mode(list(observed)), missing)
    mean = float(observed.mean())
    std = float(observed.std())
    return ColumnStats(mean, std, float(_mode(list(observed))), missing)
