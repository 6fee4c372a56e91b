"""Controlled missingness injection with recorded ground truth."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from scipy.stats import rankdata

from .errors import CsvParseError, UsageError
from .table import Dataset, format_number


class Mechanism(str, enum.Enum):
    MCAR = "mcar"
    MAR = "mar"


@dataclass(frozen=True)
class MissingnessSpec:
    rate: float = 0.10
    mechanism: Mechanism = Mechanism.MCAR
    excluded_columns: frozenset[str] = field(default_factory=frozenset)
    seed: int = 0
    mar_driver: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "excluded_columns", frozenset(self.excluded_columns))
        if not 0.0 <= self.rate <= 1.0:
            raise UsageError(f"missingness rate must lie in [0, 1], got {self.rate}")
        if self.mechanism is Mechanism.MAR and self.mar_driver is None:
            raise UsageError("MAR missingness needs a driver column")


@dataclass(frozen=True)
class TruthCell:
    row: int
    column: str
    value: Any


GroundTruth = list[TruthCell]


def masked_row_count(rate: float, n_rows: int) -> int:
    """``round(rate * n_rows)`` with halves rounded up, in exact decimal."""
    exact = Decimal(repr(float(rate))) * n_rows
    return int(exact.to_integral_value(rounding=ROUND_HALF_UP))


def inject_missing(d: Dataset, spec: MissingnessSpec) -> tuple[Dataset, GroundTruth]:
    """Mask one cell in each of ``round(rate * n_rows)`` distinct rows.

    Under MCAR rows are drawn uniformly; under MAR a row's selection weight is
    the rank of its driver value. The masked column is drawn uniformly from
    the eligible columns (not excluded, not the MAR driver).
    """
    if not d.is_complete():
        raise UsageError("inject_missing needs a fully observed dataset")
    for name in spec.excluded_columns:
        d.index(name)
    eligible = [n for n in d.names if n not in spec.excluded_columns]
    if spec.mechanism is Mechanism.MAR:
        d.index(spec.mar_driver)
        eligible = [n for n in eligible if n != spec.mar_driver]
    if not eligible:
        raise UsageError("no eligible columns to inject missingness into")

    n_masked = masked_row_count(spec.rate, d.n_rows)
    if n_masked == 0:
        return d, []

    rng = np.random.default_rng(spec.seed)
    if spec.mechanism is Mechanism.MCAR:
        rows = rng.choice(d.n_rows, size=n_masked, replace=False)
    else:
        driver = d.column(spec.mar_driver)
        if d.kind(spec.mar_driver).is_categorical:
            _, driver = np.unique(driver.astype(str), return_inverse=True)
        ranks = rankdata(driver)
        rows = rng.choice(d.n_rows, size=n_masked, replace=False, p=ranks / ranks.sum())
    cols = rng.integers(0, len(eligible), size=n_masked)

    mask = d.mask.copy()
    truth: GroundTruth = []
    for i, c in sorted(zip(rows.tolist(), cols.tolist())):
        name = eligible[c]
        j = d.index(name)
        mask[j, i] = True
        v = d.columns[j][i]
        truth.append(TruthCell(i, name, float(v) if d.kinds[j].is_numeric else v))
    return Dataset.from_columns(d.names, d.columns, mask, d.kinds), truth


def restore(d: Dataset, truth: Iterable[TruthCell]) -> Dataset:
    """Unmask the listed cells with their recorded values."""
    by_col: dict[str, tuple[list[int], list[Any]]] = {}
    for cell in truth:
        rows, vals = by_col.setdefault(cell.column, ([], []))
        rows.append(cell.row)
        vals.append(cell.value)
    for name, (rows, vals) in by_col.items():
        d = d.fill(name, rows, vals)
    return d


@dataclass(frozen=True)
class MissingReport:
    per_column: dict[str, int]
    total: int


def missing_report(d: Dataset) -> MissingReport:
    counts = {name: int(d.mask[j].sum()) for j, name in enumerate(d.names)}
    return MissingReport(counts, sum(counts.values()))


def write_truth(truth: Iterable[TruthCell], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "column", "value"])
        for cell in truth:
            v = format_number(cell.value) if isinstance(cell.value, float) else cell.value
            w.writerow([cell.row, cell.column, v])


def read_truth(path: str | Path, d: Dataset | None = None) -> GroundTruth:
    """Read a truth file; values are typed by ``d``'s column kinds if given."""
    out: GroundTruth = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row", "column", "value"]:
            raise CsvParseError(f"truth file header must be row,column,value, got {header}", row=1)
        for rownum, rec in enumerate(reader, start=2):
            if len(rec) != 3:
                raise CsvParseError(f"expected 3 fields, found {len(rec)}", row=rownum)
            row, col, val = rec
            value: Any = val
            if d is not None and d.kind(col).is_numeric:
                value = float(val)
            out.append(TruthCell(int(row), col, value))
    return out
