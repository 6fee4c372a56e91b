"""Pairwise-complete Pearson correlation, predictor ranking and KL machinery."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NoPredictors, UsageError
from .table import Dataset, format_number

EPSILON = 1e-6
Q_FLOOR = 1e-6


def pearson_batch(x: np.ndarray, y: np.ndarray, observed: np.ndarray | None = None) -> np.ndarray:
    """Row-wise Pearson correlation of two ``(m, n)`` arrays.

    ``observed`` marks the pairs used for each row (True = both cells present);
    by default a pair is used when neither side is NaN. Rows with fewer than two
    complete pairs, or with a constant side on those pairs, come back as NaN.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise UsageError(f"shape mismatch: {x.shape} vs {y.shape}")
    if observed is None:
        observed = ~(np.isnan(x) | np.isnan(y))
    else:
        observed = np.broadcast_to(np.asarray(observed, dtype=bool), x.shape)
    w = observed.astype(float)
    xs = np.where(observed, x, 0.0)
    ys = np.where(observed, y, 0.0)
    cnt = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = xs.sum(axis=1) / cnt
        my = ys.sum(axis=1) / cnt
        dx = (xs - mx[:, None]) * w
        dy = (ys - my[:, None]) * w
        sxy = (dx * dy).sum(axis=1)
        sxx = (dx * dx).sum(axis=1)
        syy = (dy * dy).sum(axis=1)
        r = sxy / np.sqrt(sxx * syy)
    # exact constancy test; centred sums of a constant can be a few ulps off zero
    big = np.finfo(float).max
    x_const = np.where(observed, x, big).min(axis=1) == np.where(observed, x, -big).max(axis=1)
    y_const = np.where(observed, y, big).min(axis=1) == np.where(observed, y, -big).max(axis=1)
    undefined = (cnt < 2) | x_const | y_const
    r = np.clip(r, -1.0, 1.0)
    r[undefined] = np.nan
    return r


def pearson(
    x: Sequence[float],
    y: Sequence[float],
    x_mask: Sequence[bool] | None = None,
    y_mask: Sequence[bool] | None = None,
) -> float | None:
    """Pearson r over pairwise-complete cells, or None when undefined.

    Masks mark missing cells (True = missing); NaN values count as missing too.

    >>> pearson([1, 2, 3], [2, 4, 6])
    1.0
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise UsageError(f"pearson needs equal-length 1-D inputs, got {xa.shape} and {ya.shape}")
    missing = np.isnan(xa) | np.isnan(ya)
    if x_mask is not None:
        missing |= np.asarray(x_mask, dtype=bool)
    if y_mask is not None:
        missing |= np.asarray(y_mask, dtype=bool)
    r = pearson_batch(xa, ya, ~missing)[0]
    return None if math.isnan(r) else float(r)


@dataclass(frozen=True)
class CorrelationVector:
    """Correlations of ``target`` with each candidate; None marks undefined."""

    target: str
    entries: tuple[tuple[str, float | None], ...]

    def as_dict(self) -> dict[str, float | None]:
        return dict(self.entries)


def _numeric_view(d: Dataset, name: str) -> np.ndarray:
    j = d.index(name)
    if not d.kinds[j].is_numeric:
        raise UsageError(f"column {name!r} is not numeric; label-encode it first")
    col = d.columns[j].astype(float)
    return np.where(d.mask[j], np.nan, col)


def correlation_vector(d: Dataset, target: str, candidates: Iterable[str] | None = None) -> CorrelationVector:
    """Correlate ``target`` with every candidate (default: all other columns).

    Entries follow the dataset's column order.
    """
    t = _numeric_view(d, target)
    wanted = set(d.names if candidates is None else candidates)
    names = [n for n in d.names if n in wanted and n != target]
    for n in wanted:
        d.index(n)
    if not names:
        return CorrelationVector(target, ())
    cand = np.vstack([_numeric_view(d, n) for n in names])
    r = pearson_batch(np.broadcast_to(t, cand.shape), cand)
    return CorrelationVector(target, tuple((n, None if math.isnan(v) else float(v)) for n, v in zip(names, r)))


def write_correlation_csv(cv: CorrelationVector, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "r"])
        for name, r in cv.entries:
            w.writerow([name, "" if r is None else format_number(r)])


@dataclass(frozen=True)
class PredictorSelection:
    target: str
    predictors: tuple[str, ...]
    r_values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.predictors)


def select_predictors(cv: CorrelationVector, k: int) -> PredictorSelection:
    """Top-``k`` candidates by descending ``|r|``; earlier entries win ties."""
    if k < 1:
        raise UsageError(f"K must be positive, got {k}")
    defined = [(pos, name, r) for pos, (name, r) in enumerate(cv.entries) if r is not None]
    if not defined:
        raise NoPredictors(f"no candidate has a defined correlation with {cv.target!r}")
    ranked = sorted(defined, key=lambda t: (-abs(t[2]), t[0]))[:k]
    return PredictorSelection(cv.target, tuple(n for _, n, _ in ranked), tuple(r for _, _, r in ranked))


def to_distribution(r_values: Sequence[float]) -> np.ndarray:
    """Map correlations to probabilities proportional to ``|r| + EPSILON``."""
    r = np.asarray(r_values, dtype=float)
    if r.size == 0:
        raise UsageError("cannot build a distribution from an empty vector")
    a = np.abs(r) + EPSILON
    return a / a.sum()


def _clamp_renormalize(q: np.ndarray) -> np.ndarray:
    q = np.clip(q, Q_FLOOR, 1.0)
    return q / q.sum()


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """KL(p || q) in nats, with ``q`` clamped to [1e-6, 1] and renormalised."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise UsageError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.array_equal(p, q):
        return 0.0
    q = _clamp_renormalize(q)
    nz = p > 0
    kl = float(np.sum(p[nz] * np.log(p[nz] / q[nz])))
    # rounding noise only; a real negative value would be a bug and is left visible
    return 0.0 if -1e-12 < kl < 0.0 else kl
