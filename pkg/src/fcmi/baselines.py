"""Comparison imputers: mean/mode, k-nearest neighbours, chained regressions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import FullyMissingColumn, UsageError
from .imputer import softmax
from .table import Dataset


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise UsageError(f"k must be at least 1, got {self.k}")


@dataclass(frozen=True)
class IterativeConfig:
    sweeps: int = 10
    tol: float = 1e-4

    def __post_init__(self) -> None:
        if self.sweeps < 1:
            raise UsageError(f"sweeps must be at least 1, got {self.sweeps}")
        if self.tol <= 0:
            raise UsageError(f"tol must be positive, got {self.tol}")


def _mode(values) -> object:
    """Most frequent value; ties go to the smallest."""
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def _fill_value(d: Dataset, j: int) -> object:
    observed = d.columns[j][~d.mask[j]]
    if observed.size == 0:
        raise FullyMissingColumn(f"column {d.names[j]!r} has no observed cells")
    if d.kinds[j].is_numeric:
        return float(observed.mean())
    return _mode(observed.tolist())


def mean_mode_impute(d: Dataset) -> Dataset:
    """Fill numeric cells with the column mean and categorical cells with the mode."""
    out = d
    for j, name in enumerate(d.names):
        rows = np.flatnonzero(d.mask[j])
        if rows.size:
            out = out.fill(name, rows, [_fill_value(d, j)] * rows.size)
    return out


def _encoded_matrix(d: Dataset) -> np.ndarray:
    """``(n_rows, n_cols)`` float matrix; categories become lexicographic codes, missing -> NaN."""
    x = np.full((d.n_rows, d.n_cols), np.nan)
    for j, kind in enumerate(d.kinds):
        m = d.mask[j]
        if kind.is_numeric:
            x[~m, j] = d.columns[j][~m]
        else:
            cats = sorted(set(d.columns[j][~m]))
            codes = {c: i for i, c in enumerate(cats)}
            x[~m, j] = [codes[v] for v in d.columns[j][~m]]
    return x


def _zscore(x: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        mu = np.nanmean(x, axis=0)
        sd = np.nanstd(x, axis=0)
    sd = np.where(np.isfinite(sd) & (sd > 0), sd, 1.0)
    return (x - mu) / sd


def knn_impute(d: Dataset, cfg: KnnConfig | None = None) -> tuple[Dataset, list[tuple[int, str]]]:
    """Impute each masked cell from the ``k`` nearest rows that observe it.

    The distance between two rows is the root mean squared difference over
    the z-scored columns both rows observe (categories enter as their
    lexicographic codes). Rows sharing no observed column are not donors.
    Distances equal to 12 decimals tie and are broken by row index.

    Returns the imputed dataset and the cells that had no donor and were
    filled with the column mean or mode instead.
    """
    cfg = cfg or KnnConfig()
    z = _zscore(_encoded_matrix(d))
    observed = ~np.isnan(z)
    zf = np.where(observed, z, 0.0)
    out = d
    flagged: list[tuple[int, str]] = []
    for j, name in enumerate(d.names):
        rows = np.flatnonzero(d.mask[j])
        if rows.size == 0:
            continue
        col = d.columns[j]
        values = []
        for i in rows:
            shared = observed & observed[i]
            m = shared.sum(axis=1)
            diff = np.where(shared, zf - zf[i], 0.0)
            with np.errstate(invalid="ignore", divide="ignore"):
                d2 = np.round((diff * diff).sum(axis=1) / m, 12)
            donor = ~d.mask[j] & (m > 0)
            donor[i] = False
            cand = np.flatnonzero(donor)
            if cand.size == 0:
                flagged.append((int(i), name))
                values.append(_fill_value(d, j))
                continue
            nearest = cand[np.lexsort((cand, d2[cand]))][: cfg.k]
            if d.kinds[j].is_numeric:
                values.append(float(col[nearest].astype(float).mean()))
            else:
                values.append(_mode(col[nearest].tolist()))
        out = out.fill(name, rows, values)
    return out, flagged


@dataclass
class IterativeReport:
    sweeps: int = 0
    converged: bool = False
    max_change: list[float] = field(default_factory=list)
    ridge_columns: set[str] = field(default_factory=set)


RIDGE_DAMPING = 1e-6


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares with intercept column already in ``x``; ridge if singular."""
    gram = x.T @ x
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        return np.linalg.solve(gram + RIDGE_DAMPING * np.eye(gram.shape[0]), x.T @ y), True
    return np.linalg.solve(gram, x.T @ y), False


def _fit_softmax(x: np.ndarray, codes: np.ndarray, classes: int, l2: float = 1e-4) -> np.ndarray:
    n, p = x.shape
    onehot = np.eye(classes)[codes]

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        w = theta.reshape(p, classes)
        probs = softmax(x @ w)
        loss = -np.sum(onehot * np.log(np.clip(probs, 1e-12, 1.0))) / n + 0.5 * l2 * theta @ theta
        grad = x.T @ (probs - onehot) / n + l2 * w
        return loss, grad.ravel()

    res = minimize(objective, np.zeros(p * classes), jac=True, method="L-BFGS-B", options={"maxiter": 200})
    return res.x.reshape(p, classes)


def _design(filled: np.ndarray, j: int, categorical: list[bool], n_levels: list[int]) -> np.ndarray:
    """Other columns as regressors: numeric as-is, categorical one-hot (first level dropped)."""
    parts = [np.ones((filled.shape[0], 1))]
    for c in range(filled.shape[1]):
        if c == j:
            continue
        if categorical[c]:
            if n_levels[c] > 1:
                parts.append(np.eye(n_levels[c])[filled[:, c].astype(int)][:, 1:])
        else:
            parts.append(filled[:, [c]])
    return np.hstack(parts)


def iterative_impute(d: Dataset, cfg: IterativeConfig | None = None) -> tuple[Dataset, IterativeReport]:
    """Chained-equation single imputation ("MICE-lite").

    Missing cells start at the column mean or mode. Each sweep regresses every
    incomplete column on all the others (least squares for numeric columns,
    multinomial logistic regression for categorical ones), fitting on the rows
    where it was observed and overwriting the cells that were missing. Numeric
    predictions are clamped to the column's observed range. Columns are
    updated in place, so later columns in a sweep see earlier updates.
    """
    cfg = cfg or IterativeConfig()
    report = IterativeReport()
    if d.is_complete():
        report.converged = True
        return d, report
    categorical = [k.is_categorical for k in d.kinds]
    levels = [sorted(set(d.columns[j][~d.mask[j]])) if categorical[j] else [] for j in range(d.n_cols)]
    n_levels = [len(lv) for lv in levels]
    x = _encoded_matrix(d)
    miss = d.mask.T
    for j in range(d.n_cols):
        if miss[:, j].all():
            raise FullyMissingColumn(f"column {d.names[j]!r} has no observed cells")
    filled = x.copy()
    for j in range(d.n_cols):
        obs = x[~miss[:, j], j]
        if categorical[j]:
            fill = float(_mode(obs.tolist()))
        else:
            fill = float(obs.mean())
        filled[miss[:, j], j] = fill

    incomplete = [j for j in range(d.n_cols) if miss[:, j].any()]
    for _ in range(cfg.sweeps):
        change = 0.0
        for j in incomplete:
            design = _design(filled, j, categorical, n_levels)
            train = ~miss[:, j]
            target = miss[:, j]
            if categorical[j]:
                if n_levels[j] < 2:
                    continue
                sd = design[:, 1:].std(axis=0)
                sd = np.where(sd > 0, sd, 1.0)
                mu = design[:, 1:].mean(axis=0)
                xs = np.column_stack([design[:, 0], (design[:, 1:] - mu) / sd])
                w = _fit_softmax(xs[train], filled[train, j].astype(int), n_levels[j])
                pred = np.argmax(xs[target] @ w, axis=1).astype(float)
                delta = float(np.any(pred != filled[target, j]))
            else:
                beta, ridged = _ols(design[train], filled[train, j])
                if ridged:
                    report.ridge_columns.add(d.names[j])
                obs = filled[train, j]
                pred = np.clip(design[target] @ beta, obs.min(), obs.max())
                delta = float(np.max(np.abs(pred - filled[target, j])))
            filled[target, j] = pred
            change = max(change, delta)
        report.sweeps += 1
        report.max_change.append(change)
        if change < cfg.tol:
            report.converged = True
            break

    out = d
    for j in incomplete:
        rows = np.flatnonzero(miss[:, j])
        vals = filled[rows, j]
        if categorical[j]:
            vals = [levels[j][int(v)] for v in vals]
        out = out.fill(d.names[j], rows, vals)
    return out, report
