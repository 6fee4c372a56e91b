"""Correlation-preserving regression imputation (FCMI).

Each incomplete column is regressed on its K most correlated columns. The
regression is fitted with a composite loss: a data term (mean squared error
for numeric targets, cross-entropy for categorical ones) plus a KL penalty
between the target's original correlation profile over the predictors and
the profile of the model's predictions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from .correlation import (
    Q_FLOOR,
    PredictorSelection,
    correlation_vector,
    kl_divergence,
    pearson_batch,
    select_predictors,
    to_distribution,
)
from .errors import DegenerateBatch, FullyMissingColumn, InsufficientData, NoPredictors, UsageError
from .table import NUMERIC, ColumnKind, Dataset, EncodingMap, categorical, label_decode, label_encode

log = logging.getLogger(__name__)

PROB_CLIP = 1e-9
MIN_STEP_FRACTION = 2.0**-40


@dataclass(frozen=True)
class FcmiConfig:
    k: int = 3
    learning_rate: float = 0.01
    max_iters: int = 1000
    tol: float = 1e-8
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise UsageError(f"K must be positive, got {self.k}")
        if self.learning_rate <= 0:
            raise UsageError(f"learning rate must be positive, got {self.learning_rate}")
        if self.max_iters < 1:
            raise UsageError(f"max_iters must be positive, got {self.max_iters}")
        if self.tol <= 0:
            raise UsageError(f"tol must be positive, got {self.tol}")
        if self.kl_weight < 0:
            raise UsageError(f"kl_weight must be nonnegative, got {self.kl_weight}")


@dataclass(frozen=True)
class LossBreakdown:
    E: float
    kl: float
    total: float


# -- loss -----------------------------------------------------------------------


def _prediction_correlations(f: np.ndarray, predictors: np.ndarray) -> np.ndarray:
    """|K| correlations of ``f`` with each predictor column; undefined -> 0."""
    zt = predictors.T
    r = pearson_batch(np.broadcast_to(f, zt.shape), zt, np.ones(zt.shape, dtype=bool))
    return np.nan_to_num(r, nan=0.0)


def _expected_code(probs: np.ndarray) -> np.ndarray:
    return probs @ np.arange(probs.shape[1], dtype=float)


def fcmi_loss(
    y_true: Sequence[float],
    y_pred: np.ndarray,
    predictors: np.ndarray,
    p: Sequence[float],
    kind: ColumnKind = NUMERIC,
    kl_weight: float = 1.0,
) -> LossBreakdown:
    """Composite loss for one batch.

    For a numeric ``kind`` ``y_pred`` holds predicted values; for a categorical
    one it holds an ``(n, classes)`` probability matrix and ``y_true`` holds
    integer codes. ``predictors`` is ``(n, K)``; ``p`` is the reference
    correlation distribution over those K columns. Correlations of the
    predictions against a predictor are taken as 0 when undefined (constant
    predictions).
    """
    y = np.asarray(y_true, dtype=float)
    z = np.asarray(predictors, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = y.shape[0]
    if n < 2:
        raise DegenerateBatch(f"need at least 2 rows to correlate, got {n}")
    if z.shape[0] != n or np.shape(y_pred)[0] != n:
        raise UsageError("batch lengths differ")
    if len(p) != z.shape[1]:
        raise UsageError(f"P has length {len(p)} but there are {z.shape[1]} predictors")
    if kind.is_numeric:
        f = np.asarray(y_pred, dtype=float)
        E = float(np.mean((y - f) ** 2))
    else:
        probs = np.asarray(y_pred, dtype=float)
        picked = np.clip(probs[np.arange(n), y.astype(int)], PROB_CLIP, 1.0 - PROB_CLIP)
        E = float(-np.mean(np.log(picked)))
        f = _expected_code(probs)
    q = to_distribution(_prediction_correlations(f, z))
    kl = kl_divergence(p, q)
    return LossBreakdown(E, kl, E + kl_weight * kl)


def _kl_grad_wrt_predictions(f: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
    """d KL(p || q(f)) / d f, following the clamp and both normalisations."""
    r = _prediction_correlations(f, z)
    a = np.abs(r) + 1e-6
    big_a = a.sum()
    q = a / big_a
    inside = (q >= Q_FLOOR) & (q <= 1.0)
    q_clamped = np.clip(q, Q_FLOOR, 1.0)
    s = q_clamped.sum()
    # KL = sum p ln p - sum p ln q_clamped + ln s
    g_q = np.where(inside, -p / q_clamped + 1.0 / s, 0.0)
    g_a = g_q / big_a - (g_q @ a) / big_a**2
    g_r = g_a * np.sign(r)

    df = f - f.mean()
    dz = z - z.mean(axis=0)
    s_ff = df @ df
    if s_ff == 0.0:
        return np.zeros_like(f)
    s_zz = np.einsum("ij,ij->j", dz, dz)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(s_zz > 0, g_r / np.sqrt(s_ff * s_zz), 0.0)
    return dz @ scale - (g_r @ r) * df / s_ff


class _Objective:
    """Loss and gradient over a flat parameter vector."""

    def __init__(self, z: np.ndarray, y: np.ndarray, p: np.ndarray, kl_weight: float):
        self.z = z
        self.y = y
        self.p = np.asarray(p, dtype=float)
        self.kl_weight = kl_weight
        self.n = z.shape[0]


class LinearObjective(_Objective):
    """``f = z @ w + b``; parameters are ``[w..., b]``."""

    kind = NUMERIC

    def predict(self, theta: np.ndarray) -> np.ndarray:
        return self.z @ theta[:-1] + theta[-1]

    def value(self, theta: np.ndarray) -> LossBreakdown:
        return fcmi_loss(self.y, self.predict(theta), self.z, self.p, NUMERIC, self.kl_weight)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        f = self.predict(theta)
        g_f = -2.0 * (self.y - f) / self.n
        if self.kl_weight:
            g_f = g_f + self.kl_weight * _kl_grad_wrt_predictions(f, self.z, self.p)
        return np.append(self.z.T @ g_f, g_f.sum())


class SoftmaxObjective(_Objective):
    """Multinomial logistic model; parameters are ``W`` (K x c) then ``b`` (c), flattened."""

    def __init__(self, z: np.ndarray, y: np.ndarray, p: np.ndarray, kl_weight: float, classes: int):
        super().__init__(z, y, p, kl_weight)
        self.classes = classes
        self.kind = categorical(classes)
        self.codes = y.astype(int)

    def unpack(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k, c = self.z.shape[1], self.classes
        return theta[: k * c].reshape(k, c), theta[k * c:]

    def probabilities(self, theta: np.ndarray) -> np.ndarray:
        w, b = self.unpack(theta)
        return softmax(self.z @ w + b)

    def value(self, theta: np.ndarray) -> LossBreakdown:
        return fcmi_loss(self.y, self.probabilities(theta), self.z, self.p, self.kind, self.kl_weight)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        probs = self.probabilities(theta)
        rows = np.arange(self.n)
        picked = probs[rows, self.codes]
        g_p = np.zeros_like(probs)
        live = (picked > PROB_CLIP) & (picked < 1.0 - PROB_CLIP)
        g_p[rows[live], self.codes[live]] = -1.0 / (self.n * picked[live])
        if self.kl_weight:
            f = _expected_code(probs)
            g_f = _kl_grad_wrt_predictions(f, self.z, self.p)
            g_p = g_p + self.kl_weight * np.outer(g_f, np.arange(self.classes, dtype=float))
        g_logits = probs * (g_p - np.sum(g_p * probs, axis=1, keepdims=True))
        return np.concatenate([(self.z.T @ g_logits).ravel(), g_logits.sum(axis=0)])


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# -- models and training ------------------------------------------------------


@dataclass(frozen=True)
class RegressionModel:
    """Fitted per-column model on z-scored predictors.

    Linear models also z-score the target. ``weights`` is ``(K,)`` for linear
    and ``(K, classes)`` for softmax models.
    """

    kind: ColumnKind
    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0
    encoding: EncodingMap | None = None

    @property
    def is_linear(self) -> bool:
        return self.kind.is_numeric

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.feature_mean) / self.feature_std

    def predict_values(self, x: np.ndarray) -> np.ndarray:
        """Linear predictions in original units, or softmax class codes."""
        z = self.standardize(x)
        if z.ndim != 2 or z.shape[1] != self.feature_mean.shape[0]:
            raise UsageError(f"expected {self.feature_mean.shape[0]} predictor columns, got shape {np.shape(x)}")
        if self.is_linear:
            return self.target_mean + self.target_std * (z @ self.weights + self.bias[0])
        return np.argmax(z @ self.weights + self.bias, axis=1).astype(float)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self.is_linear:
            raise UsageError("probabilities are only defined for softmax models")
        return softmax(self.standardize(x) @ self.weights + self.bias)

    def coefficients(self) -> tuple[np.ndarray, float]:
        """Linear weights and intercept in the original (unstandardised) units."""
        if not self.is_linear:
            raise UsageError("coefficients are only defined for linear models")
        w = self.weights * self.target_std / self.feature_std
        b = self.target_mean + self.target_std * self.bias[0] - float(w @ self.feature_mean)
        return w, b


@dataclass
class TrainingReport:
    iterations: int = 0
    trajectory: list[LossBreakdown] = field(default_factory=list)
    converged: bool = False
    grad_norm: float = 0.0

    def to_jsonl(self, fh: IO[str], column: str | None = None) -> None:
        for it, loss in enumerate(self.trajectory):
            rec = {"iteration": it, "E": loss.E, "kl": loss.kl, "total": loss.total}
            if column is not None:
                rec = {"column": column, **rec}
            fh.write(json.dumps(rec) + "\n")


def min_training_rows(k: int) -> int:
    return max(k + 2, 10)


def _safe_std(x: np.ndarray) -> np.ndarray:
    s = x.std(axis=0)
    return np.where(s > 0, s, 1.0)


def descend(objective: _Objective, theta: np.ndarray, cfg: FcmiConfig) -> tuple[np.ndarray, TrainingReport]:
    """Full-batch gradient descent with step halving on a fixed learning rate.

    A step is accepted only if it does not increase the total loss, so the
    trajectory is non-increasing. Stops at ``max_iters``, when an accepted
    step improves the total by less than ``tol``, or when no step size down
    to ``learning_rate * 2**-40`` decreases it.
    """
    current = objective.value(theta)
    report = TrainingReport(trajectory=[current])
    grad = objective.gradient(theta)
    for _ in range(cfg.max_iters):
        step = cfg.learning_rate
        while True:
            candidate = theta - step * grad
            loss = objective.value(candidate)
            if loss.total <= current.total:
                break
            step /= 2.0
            if step < cfg.learning_rate * MIN_STEP_FRACTION:
                report.converged = True
                report.grad_norm = float(np.linalg.norm(grad))
                return theta, report
        improvement = current.total - loss.total
        theta, current = candidate, loss
        report.trajectory.append(current)
        report.iterations += 1
        grad = objective.gradient(theta)
        if improvement < cfg.tol:
            report.converged = True
            break
    report.grad_norm = float(np.linalg.norm(grad))
    return theta, report


def fit_regressor(
    x: np.ndarray,
    y: np.ndarray,
    p: Sequence[float],
    kind: ColumnKind,
    cfg: FcmiConfig,
    encoding: EncodingMap | None = None,
) -> tuple[RegressionModel, TrainingReport]:
    """Fit one model on raw predictor matrix ``x`` (n x K) and target ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise UsageError(f"predictor matrix shape {x.shape} does not match {y.shape[0]} targets")
    n, k = x.shape
    if n < min_training_rows(k):
        raise InsufficientData(f"{n} training rows; need at least {min_training_rows(k)}")
    mu, sd = x.mean(axis=0), _safe_std(x)
    z = (x - mu) / sd
    p = np.asarray(p, dtype=float)

    if kind.is_numeric:
        y_mu = float(y.mean())
        y_sd = float(_safe_std(y))
        t = (y - y_mu) / y_sd
        design = np.column_stack([z, np.ones(n)])
        theta0, *_ = np.linalg.lstsq(design, t, rcond=None)
        objective: _Objective = LinearObjective(z, t, p, cfg.kl_weight)
        theta, report = descend(objective, theta0, cfg)
        model = RegressionModel(NUMERIC, theta[:-1].copy(), theta[-1:].copy(), mu, sd, y_mu, y_sd)
    else:
        classes = int(kind.cardinality) if encoding is None else len(encoding)
        classes = max(classes, int(y.max()) + 1)
        objective = SoftmaxObjective(z, y, p, cfg.kl_weight, classes)
        theta, report = descend(objective, np.zeros(k * classes + classes), cfg)
        w, b = objective.unpack(theta)
        model = RegressionModel(categorical(classes), w.copy(), b.copy(), mu, sd, encoding=encoding)
    return model, report


def _predictor_matrix(rows: Dataset, names: Sequence[str], fill: Mapping[str, float] | None = None) -> np.ndarray:
    cols = []
    for name in names:
        j = rows.index(name)
        if not rows.kinds[j].is_numeric:
            raise UsageError(f"predictor {name!r} is not numeric; label-encode it first")
        col = rows.columns[j].astype(float)
        m = rows.mask[j]
        if m.any():
            if fill is None or name not in fill:
                raise UsageError(f"predictor {name!r} has missing cells")
            col = np.where(m, fill[name], col)
        cols.append(col)
    return np.column_stack(cols) if cols else np.empty((rows.n_rows, 0))


def train_regressor(
    training_rows: Dataset,
    selection: PredictorSelection,
    p: Sequence[float],
    kind: ColumnKind,
    cfg: FcmiConfig,
    encoding: EncodingMap | None = None,
) -> tuple[RegressionModel, TrainingReport]:
    """Fit the model for ``selection.target`` on rows where it is observed.

    Rows with a missing predictor cell are left out unless that leaves too
    few rows, in which case those cells are filled with the predictor's mean.
    """
    d = training_rows
    pred_mask = d.mask[[d.index(n) for n in selection.predictors]]
    keep = _training_rows(d.column_mask(selection.target), pred_mask, len(selection.predictors))
    x = _predictor_matrix(d, selection.predictors, _column_means(d, selection.predictors))[keep]
    y = d.column(selection.target)[keep].astype(float)
    return fit_regressor(x, y, p, kind, cfg, encoding)


def predict_missing(
    model: RegressionModel,
    rows: Dataset,
    selection: PredictorSelection,
    decode: bool = True,
) -> list:
    """Predict the target for ``rows``; predictor cells must be observed.

    Softmax predictions are decoded through the model's encoding when it has
    one and ``decode`` is set; otherwise integer codes are returned.
    """
    if len(selection.predictors) != model.feature_mean.shape[0]:
        raise UsageError(
            f"model expects {model.feature_mean.shape[0]} predictors, selection has {len(selection.predictors)}"
        )
    x = _predictor_matrix(rows, selection.predictors)
    values = model.predict_values(x)
    if not model.is_linear and decode and model.encoding is not None:
        return [model.encoding.decode(v) for v in values]
    return values.tolist()


# -- orchestration -----------------------------------------------------------------


@dataclass
class ColumnResult:
    """Outcome for one imputed column; ``fallback`` names why FCMI was skipped."""

    target: str
    n_imputed: int
    selection: PredictorSelection | None = None
    report: TrainingReport | None = None
    fallback: str | None = None


def _training_rows(target_mask: np.ndarray, predictor_mask: np.ndarray, k: int) -> np.ndarray:
    """Rows with an observed target, preferring those with every predictor observed."""
    observed = ~target_mask
    complete = observed & ~predictor_mask.any(axis=0)
    return complete if complete.sum() >= min_training_rows(k) else observed


def _column_means(d: Dataset, names: Sequence[str]) -> dict[str, float]:
    out = {}
    for name in names:
        j = d.index(name)
        observed = d.columns[j][~d.mask[j]].astype(float)
        out[name] = float(observed.mean()) if observed.size else 0.0
    return out


def _fallback_values(d: Dataset, target: str, is_categorical: bool) -> float:
    j = d.index(target)
    observed = d.columns[j][~d.mask[j]].astype(float)
    if observed.size == 0:
        raise FullyMissingColumn(f"column {target!r} has no observed cells")
    if not is_categorical:
        return float(observed.mean())
    codes, counts = np.unique(observed, return_counts=True)
    return float(codes[np.argmax(counts)])


def fcmi_impute(
    d: Dataset,
    cfg: FcmiConfig | None = None,
    encodings: Mapping[str, EncodingMap] | None = None,
) -> tuple[Dataset, dict[str, ColumnResult]]:
    """Impute every masked cell of ``d``.

    Categorical (string) columns are label-encoded for the duration of the run
    and decoded on output; numeric columns listed in ``encodings`` are treated
    as already label-encoded categorical targets. Columns are processed in
    ascending order of missing count (ties by position), and each imputed
    column is a fully observed predictor for the later ones. Predictor cells
    still missing are mean-filled when predicting; training skips such rows
    unless too few would remain.

    A column with no usable predictor or too few training rows is filled with
    its mean (numeric) or mode (categorical) and its ``fallback`` is set.
    """
    cfg = cfg or FcmiConfig()
    if d.is_complete():
        return d, {}
    work = d
    emaps: dict[str, EncodingMap] = dict(encodings or {})
    decoded: list[EncodingMap] = []
    for name, kind in zip(d.names, d.kinds):
        if kind.is_categorical:
            work, emap = label_encode(work, name)
            emaps[name] = emap
            decoded.append(emap)

    order = sorted(
        (j for j in range(work.n_cols) if work.mask[j].any()),
        key=lambda j: (int(work.mask[j].sum()), j),
    )
    results: dict[str, ColumnResult] = {}
    for j in order:
        target = work.names[j]
        tmask = work.mask[j].copy()
        rows_missing = np.flatnonzero(tmask)
        emap = emaps.get(target)
        kind = NUMERIC if emap is None else categorical(len(emap))
        result = ColumnResult(target, int(rows_missing.size))
        try:
            cv = correlation_vector(work, target)
            selection = select_predictors(cv, cfg.k)
            result.selection = selection
            p = to_distribution(selection.r_values)
            means = _column_means(work, selection.predictors)
            x_all = _predictor_matrix(work, selection.predictors, means)
            pred_mask = work.mask[[work.index(n) for n in selection.predictors]]
            train = _training_rows(tmask, pred_mask, len(selection.predictors))
            y = work.columns[j][train].astype(float)
            model, report = fit_regressor(x_all[train], y, p, kind, cfg, emap)
            result.report = report
            values = model.predict_values(x_all[tmask])
            log.info(
                "imputed %s from %s in %d iterations",
                target, ",".join(selection.predictors), report.iterations,
            )
        except (NoPredictors, InsufficientData) as exc:
            result.fallback = f"{type(exc).__name__}: {exc}"
            values = np.full(rows_missing.size, _fallback_values(work, target, kind.is_categorical))
            log.info("imputed %s by %s fallback (%s)", target, "mode" if kind.is_categorical else "mean", exc)
        work = work.fill(target, rows_missing, values)
        results[target] = result

    for emap in decoded:
        work = label_decode(work, emap)
    return work, results
