"""Metrics and the inject -> impute -> score experiment loop."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .baselines import IterativeConfig, KnnConfig, iterative_impute, knn_impute, mean_mode_impute
from .errors import FcmiError, UsageError
from .imputer import FcmiConfig, fcmi_impute
from .missingness import GroundTruth, Mechanism, MissingnessSpec, inject_missing
from .table import Dataset, format_number, read_csv

log = logging.getLogger(__name__)


def rmse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """Root mean squared error.

    >>> round(rmse([2, 4, 6, 8, 10], [1.6, 4.5, 6.1, 7.9, 10.1]), 4)
    0.2966
    """
    t = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise UsageError(f"rmse needs equal-length 1-D inputs, got {t.shape} and {p.shape}")
    if t.size == 0:
        raise UsageError("rmse of an empty sequence is undefined")
    return math.sqrt(float(np.mean((t - p) ** 2)))


def accuracy(y_true: Sequence[Any], y_pred: Sequence[Any]) -> float:
    """Fraction of positions where the labels agree exactly."""
    if len(y_true) != len(y_pred):
        raise UsageError(f"accuracy needs equal lengths, got {len(y_true)} and {len(y_pred)}")
    if len(y_true) == 0:
        raise UsageError("accuracy of an empty sequence is undefined")
    return sum(a == b for a, b in zip(y_true, y_pred)) / len(y_true)


# -- algorithms -------------------------------------------------------------------

Imputer = Callable[[Dataset, dict], tuple[Dataset, list[str]]]


def _run_mean(d: Dataset, cfg: dict) -> tuple[Dataset, list[str]]:
    return mean_mode_impute(d), []


def _run_knn(d: Dataset, cfg: dict) -> tuple[Dataset, list[str]]:
    out, flagged = knn_impute(d, KnnConfig(**cfg))
    return out, [f"no-donor:{col}[{row}]" for row, col in flagged]


def _run_iterative(d: Dataset, cfg: dict) -> tuple[Dataset, list[str]]:
    out, report = iterative_impute(d, IterativeConfig(**cfg))
    flags = [f"ridge:{c}" for c in sorted(report.ridge_columns)]
    if not report.converged:
        flags.append("not-converged")
    return out, flags


def _run_fcmi(d: Dataset, cfg: dict) -> tuple[Dataset, list[str]]:
    out, results = fcmi_impute(d, FcmiConfig(**cfg))
    return out, [f"fallback:{name}" for name, r in results.items() if r.fallback]


ALGORITHMS: dict[str, Imputer] = {
    "mean": _run_mean,
    "knn": _run_knn,
    "mice-lite": _run_iterative,
    "fcmi": _run_fcmi,
}


def impute_with(name: str, d: Dataset, cfg: dict | None = None) -> tuple[Dataset, list[str]]:
    try:
        runner = ALGORITHMS[name]
    except KeyError:
        raise UsageError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    try:
        return runner(d, dict(cfg or {}))
    except TypeError as exc:
        raise UsageError(f"bad config for {name}: {exc}") from None


# -- experiment ----------------------------------------------------------------------


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: str
    missingness: MissingnessSpec
    algorithms: tuple[AlgorithmSpec, ...]
    seeds: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.algorithms:
            raise UsageError("experiment needs at least one algorithm")
        if not self.seeds:
            raise UsageError("experiment needs at least one seed")
        for a in self.algorithms:
            if a.name not in ALGORITHMS:
                raise UsageError(f"unknown algorithm {a.name!r}; choose from {sorted(ALGORITHMS)}")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> ExperimentSpec:
        """Build from the JSON config layout::

            {"dataset": "iris.csv",
             "missingness": {"rate": 0.1, "mechanism": "mcar",
                             "excluded_columns": ["species"], "mar_driver": null},
             "algorithms": ["mean", {"name": "fcmi", "config": {"k": 3}}],
             "seeds": [0, 1, 2]}

        A relative dataset path is resolved against ``base_dir``.
        """
        try:
            dataset = Path(raw["dataset"])
            miss = dict(raw.get("missingness", {}))
            algos = [
                AlgorithmSpec(a) if isinstance(a, str) else AlgorithmSpec(a["name"], dict(a.get("config", {})))
                for a in raw["algorithms"]
            ]
            seeds = tuple(int(s) for s in raw["seeds"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed experiment config: {exc!r}") from None
        if base_dir is not None and not dataset.is_absolute():
            dataset = base_dir / dataset
        unknown = set(miss) - {"rate", "mechanism", "excluded_columns", "mar_driver"}
        if unknown:
            raise UsageError(f"unknown missingness keys: {sorted(unknown)}")
        spec = MissingnessSpec(
            rate=float(miss.get("rate", 0.10)),
            mechanism=Mechanism(str(miss.get("mechanism", "mcar")).lower()),
            excluded_columns=frozenset(miss.get("excluded_columns", ())),
            mar_driver=miss.get("mar_driver"),
        )
        return cls(str(dataset), spec, tuple(algos), seeds)

    @classmethod
    def from_json(cls, path: str | Path) -> ExperimentSpec:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw, base_dir=path.parent)


@dataclass
class RunScore:
    algorithm: str
    seed: int
    rmse: float | None
    accuracy: float | None
    n_numeric: int
    n_categorical: int
    normalized_score: float | None = None
    flags: list[str] = field(default_factory=list)


@dataclass
class Aggregate:
    algorithm: str
    rmse_mean: float | None
    rmse_std: float | None
    accuracy_mean: float | None
    accuracy_std: float | None
    normalized_score_mean: float | None


@dataclass
class ExperimentResult:
    runs: list[RunScore]
    aggregates: list[Aggregate]
    injected: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "runs": [asdict(r) for r in self.runs],
            "aggregates": [asdict(a) for a in self.aggregates],
            "injected": {str(k): v for k, v in self.injected.items()},
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def csv_rows(self) -> list[list[str]]:
        """Flat ``algorithm, seed, metric, value, normalized_score`` rows."""
        rows = []
        for r in self.runs:
            metrics = [("rmse", r.rmse), ("accuracy", r.accuracy), ("n_numeric", r.n_numeric), ("n_categorical", r.n_categorical)]
            for metric, value in metrics:
                if value is None:
                    continue
                norm = ""
                if metric == "rmse" and r.normalized_score is not None:
                    norm = format_number(r.normalized_score)
                text = format_number(value) if isinstance(value, float) else str(value)
                rows.append([r.algorithm, str(r.seed), metric, text, norm])
        return rows

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(self.csv_rows())


CSV_COLUMNS = ["algorithm", "seed", "metric", "value", "normalized_score"]


def score_cells(original: Dataset, imputed: Dataset, truth: GroundTruth) -> tuple[float | None, float | None, int, int]:
    """RMSE over numeric truth cells and accuracy over categorical ones."""
    num_t, num_p, cat_t, cat_p = [], [], [], []
    for cell in truth:
        j = original.index(cell.column)
        value = imputed.columns[imputed.index(cell.column)][cell.row]
        if original.kinds[j].is_numeric:
            num_t.append(float(cell.value))
            num_p.append(float(value))
        else:
            cat_t.append(cell.value)
            cat_p.append(value)
    r = rmse(num_t, num_p) if num_t else None
    a = accuracy(cat_t, cat_p) if cat_t else None
    return r, a, len(num_t), len(cat_t)


def normalized_score(rmse_alg: float, rmse_mean: float) -> float:
    """``100 * (1 - rmse_alg / rmse_mean)`` clipped to [0, 100]."""
    if rmse_mean == 0.0:
        return 100.0 if rmse_alg == 0.0 else 0.0
    return float(min(100.0, max(0.0, 100.0 * (1.0 - rmse_alg / rmse_mean))))


def _mean_std(values: Iterable[float | None]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else None)


def run_on_dataset(d: Dataset, spec: ExperimentSpec) -> ExperimentResult:
    """Run every (seed, algorithm) pair on an already loaded complete dataset."""
    if not d.is_complete():
        raise UsageError("experiments need a fully observed base dataset")
    runs: list[RunScore] = []
    injected: dict[int, int] = {}
    for seed in spec.seeds:
        miss = MissingnessSpec(
            rate=spec.missingness.rate,
            mechanism=spec.missingness.mechanism,
            excluded_columns=spec.missingness.excluded_columns,
            seed=seed,
            mar_driver=spec.missingness.mar_driver,
        )
        damaged, truth = inject_missing(d, miss)
        injected[seed] = len(truth)
        baseline_rmse = score_cells(d, mean_mode_impute(damaged), truth)[0] if truth else None
        for algo in spec.algorithms:
            flags: list[str] = []
            try:
                imputed, flags = impute_with(algo.name, damaged, algo.config)
            except FcmiError as exc:
                # keep the other algorithms going; score the mean fill instead
                log.warning("%s failed on seed %d: %s", algo.name, seed, exc)
                imputed, flags = mean_mode_impute(damaged), [f"failed:{type(exc).__name__}"]
            r, a, n_num, n_cat = score_cells(d, imputed, truth)
            norm = normalized_score(r, baseline_rmse) if r is not None and baseline_rmse is not None else None
            runs.append(RunScore(algo.name, seed, r, a, n_num, n_cat, norm, flags))
            log.info("seed %d %s: rmse=%s accuracy=%s", seed, algo.name, r, a)

    aggregates = []
    for algo in spec.algorithms:
        mine = [r for r in runs if r.algorithm == algo.name]
        rm, rs = _mean_std(r.rmse for r in mine)
        am, as_ = _mean_std(r.accuracy for r in mine)
        nm, _ = _mean_std(r.normalized_score for r in mine)
        aggregates.append(Aggregate(algo.name, rm, rs, am, as_, nm))
    return ExperimentResult(runs, aggregates, injected)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    return run_on_dataset(read_csv(spec.dataset), spec)
