"""Correlation-preserving missing data imputation."""

from .baselines import IterativeConfig, KnnConfig, iterative_impute, knn_impute, mean_mode_impute
from .correlation import (
    CorrelationVector,
    PredictorSelection,
    correlation_vector,
    kl_divergence,
    pearson,
    select_predictors,
    to_distribution,
)
from .datasets import linear_synthetic, load_iris
from .harness import ExperimentResult, ExperimentSpec, accuracy, rmse, run_experiment
from .imputer import FcmiConfig, LossBreakdown, RegressionModel, TrainingReport, fcmi_impute, fcmi_loss
from .missingness import MissingnessSpec, inject_missing, missing_report
from .table import ColumnKind, Dataset, EncodingMap, label_encode, one_hot_encode, read_csv, write_csv

__all__ = [
    "ColumnKind",
    "CorrelationVector",
    "Dataset",
    "EncodingMap",
    "ExperimentResult",
    "ExperimentSpec",
    "FcmiConfig",
    "IterativeConfig",
    "KnnConfig",
    "LossBreakdown",
    "MissingnessSpec",
    "PredictorSelection",
    "RegressionModel",
    "TrainingReport",
    "accuracy",
    "correlation_vector",
    "fcmi_impute",
    "fcmi_loss",
    "inject_missing",
    "iterative_impute",
    "kl_divergence",
    "knn_impute",
    "label_encode",
    "linear_synthetic",
    "load_iris",
    "mean_mode_impute",
    "missing_report",
    "one_hot_encode",
    "pearson",
    "read_csv",
    "rmse",
    "run_experiment",
    "select_predictors",
    "to_distribution",
    "write_csv",
]
