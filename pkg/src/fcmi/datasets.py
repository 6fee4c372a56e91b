"""Bundled and synthetic datasets."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .table import Dataset, read_csv


def iris_path() -> Path:
    return Path(str(resources.files("fcmi") / "data" / "iris.csv"))


def load_iris() -> Dataset:
    """Fisher's iris data: 150 rows, four measurements and a ``species`` label."""
    return read_csv(iris_path())


def linear_synthetic(
    n_rows: int = 1000,
    coefs: tuple[float, ...] = (2.0, -1.0, 0.5),
    noise: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Independent standard-normal predictors ``k1..kK`` and ``y = sum(c_i k_i) + noise``."""
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((n_rows, len(coefs)))
    y = k @ np.asarray(coefs) + noise * rng.standard_normal(n_rows)
    names = [f"k{i + 1}" for i in range(len(coefs))] + ["y"]
    return Dataset.from_columns(names, [*k.T, y])
