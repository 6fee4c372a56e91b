
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcmi.baselines import IterativeConfig, KnnConfig, iterative_impute, knn_impute, mean_mode_impute
from fcmi.errors import FullyMissingColumn, UsageError
from fcmi.missingness import MissingnessSpec, inject_missing
from fcmi.table import Dataset
from oracles import knn_oracle, small_frames


def assert_observed_untouched(before, after):
    assert after.missing_count() == 0
    for j in range(before.n_cols):
        keep = ~before.mask[j]
        assert list(after.columns[j][keep]) == list(before.columns[j][keep])


class TestMeanMode:
    def test_mean(self):
        out = mean_mode_impute(Dataset.from_columns(["a"], [[1, 2, None, 3]]))
        assert out.column("a")[2] == 2.0

    def test_mode(self):
        out = mean_mode_impute(Dataset.from_columns(["c"], [["a", "a", "b", None]]))
        assert out.column("c")[3] == "a"

    def test_mode_tie_is_lexicographic(self):
        out = mean_mode_impute(Dataset.from_columns(["c"], [["b", "a", None]]))
        assert out.column("c")[2] == "a"

    def test_complete_is_identity(self, iris):
        assert mean_mode_impute(iris) == iris

    def test_fully_missing(self):
        with pytest.raises(FullyMissingColumn):
            mean_mode_impute(Dataset.from_columns(["a", "b"], [[None, None], [1, 2]]))


@settings(max_examples=300, deadline=None)
@given(small_frames(), st.integers(1, 6))
def test_knn_matches_exhaustive_oracle(d, k):
    expected = knn_oracle(d, k)
    out, flagged = knn_impute(d, KnnConfig(k=k))
    assert_observed_untouched(d, out)
    assert set(flagged) == {(i, d.names[j]) for (i, j), v in expected.items() if v is None}
    for (i, j), v in expected.items():
        if v is None:
            continue
        got = out.columns[j][i]
        if d.kinds[j].is_numeric:
            assert got == pytest.approx(v, abs=1e-12)
        else:
            assert got == v


class TestKnn:
    def test_exact_duplicate_copied(self):
        d = Dataset.from_columns(["a", "b", "t"], [[1, 5, 9, 1], [2, 0, 3, 2], [10, 20, 30, None]])
        out, _ = knn_impute(d, KnnConfig(k=1))
        assert out.column("t")[3] == 10

    def test_k_all_rows_is_mean(self, rng):
        x = rng.normal(size=(3, 12))
        mask = np.zeros((3, 12), dtype=bool)
        mask[2, 4] = True
        d = Dataset.from_columns(["a", "b", "t"], list(x), mask)
        out, _ = knn_impute(d, KnnConfig(k=11))
        assert out.column("t")[4] == pytest.approx(np.delete(x[2], 4).mean())

    def test_equidistant_donors_averaged(self):
        d = Dataset.from_columns(["a", "t"], [[0, -1, 1, 10], [None, 2, 4, 100]])
        out, _ = knn_impute(d, KnnConfig(k=2))
        assert out.column("t")[0] == pytest.approx(3.0)

    def test_no_donor_falls_back_and_flags(self):
        d = Dataset.from_columns(["a", "t"], [[1.0, None, None], [None, 2.0, 4.0]])
        out, flagged = knn_impute(d)
        assert (0, "t") in flagged
        assert out.column("t")[0] == pytest.approx(3.0)

    def test_bad_k(self):
        with pytest.raises(UsageError):
            KnnConfig(k=0)


class TestIterative:
    def test_linear_consistent_data_recovered(self, rng):
        x = rng.normal(size=(2, 200))
        t = 1.5 * x[0] - 2 * x[1] + 0.3
        d = Dataset.from_columns(["a", "b", "t"], [*x, t])
        damaged, truth = inject_missing(d, MissingnessSpec(rate=0.1, excluded_columns={"a", "b"}, seed=0))
        out, report = iterative_impute(damaged)
        assert report.converged
        for cell in truth:
            assert out.column("t")[cell.row] == pytest.approx(cell.value, abs=1e-3)

    def test_early_stop_after_no_change(self, rng):
        x = rng.normal(size=(2, 100))
        d = Dataset.from_columns(["a", "b", "t"], [*x, x[0] + x[1]])
        damaged, _ = inject_missing(d, MissingnessSpec(rate=0.1, excluded_columns={"a", "b"}, seed=1))
        _, report = iterative_impute(damaged, IterativeConfig(sweeps=10))
        assert report.converged
        assert report.sweeps == 2
        assert report.max_change[-1] < 1e-4

    def test_single_sweep_is_one_regression_pass(self, rng):
        x = rng.normal(size=(2, 100))
        t = x[0] - x[1] + rng.normal(size=100) * 0.1
        d = Dataset.from_columns(["a", "b", "t"], [*x, t])
        damaged, truth = inject_missing(d, MissingnessSpec(rate=0.1, excluded_columns={"a", "b"}, seed=2))
        out, report = iterative_impute(damaged, IterativeConfig(sweeps=1))
        assert report.sweeps == 1
        keep = ~damaged.column_mask("t")
        a = np.column_stack([x[0][keep], x[1][keep], np.ones(keep.sum())])
        beta = np.linalg.lstsq(a, t[keep], rcond=None)[0]
        lo, hi = t[keep].min(), t[keep].max()
        for cell in truth:
            expected = np.clip(beta @ [x[0][cell.row], x[1][cell.row], 1.0], lo, hi)
            assert out.column("t")[cell.row] == pytest.approx(expected, abs=1e-9)

    def test_singular_design_uses_ridge(self, rng):
        a = rng.normal(size=50)
        t = 2 * a + rng.normal(size=50) * 0.1
        d = Dataset.from_columns(["a", "dup", "t"], [a, a.copy(), t])
        damaged, _ = inject_missing(d, MissingnessSpec(rate=0.1, excluded_columns={"a", "dup"}, seed=0))
        out, report = iterative_impute(damaged)
        assert "t" in report.ridge_columns
        assert out.missing_count() == 0

    def test_predictions_clamped_to_observed_range(self, rng):
        x = rng.normal(size=200)
        t = np.clip(3 * x, -1, 1)
        mask = np.zeros((2, 200), dtype=bool)
        mask[1, np.argsort(x)[-5:]] = True
        damaged = Dataset.from_columns(["x", "t"], [x, t], mask)
        out, _ = iterative_impute(damaged)
        observed = t[~mask[1]]
        filled = out.column("t")[mask[1]]
        assert filled.max() <= observed.max() and filled.min() >= observed.min()

    def test_categorical_column(self, iris):
        damaged, truth = inject_missing(iris, MissingnessSpec(rate=0.2, excluded_columns=set(iris.names[:4]), seed=5))
        out, _ = iterative_impute(damaged)
        hits = sum(out.column("species")[c.row] == c.value for c in truth)
        assert hits / len(truth) > 0.8

    def test_complete_identity(self, iris):
        out, report = iterative_impute(iris)
        assert out is iris and report.converged

    def test_config(self):
        with pytest.raises(UsageError):
            IterativeConfig(sweeps=0)


@pytest.mark.parametrize("name", ["mean", "knn", "mice"])
def test_all_imputers_fill_everything_without_touching_observed(name, iris):
    damaged, _ = inject_missing(iris, MissingnessSpec(rate=0.5, seed=21))
    if name == "mean":
        out = mean_mode_impute(damaged)
    elif name == "knn":
        out, _ = knn_impute(damaged)
    else:
        out, _ = iterative_impute(damaged)
    assert_observed_untouched(damaged, out)
