import json
import shutil

import pytest

from fcmi.cli import main
from fcmi.missingness import read_truth
from fcmi.table import read_csv


@pytest.fixture
def workdir(tmp_path, iris_file):
    shutil.copy(iris_file, tmp_path / "iris.csv")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_inject_counts(workdir):
    src = workdir / "iris.csv"
    before = src.read_bytes()
    assert run("inject", "--in", src, "--out", workdir / "m.csv", "--truth", workdir / "t.csv", "--rate", "0.10", "--seed", 3) == 0
    damaged = read_csv(workdir / "m.csv")
    assert damaged.missing_count() == 15
    lines = (workdir / "m.csv").read_text().splitlines()[1:]
    assert sum(field == "" for line in lines for field in line.split(",")) == 15
    assert len(read_truth(workdir / "t.csv")) == 15
    assert src.read_bytes() == before


def test_inject_exclude_and_mar(workdir):
    assert run(
        "inject", "--in", workdir / "iris.csv", "--out", workdir / "m.csv", "--truth", workdir / "t.csv",
        "--mechanism", "mar", "--mar-driver", "petal_length", "--exclude", "species", "--rate", "0.2",
    ) == 0
    d = read_csv(workdir / "m.csv")
    assert d.missing_count("species") == 0 and d.missing_count("petal_length") == 0
    assert d.missing_count() == 30


def test_impute_is_reproducible(workdir):
    run("inject", "--in", workdir / "iris.csv", "--out", workdir / "x.csv", "--truth", workdir / "t.csv", "--seed", 1)
    for out in ("y1.csv", "y2.csv"):
        assert run("impute", "--in", workdir / "x.csv", "--algo", "fcmi", "--seed", 7, "--out", workdir / out) == 0
    assert (workdir / "y1.csv").read_bytes() == (workdir / "y2.csv").read_bytes()
    assert read_csv(workdir / "y1.csv").missing_count() == 0


@pytest.mark.parametrize("algo", ["knn", "mean", "mice-lite"])
def test_impute_baselines(workdir, algo):
    run("inject", "--in", workdir / "iris.csv", "--out", workdir / "x.csv", "--truth", workdir / "t.csv")
    assert run("impute", "--in", workdir / "x.csv", "--algo", algo, "--out", workdir / "y.csv", "--k", 3) == 0
    assert read_csv(workdir / "y.csv").missing_count() == 0


def test_impute_trace(workdir):
    run("inject", "--in", workdir / "iris.csv", "--out", workdir / "x.csv", "--truth", workdir / "t.csv", "--exclude", "species")
    assert run(
        "impute", "--in", workdir / "x.csv", "--out", workdir / "y.csv", "--trace", workdir / "trace.jsonl",
        "--kl-weight", "2", "--lr", "0.05", "--max-iters", "50", "--k", "2",
    ) == 0
    recs = [json.loads(l) for l in (workdir / "trace.jsonl").read_text().splitlines()]
    assert recs and set(recs[0]) == {"column", "iteration", "E", "kl", "total"}


def test_trace_needs_fcmi(workdir):
    assert run("impute", "--in", workdir / "iris.csv", "--out", workdir / "y.csv", "--algo", "knn", "--trace", workdir / "t") == 1


def test_corr_target(workdir, capsys):
    assert run("corr", "--in", workdir / "iris.csv", "--target", "petal_length") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "column,r"
    assert len(lines) == 5
    assert run("corr", "--in", workdir / "iris.csv", "--target", "petal_length", "--out", workdir / "c.csv") == 0
    assert (workdir / "c.csv").read_text().splitlines() == lines


def test_corr_all(workdir, capsys):
    assert run("corr", "--in", workdir / "iris.csv") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "target,column,r" and len(lines) == 1 + 5 * 4


def test_evaluate_pipeline(workdir, capsys):
    run("inject", "--in", workdir / "iris.csv", "--out", workdir / "x.csv", "--truth", workdir / "t.csv", "--exclude", "species")
    run("impute", "--in", workdir / "x.csv", "--out", workdir / "y.csv")
    capsys.readouterr()
    assert run("evaluate", "--in", workdir / "y.csv", "--original", workdir / "iris.csv", "--truth", workdir / "t.csv") == 0
    out = dict(line.split(",") for line in capsys.readouterr().out.splitlines()[1:])
    assert out["n_numeric"] == "15" and float(out["rmse"]) > 0


def test_evaluate_config(workdir):
    cfg = {"dataset": "iris.csv", "missingness": {"excluded_columns": ["species"]}, "algorithms": ["mean", "knn"], "seeds": [0, 1]}
    (workdir / "exp.json").write_text(json.dumps(cfg))
    assert run("evaluate", "--config", workdir / "exp.json", "--out", workdir / "res") == 0
    assert (workdir / "res" / "evaluate.csv").exists() and (workdir / "res" / "evaluate.json").exists()


def test_evaluate_missing_config(workdir):
    before = sorted(p.name for p in workdir.iterdir())
    assert run("evaluate", "--config", workdir / "missing.json", "--out", workdir / "res") == 1
    assert sorted(p.name for p in workdir.iterdir()) == before


def test_benchmark_columns(workdir):
    assert run("benchmark", "--in", workdir / "iris.csv", "--exclude", "species", "--seeds", 2, "--algo", "mean", "--algo", "fcmi", "--out", workdir / "b") == 0
    lines = (workdir / "b" / "benchmark.csv").read_text().splitlines()
    assert lines[0] == "algorithm,seed,metric,value,normalized_score"
    assert {l.split(",")[0] for l in lines[1:]} == {"mean", "fcmi"}


def test_unknown_flag_is_usage_error(workdir, capsys):
    assert run("impute", "--in", workdir / "iris.csv", "--out", workdir / "y.csv", "--bogus") == 1
    assert "usage error" in capsys.readouterr().err


def test_missing_input_is_usage_error(workdir):
    assert run("impute", "--in", workdir / "nope.csv", "--out", workdir / "y.csv") == 1


def test_malformed_csv_is_data_error(workdir, capsys):
    (workdir / "bad.csv").write_text("a,b\n1,2\n3\n")
    assert run("impute", "--in", workdir / "bad.csv", "--out", workdir / "y.csv") == 2
    assert "row 3" in capsys.readouterr().err


def test_incomplete_input_to_inject_is_usage_error(workdir):
    (workdir / "gappy.csv").write_text("a,b\n1,\n3,4\n")
    assert run("inject", "--in", workdir / "gappy.csv", "--out", workdir / "o.csv", "--truth", workdir / "t.csv") == 1


def test_no_subcommand():
    assert main([]) == 1
