"""Command line entry point.

Exit status: 0 on success, 1 on a usage error (bad flag, missing input or
config file), 2 on a data error (malformed CSV, impossible imputation).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

from .correlation import correlation_vector, write_correlation_csv
from .errors import DataError, UsageError
from .harness import ALGORITHMS, CSV_COLUMNS, AlgorithmSpec, ExperimentSpec, impute_with, run_experiment, score_cells
from .imputer import FcmiConfig, fcmi_impute
from .missingness import Mechanism, MissingnessSpec, inject_missing, read_truth, write_truth
from .table import Dataset, format_number, label_encode, read_csv, write_csv

log = logging.getLogger("fcmi")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(message)


def _exclude_list(values: list[str] | None) -> frozenset[str]:
    out: set[str] = set()
    for v in values or []:
        out.update(x.strip() for x in v.split(",") if x.strip())
    return frozenset(out)


def _read_input(path: str) -> Dataset:
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return read_csv(path)


def _missingness_from(args: argparse.Namespace, seed: int) -> MissingnessSpec:
    return MissingnessSpec(
        rate=args.rate,
        mechanism=Mechanism(args.mechanism),
        excluded_columns=_exclude_list(args.exclude),
        seed=seed,
        mar_driver=args.mar_driver,
    )


def _algo_config(name: str, args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if name == "fcmi":
        if args.k is not None:
            cfg["k"] = args.k
        if args.lr is not None:
            cfg["learning_rate"] = args.lr
        if args.max_iters is not None:
            cfg["max_iters"] = args.max_iters
        if args.kl_weight is not None:
            cfg["kl_weight"] = args.kl_weight
        cfg["seed"] = args.seed
    elif name == "knn" and args.k is not None:
        cfg["k"] = args.k
    return cfg


# -- subcommands -------------------------------------------------------------------


def cmd_inject(args: argparse.Namespace) -> int:
    d = _read_input(args.in_path)
    damaged, truth = inject_missing(d, _missingness_from(args, args.seed))
    write_csv(damaged, args.out)
    write_truth(truth, args.truth)
    log.info("masked %d cells", len(truth))
    return 0


def cmd_impute(args: argparse.Namespace) -> int:
    d = _read_input(args.in_path)
    if args.algo == "fcmi":
        out, results = fcmi_impute(d, FcmiConfig(**_algo_config("fcmi", args)))
        if args.trace:
            with open(args.trace, "w", encoding="utf-8") as fh:
                for name, res in results.items():
                    if res.report is not None:
                        res.report.to_jsonl(fh, column=name)
        for name, res in results.items():
            if res.fallback:
                log.warning("%s: %s", name, res.fallback)
    else:
        if args.trace:
            raise UsageError("--trace is only available with --algo fcmi")
        out, flags = impute_with(args.algo, d, _algo_config(args.algo, args))
        for f in flags:
            log.warning("%s", f)
    write_csv(out, args.out)
    return 0


def cmd_corr(args: argparse.Namespace) -> int:
    d = _read_input(args.in_path)
    for name, kind in zip(d.names, d.kinds):
        if kind.is_categorical:
            d, _ = label_encode(d, name)
    if args.target:
        cv = correlation_vector(d, args.target)
        if args.out:
            write_correlation_csv(cv, args.out)
            return 0
        header, rows = ["column", "r"], [[n, _fmt_r(r)] for n, r in cv.entries]
    else:
        header = ["target", "column", "r"]
        rows = [[t, n, _fmt_r(r)] for t in d.names for n, r in correlation_vector(d, t).entries]
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
    return 0


def _fmt_r(r: float | None) -> str:
    return "" if r is None else format_number(r)


def _emit_result(result, out_dir: str | None, stem: str) -> None:
    if out_dir is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(result.csv_rows())
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    result.write_csv(path / f"{stem}.csv")
    result.write_json(path / f"{stem}.json")
    for agg in result.aggregates:
        log.info(
            "%s: rmse=%s accuracy=%s normalized=%s",
            agg.algorithm, agg.rmse_mean, agg.accuracy_mean, agg.normalized_score_mean,
        )


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.config:
        spec = ExperimentSpec.from_json(args.config)
        if not Path(spec.dataset).is_file():
            raise UsageError(f"dataset not found: {spec.dataset}")
        _emit_result(run_experiment(spec), args.out, "evaluate")
        return 0
    if not (args.in_path and args.truth and args.original):
        raise UsageError("evaluate needs --config, or --in, --original and --truth")
    imputed = _read_input(args.in_path)
    original = _read_input(args.original)
    if not Path(args.truth).is_file():
        raise UsageError(f"truth file not found: {args.truth}")
    truth = read_truth(args.truth, original)
    r, a, n_num, n_cat = score_cells(original, imputed, truth)
    lines = ["metric,value"]
    if r is not None:
        lines.append(f"rmse,{r!r}")
    if a is not None:
        lines.append(f"accuracy,{a!r}")
    lines += [f"n_numeric,{n_num}", f"n_categorical,{n_cat}"]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    if args.config:
        spec = ExperimentSpec.from_json(args.config)
    else:
        if not args.in_path:
            raise UsageError("benchmark needs --config or --in")
        names = args.algo or ["mean", "knn", "mice-lite", "fcmi"]
        spec = ExperimentSpec(
            dataset=args.in_path,
            missingness=_missingness_from(args, 0),
            algorithms=tuple(AlgorithmSpec(n, _algo_config(n, args)) for n in names),
            seeds=tuple(range(args.seed, args.seed + args.seeds)),
        )
    if not Path(spec.dataset).is_file():
        raise UsageError(f"dataset not found: {spec.dataset}")
    _emit_result(run_experiment(spec), args.out, "benchmark")
    return 0


# -- parser ---------------------------------------------------------------------------


def _add_missingness_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rate", type=float, default=0.10, help="fraction of rows that get one masked cell")
    p.add_argument("--mechanism", choices=[m.value for m in Mechanism], default="mcar")
    p.add_argument("--mar-driver", help="column whose rank drives MAR row selection")
    p.add_argument("--exclude", action="append", help="column(s) never masked; repeat or comma-separate")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="predictor count for fcmi, neighbour count for knn")
    p.add_argument("--lr", type=float, help="fcmi learning rate")
    p.add_argument("--max-iters", type=int, help="fcmi iteration budget per column")
    p.add_argument("--kl-weight", type=float, help="weight of the fcmi correlation penalty")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fcmi", description="Correlation-preserving missing data imputation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per imputed column")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inject", help="mask cells of a complete CSV and record the truth")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", required=True, help="where to write row,column,value of masked cells")
    p.add_argument("--seed", type=int, default=0)
    _add_missingness_flags(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("impute", help="fill the missing cells of a CSV")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default="fcmi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="write the fcmi loss trajectory as JSON lines")
    _add_model_flags(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("corr", help="pairwise-complete Pearson correlations")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--target", help="report only correlations with this column")
    p.add_argument("--out")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("evaluate", help="score imputations against ground truth")
    p.add_argument("--config", help="experiment JSON; runs the whole inject/impute/score loop")
    p.add_argument("--in", dest="in_path", help="imputed CSV to score")
    p.add_argument("--original", help="complete CSV the truth was taken from")
    p.add_argument("--truth", help="truth CSV written by inject")
    p.add_argument("--out", help="output directory (with --config) or file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="inject, impute with every algorithm, and score over seeds")
    p.add_argument("--config", help="experiment JSON; overrides the dataset and model flags")
    p.add_argument("--in", dest="in_path")
    p.add_argument("--algo", action="append", choices=sorted(ALGORITHMS), help="repeat to pick several")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds")
    p.add_argument("--out", help="output directory for benchmark.csv and benchmark.json")
    _add_missingness_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fcmi: usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fcmi: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"fcmi: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
