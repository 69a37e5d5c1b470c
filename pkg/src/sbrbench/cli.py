"""Command line: ``sbrbench {prepare,tune,eval,sweep,report}``.

Exit codes: 0 success, 2 input error, 3 tuning failure, 4 missing artifact,
5 bad arguments.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from sbrbench import __version__
from sbrbench.config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    format_atom,
    load_config,
    parse_atom,
    read_best_config,
    split_top_level,
    write_best_config,
)
from sbrbench.dataio import (
    DataError,
    SessionDataset,
    compute_stats,
    ingest,
    preprocess,
    split_by_days,
    temporal_fraction,
    write_stats,
)
from sbrbench.evaluation import fit_and_evaluate
from sbrbench.models import MODELS, make_model
from sbrbench.report import read_results, render_report, render_sweeps, result_row, upsert_result
from sbrbench.tuning import (
    DEFAULT_TRIALS,
    SearchResult,
    Trial,
    TuningError,
    UnknownVariableError,
    make_validation_split,
    objective,
    random_search,
    sweep,
    tune_on_test,
)

logger = logging.getLogger("sbrbench")

EXIT_INPUT, EXIT_TUNING, EXIT_MISSING, EXIT_ARGS = 2, 3, 4, 5
SMOKE_TRIALS = 3
SPLITS = ("train", "test", "subtrain", "validation")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def _paths(cfg: ExperimentConfig) -> dict[str, Path]:
    out = cfg.out
    return {"data": out / "data", "tuning": out / "tuning", "sweeps": out / "sweeps", "results": out / "results.csv", "report": out / "report.txt"}


def _load_splits(cfg, names=SPLITS) -> dict[str, SessionDataset]:
    data = _paths(cfg)["data"]
    missing = [n for n in names if not (data / f"{n}.csv").is_file()]
    if missing:
        raise CliError(EXIT_MISSING, f"prepared splits missing in {data} ({', '.join(missing)}); run 'prepare' first")
    return {n: SessionDataset.read_csv(data / f"{n}.csv") for n in names}


def _check_model(kind: str) -> str:
    if kind not in MODELS:
        raise CliError(EXIT_ARGS, f"unknown model {kind!r}; choose from {', '.join(sorted(MODELS))}")
    return kind


def _best_path(cfg, kind) -> Path:
    return _paths(cfg)["tuning"] / f"{kind}_best.cfg"


def _load_best(cfg, kind, override=None) -> dict:
    path = Path(override) if override else _best_path(cfg, kind)
    try:
        file_kind, params = read_best_config(path)
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, f"tuned config not found: {path}; run 'tune --model {kind}' first") from None
    if file_kind != kind:
        raise CliError(EXIT_ARGS, f"{path} holds a {file_kind} config, not {kind}")
    return params


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_prepare(cfg: ExperimentConfig, args) -> None:
    ds = cfg.dataset
    events = ingest(ds.path, ds.format, retail_gap=ds.retail_gap, categories_path=ds.categories)
    data = preprocess(events, ds.min_item_support, ds.min_session_length)
    if ds.fraction > 1:
        data = temporal_fraction(data, ds.fraction)
    split = split_by_days(data, ds.test_days)
    subtrain, validation = make_validation_split(split.train, ds.test_days)

    out = _paths(cfg)["data"]
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "events.csv")
    for name, part in (("train", split.train), ("test", split.test), ("subtrain", subtrain), ("validation", validation)):
        part.to_csv(out / f"{name}.csv")
    stats = compute_stats(data)
    write_stats(stats, out / "stats.csv", ds.name)
    dataset_cfg = ds.as_dict()
    _write_json(
        out / "manifest.json",
        {
            "version": __version__,
            "config_hash": config_hash(dataset_cfg),
            "dataset": dataset_cfg,
            "split_boundary": split.split_boundary,
            "sessions": {n: p.n_sessions for n, p in (("train", split.train), ("test", split.test), ("subtrain", subtrain), ("validation", validation))},
        },
    )
    print(f"{ds.name}: {stats.as_row()}")


def _trials_csv(path: Path, result: SearchResult, names: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", *names, "objective", "seconds"])
        for t in result.trials:
            writer.writerow([t.index, *(format_atom(t.config.get(n)) for n in names), f"{t.objective:.6f}", f"{t.seconds:.3f}"])


def cmd_tune(cfg: ExperimentConfig, args) -> None:
    kind = _check_model(args.model)
    seed = cfg.require_seed()
    splits = _load_splits(cfg)
    spec = cfg.model(kind)
    space = spec.space()
    n_trials = args.n_trials or cfg.n_trials or DEFAULT_TRIALS[kind]
    if args.smoke:
        n_trials = min(n_trials, SMOKE_TRIALS)

    if space is None:
        score = objective(kind, spec.fixed, splits["subtrain"], splits["validation"])
        result = SearchResult(kind, dict(spec.fixed), score, [Trial(0, {}, score)])
        names = []
    else:
        result = random_search(
            kind, space, n_trials, seed, splits["subtrain"], splits["validation"], fixed=spec.fixed, workers=cfg.threads
        )
        names = list(space.dims)

    out = _paths(cfg)["tuning"]
    out.mkdir(parents=True, exist_ok=True)
    params = make_model(kind, result.best_config).params()
    chash = config_hash(params)
    write_best_config(
        out / f"{kind}_best.cfg",
        kind,
        params,
        {"objective_mrr@20": round(result.best_objective, 6), "seed": seed, "n_trials": len(result.trials), "config_hash": chash, "version": __version__},
    )
    _trials_csv(out / f"{kind}_trials.csv", result, names)
    _write_json(
        out / f"{kind}_summary.json",
        {
            "model": kind,
            "best_config": params,
            "best_objective": result.best_objective,
            "n_trials": len(result.trials),
            "failed_trials": [{"trial": t.index, "error": t.error} for t in result.trials if t.failed],
            "seed": seed,
            "config_hash": chash,
            "version": __version__,
        },
    )
    print(f"{kind}: best MRR@20 on validation {result.best_objective:.4f} with {params}")

    if args.tune_on_test:
        if space is None:
            raise CliError(EXIT_ARGS, f"{kind} has no search space; nothing to tune on test")
        record = tune_on_test(
            kind, space, n_trials, seed, splits["train"], splits["test"],
            validation_split=(splits["subtrain"], splits["validation"]), fixed=spec.fixed,
        )
        text = record.render()
        (out / f"{kind}_tune_on_test.txt").write_text(text)
        _write_json(
            out / f"{kind}_tune_on_test.json",
            {
                "label": "METHODOLOGICAL FLAW DEMO",
                "model": kind,
                "validation_tuned": {"config": record.proper.best_config, "test_mrr@20": record.proper_test_mrr},
                "test_tuned": {"config": record.leaky.best_config, "test_mrr@20": record.leaky_test_mrr},
                "delta_percent": record.delta_percent,
                "seed": seed,
                "version": __version__,
            },
        )
        print(text, end="")


def cmd_eval(cfg: ExperimentConfig, args) -> None:
    kind = _check_model(args.model)
    params = _load_best(cfg, kind, args.best_config)
    seed = cfg.require_seed()
    splits = _load_splits(cfg, ("train", "test"))
    model = make_model(kind, params)
    _, report, timing = fit_and_evaluate(model, splits["train"], splits["test"], seed=seed, cutoffs=cfg.cutoffs, workers=cfg.threads)
    report.check()
    row = result_row(cfg.dataset.name, kind, report, timing, seed, config_hash(model.params()))
    cfg.out.mkdir(parents=True, exist_ok=True)
    upsert_result(_paths(cfg)["results"], row)
    print(", ".join(f"{k}={v}" for k, v in row.items()))


def _parse_values(text: str, variable: str, seed: int) -> list:
    if text.startswith("random:"):
        if variable != "seed":
            raise CliError(EXIT_ARGS, "random:N values are only meaningful for --variable seed")
        rng = np.random.default_rng(seed)
        return sorted(int(v) for v in rng.integers(100, 10_000_000, size=int(text.split(":", 1)[1])))
    values = [parse_atom(v) for v in split_top_level(text)]
    if not values:
        raise CliError(EXIT_ARGS, "--values is empty")
    return values


def cmd_sweep(cfg: ExperimentConfig, args) -> None:
    kinds = [_check_model(k) for k in split_top_level(args.model)]
    seed = cfg.require_seed()
    for kind in kinds:
        if args.variable != "seed" and args.variable not in MODELS[kind].param_names():
            raise CliError(EXIT_ARGS, f"unknown variable {args.variable!r} for {kind}")
    values = _parse_values(args.values, args.variable, seed)
    fixed = {kind: _load_best(cfg, kind) for kind in kinds}
    names = ("train", "test") if args.split == "test" else ("subtrain", "validation")
    splits = _load_splits(cfg, names)

    out = _paths(cfg)["sweeps"]
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for kind in kinds:
        try:
            result = sweep(kind, fixed[kind], args.variable, values, splits[names[0]], splits[names[1]], seed=seed)
        except UnknownVariableError as exc:
            raise CliError(EXIT_ARGS, str(exc)) from exc
        results[kind] = result
        stem = out / f"{kind}_{args.variable}"
        with open(f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value", "mrr@20"])
            for v, s in zip(result.values, result.scores):
                writer.writerow([format_atom(v), "" if np.isnan(s) else f"{s:.6f}"])
        counts, edges = result.histogram()
        with open(f"{stem}_hist.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                writer.writerow([f"{lo:.6f}", f"{hi:.6f}", int(c)])
        _write_json(
            Path(f"{stem}_summary.json"),
            {
                "model": kind,
                **result.summary(),
                "row": result.format_row(),
                "split": args.split,
                "fixed_config": fixed[kind],
                "config_hash": config_hash(fixed[kind]),
                "seed": seed,
                "version": __version__,
            },
        )
    table = render_sweeps(results)
    (out / f"summary_{args.variable}.txt").write_text(table + "\n")
    print(table)


def cmd_report(cfg: ExperimentConfig | None, args) -> None:
    out = Path(args.out) if args.out else cfg.out
    text = render_report(read_results(out / "results.csv"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text + "\n")
    print(text)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # flags are accepted before and after the subcommand; the subcommand copy
    # must not overwrite a value given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    common.add_argument("--config", type=Path, help="experiment config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads for evaluation and tuning")
    common.add_argument("--tune-on-test", action="store_true", help="tune: also run the tune-on-test demonstration")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbrbench", description="Session-based recommendation baseline benchmark.", parents=[_global_flags(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _global_flags(True)

    sub.add_parser("prepare", parents=[common], help="ingest, filter and split a raw dataset")

    p = sub.add_parser("tune", parents=[common], help="random-search hyperparameters on the validation split")
    p.add_argument("--model", required=True)
    p.add_argument("--n-trials", type=int)
    p.add_argument("--smoke", action="store_true", help=f"cap the search at {SMOKE_TRIALS} trials")

    p = sub.add_parser("eval", parents=[common], help="fit on train, evaluate on test, record a results row")
    p.add_argument("--model", required=True)
    p.add_argument("--best-config", type=Path)

    p = sub.add_parser("sweep", parents=[common], help="vary one hyperparameter or the seed")
    p.add_argument("--model", required=True, help="model kind, or a comma-separated list")
    p.add_argument("--variable", required=True)
    p.add_argument("--values", required=True, help="comma-separated values, or random:N for N random seeds")
    p.add_argument("--split", choices=("test", "validation"), default="test")

    sub.add_parser("report", parents=[common], help="render result tables")
    return parser


COMMANDS = {"prepare": cmd_prepare, "tune": cmd_tune, "eval": cmd_eval, "sweep": cmd_sweep, "report": cmd_report}


def _resolve_config(args) -> ExperimentConfig | None:
    if args.config is None:
        if args.command == "report" and args.out:
            return None
        raise CliError(EXIT_ARGS, "--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TuningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TUNING
    return 0


if __name__ == "__main__":
    sys.exit(main())
