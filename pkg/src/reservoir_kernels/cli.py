"""Command line entry point: ``reservoir-kernels <command> --config cfg.json``.

Exit codes: 0 success, 1 data error, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .errors import ConfigurationError, DataError, NumericalError

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _load_config(args) -> pipeline.ExperimentConfig:
    doc = {}
    if args.config:
        doc = pipeline.ExperimentConfig.from_json(args.config).to_dict()
    overrides = {
        "data_path": args.data,
        "window": args.window,
        "horizon": args.horizon,
        "kernel": args.kernel,
        "output_dir": args.out,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if not doc.get("data_path"):
        doc["data_path"] = pipeline.default_data_path()
    return pipeline.ExperimentConfig.from_dict(doc)


def _print(doc) -> None:
    print(json.dumps(doc, indent=2))


def cmd_ingest(config, args) -> None:
    ts = pipeline.ingest_csv(config.data_path, config)
    _print({
        "path": config.data_path,
        "rows": len(ts),
        "columns": list(ts.columns),
        "first_date": ts.dates[0].isoformat() if len(ts) else None,
        "last_date": ts.dates[-1].isoformat() if len(ts) else None,
    })


def _first_grid_point(config, prepared):
    for label, params in pipeline.kernel_grid(config, prepared.bound):
        if not isinstance(params, str):
            return label, params
    raise ConfigurationError("empty feasible grid")


def cmd_gram(config, args) -> None:
    prepared = pipeline.prepare(config)
    label, params = _first_grid_point(config, prepared)
    train = prepared.train
    K = pipeline.kernel_matrix(train.windows, train.windows, params)
    K = np.tril(K) + np.tril(K, -1).T
    gram = pipeline.GramMatrix(K, params)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "gram.npy", gram.values)
    meta = pipeline.gram_meta(gram, params)
    (out / "gram_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    _print(meta)


def cmd_grid(config, args) -> None:
    prepared = pipeline.prepare(config)
    with pipeline.stage("grid_search"):
        result = pipeline.grid_search(config, prepared)
    doc = {"grid": result.rows, "selected": result.selected}
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid.json").write_text(json.dumps(doc, indent=2) + "\n")
    _print(result.selected)


def cmd_fit(config, args) -> None:
    prepared = pipeline.prepare(config)
    with pipeline.stage("grid_search"):
        result = pipeline.grid_search(config, prepared)
    with pipeline.stage("fit"):
        model = pipeline.fit_final(prepared, result.selected_params, result.selected_ridge)
    path = Path(args.model or Path(config.output_dir) / "model.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=2) + "\n")
    _print({"model": str(path), "selected": result.selected})


def cmd_predict(config, args) -> None:
    prepared = pipeline.prepare(config)
    path = Path(args.model or Path(config.output_dir) / "model.json")
    model = pipeline.load_model(path, prepared)
    with pipeline.stage("forecast"):
        records = pipeline.forecast_test(model, prepared, config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_predictions(records, out / "predictions.csv")
    _print({"predictions": str(out / "predictions.csv"), "count": len(records)})


def cmd_eval(config, args) -> None:
    path = Path(args.predictions or Path(config.output_dir) / "predictions.csv")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        actual = [float(r["actual"]) for r in rows]
        predicted = [float(r["predicted"]) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed predictions file ({exc})") from exc
    _print({
        "count": len(rows),
        "mape": pipeline.mape(predicted, actual),
        "cumulative_mape": pipeline.cumulative_mape(predicted, actual).tolist(),
        "published_mape": pipeline.PUBLISHED_MAPE,
    })


def cmd_run(config, args) -> None:
    report = pipeline.run_experiment(config)
    paths = pipeline.emit_report(report, config.output_dir)
    _print({
        "test_mape": report.test_mape,
        "published_mape": report.published_mape,
        "selected": report.selected,
        "files": {k: str(v) for k, v in paths.items()},
    })


COMMANDS = {
    "ingest": (cmd_ingest, "validate and summarize the input CSV"),
    "gram": (cmd_gram, "build the training Gram matrix and report its eigenvalues"),
    "fit": (cmd_fit, "grid-search and fit on the training windows, write model.json"),
    "predict": (cmd_predict, "forecast the test windows with a saved model"),
    "eval": (cmd_eval, "score a predictions.csv by MAPE"),
    "run": (cmd_run, "full experiment, writes the report files"),
    "grid": (cmd_grid, "grid search only"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reservoir-kernels", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--data", help="input CSV (overrides data_path)")
        p.add_argument("--window", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--kernel", choices=pipeline.KERNELS)
        p.add_argument("--out", help="output directory")
        if name in ("fit", "predict"):
            p.add_argument("--model", help="model JSON path (default <out>/model.json)")
        if name == "eval":
            p.add_argument("--predictions", help="predictions CSV (default <out>/predictions.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _load_config(args)
        COMMANDS[args.command][0](config, args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
