"""End-to-end rolling-window forecasting experiment.

ingest -> normalize -> window -> grid search -> refit -> test forecasts -> report.

Each test forecast uses one fixed model fitted on the training windows and
the input window that ends at its forecast origin, so no data after the
origin is touched. All randomness-free: the same config and data always
give the same report.
"""
from __future__ import annotations

import contextlib
import csv
import datetime as dt
import itertools
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .baseline import BaselineParams, baseline_cross
from .errors import (
    ConfigurationError,
    DataError,
    IngestionError,
    InputBoundError,
    NumericalError,
    ParameterError,
)
from .regression import cumulative_mape, fingerprint, mape, ridge_fit
from .sequence import SampleSet, Sequence, make_rolling_windows, sup_norm
from .volterra import GramMatrix, KernelParams, cross_gram

log = logging.getLogger(__name__)

# Published test MAPE (percent) for each method on the daily bitcoin series.
PUBLISHED_MAPE = {
    "RBF": 4.094,
    "GAK": 4.458,
    "Sig(n)": 13.420,
    "Sig-PDE": 3.253,
    "Reservoir": 2.911,
}

KERNELS = ("volterra", "rbf", "polynomial")
NORMALIZATIONS = ("none", "divide_by_max", "divide_by_train_sup")


@dataclass
class ExperimentConfig:
    data_path: Optional[str] = None
    date_column: str = "date"
    value_columns: Optional[list] = None
    target_column: Optional[str] = None
    window: int = 36
    horizon: int = 2
    target_agg: str = "mean"
    split: str = "days"
    n_train: int = 346
    n_test: int = 78
    validation_size: int = 40
    normalization: str = "divide_by_train_sup"
    safety_factor: float = 1.0
    out_of_bound: str = "clip"
    kernel: str = "volterra"
    theta_grid: list = field(default_factory=lambda: [0.3, 0.5, 0.7, 0.9])
    lam_fraction_grid: list = field(default_factory=lambda: [0.3, 0.6, 0.9])
    ridge_grid: list = field(default_factory=lambda: [1e-6, 1e-4, 1e-2, 1.0])
    gamma_grid: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1.0])
    degree_grid: list = field(default_factory=lambda: [1, 2, 3])
    poly_offset: float = 1.0
    output_dir: str = "out"

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        if self.window < 1 or self.horizon < 1:
            raise ConfigurationError("window and horizon must be at least 1")
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")
        if self.split not in ("days", "windows"):
            raise ConfigurationError(f"unknown split {self.split!r}; use 'days' or 'windows'")
        if self.out_of_bound not in ("clip", "reject"):
            raise ConfigurationError(f"unknown out-of-bound policy {self.out_of_bound!r}")
        if self.target_agg not in ("mean", "last"):
            raise ConfigurationError(f"unknown target aggregation {self.target_agg!r}")
        if self.n_train < 1 or self.n_test < 1 or self.validation_size < 1:
            raise ConfigurationError("n_train, n_test and validation_size must be positive")
        if not self.safety_factor >= 1.0:
            raise ConfigurationError("safety_factor must be >= 1")
        grids = {"ridge_grid": self.ridge_grid}
        if self.kernel == "volterra":
            grids.update(theta_grid=self.theta_grid, lam_fraction_grid=self.lam_fraction_grid)
        elif self.kernel == "rbf":
            grids.update(gamma_grid=self.gamma_grid)
        else:
            grids.update(degree_grid=self.degree_grid)
        for name, grid in grids.items():
            if not grid:
                raise ConfigurationError(f"{name} must not be empty")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TimeSeries:
    """A :class:`Sequence` with its dates and column names."""

    sequence: Sequence
    dates: tuple
    columns: tuple

    def __len__(self) -> int:
        return self.sequence.n


@contextlib.contextmanager
def stage(name: str):
    """Prefix errors raised inside the block with the pipeline stage name."""
    try:
        yield
    except (DataError, ConfigurationError, NumericalError) as exc:
        msg = str(exc)
        if msg.startswith("["):
            raise
        raise type(exc)(f"[{name}] {msg}") from exc


def _parse_date(text: str) -> dt.date:
    text = text.strip()
    try:
        return dt.date.fromisoformat(text[:10]) if len(text) > 10 else dt.date.fromisoformat(text)
    except ValueError:
        return dt.datetime.fromisoformat(text).date()


def ingest_csv(path, config: Optional[ExperimentConfig] = None) -> TimeSeries:
    """Read a dated CSV into chronological order.

    Raises :class:`IngestionError` naming the file row (1-based, header is
    row 1) and column of the first bad cell.
    """
    config = config or ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path} is empty") from None
        if config.date_column not in header:
            raise IngestionError(f"{path}: date column {config.date_column!r} not in header {header}")
        value_columns = config.value_columns or [h for h in header if h != config.date_column]
        missing = [c for c in value_columns if c not in header]
        if missing:
            raise IngestionError(f"{path}: columns {missing} not in header {header}")
        date_idx = header.index(config.date_column)
        value_idx = [header.index(c) for c in value_columns]
        dates, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise IngestionError(f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}")
            try:
                dates.append(_parse_date(row[date_idx]))
            except ValueError:
                raise IngestionError(
                    f"{path}: row {line_no}, column {config.date_column!r}: "
                    f"unparseable date {row[date_idx]!r}"
                ) from None
            values = []
            for col, idx in zip(value_columns, value_idx):
                try:
                    v = float(row[idx])
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise IngestionError(
                        f"{path}: row {line_no}, column {col!r}: not a finite number: {row[idx]!r}"
                    )
                values.append(v)
            rows.append(values)
    if len(set(dates)) != len(dates):
        seen, dup = set(), None
        for d in dates:
            if d in seen:
                dup = d
                break
            seen.add(d)
        raise IngestionError(f"{path}: duplicate date {dup.isoformat()}")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    data = np.asarray([rows[i] for i in order], dtype=np.float64).reshape(len(rows), len(value_columns))
    log.info("ingested %d rows from %s", len(rows), path)
    return TimeSeries(Sequence(data), tuple(dates[i] for i in order), tuple(value_columns))


def normalize(series: Sequence, mode: str, train_range=slice(None)) -> tuple[Sequence, float]:
    """Scale a series by a statistic of its training rows; returns ``(scaled, scale)``."""
    if mode == "none":
        return series, 1.0
    if isinstance(train_range, tuple):
        train_range = slice(*train_range)
    if mode == "divide_by_train_sup":
        scale = sup_norm(Sequence(series.data[train_range]))
    elif mode == "divide_by_max":
        scale = sup_norm(series)
    else:
        raise ConfigurationError(f"unknown normalization {mode!r}")
    if scale == 0:
        raise DataError("degenerate data: training maximum is zero")
    return Sequence(series.data / scale), float(scale)


def clip_rows(data: np.ndarray, bound: float) -> tuple[np.ndarray, int]:
    """Shrink rows whose norm exceeds ``bound`` onto the sphere of radius ``bound``."""
    norms = np.linalg.norm(data, axis=1)
    over = norms > bound
    if not over.any():
        return data, 0
    out = np.array(data)
    out[over] *= (bound / norms[over])[:, None]
    return out, int(over.sum())


@dataclass(frozen=True)
class Split:
    """Window indices for training and testing, plus the rows the scale may use."""

    train: np.ndarray
    test: np.ndarray
    train_rows: int


def split_windows(n_rows: int, config: ExperimentConfig) -> Split:
    """Assign rolling windows to train and test without target overlap.

    ``days``: the first ``n_train`` rows are training days, the last
    ``n_test`` rows are test days. Training windows have their whole target
    inside the training days; test windows have their whole target inside
    the test days.

    ``windows``: the first ``n_train`` windows train and the last ``n_test``
    windows test; training windows whose target would reach the first test
    target are dropped.
    """
    w, h = config.window, config.horizon
    count = n_rows - w - h + 1
    if count < 1:
        raise DataError(f"series of length {n_rows} is too short for window {w} and horizon {h}")
    k = np.arange(count)
    if config.split == "days":
        if config.n_train + config.n_test > n_rows:
            raise ConfigurationError(
                f"split of {config.n_train} train + {config.n_test} test days does not fit {n_rows} rows"
            )
        test_start = n_rows - config.n_test
        train = k[k + w + h <= config.n_train]
        test = k[(k + w >= test_start) & (k + w + h <= n_rows)]
        train_rows = config.n_train
    else:
        if config.n_train + config.n_test > count:
            raise ConfigurationError(
                f"split of {config.n_train} train + {config.n_test} test windows does not fit {count} windows"
            )
        test = k[count - config.n_test:]
        first_target = test[0] + w
        train = k[: config.n_train]
        train = train[train + w + h <= first_target]
        train_rows = int(train[-1] + w + h) if train.size else 0
    if train.size == 0 or test.size == 0:
        raise ConfigurationError("split leaves no training or no test windows")
    return Split(train, test, train_rows)


def holdout(n: int, v: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Reduced-train and validation positions among ``n`` consecutive training windows."""
    if v >= n - horizon:
        raise ConfigurationError(
            f"validation size {v} leaves no training windows out of {n}"
        )
    val = np.arange(n - v, n)
    fit = np.arange(0, n - v - horizon + 1)
    return fit, val


def kernel_grid(config: ExperimentConfig, bound: float) -> list:
    """Kernel parameter candidates in declaration order; infeasible ones as error strings."""
    out = []
    if config.kernel == "volterra":
        for theta, frac in itertools.product(config.theta_grid, config.lam_fraction_grid):
            label = {"theta": theta, "lam_fraction": frac}
            try:
                out.append((label, KernelParams.from_theta(theta, frac, bound)))
            except ParameterError as exc:
                out.append((label, str(exc)))
    elif config.kernel == "rbf":
        for gamma in config.gamma_grid:
            label = {"gamma": gamma}
            try:
                out.append((label, BaselineParams("rbf", gamma=gamma)))
            except ParameterError as exc:
                out.append((label, str(exc)))
    else:
        for degree in config.degree_grid:
            label = {"degree": degree, "offset": config.poly_offset}
            try:
                out.append((label, BaselineParams("polynomial", degree=degree, offset=config.poly_offset)))
            except ParameterError as exc:
                out.append((label, str(exc)))
    return out


def kernel_matrix(windows_a, windows_b, params) -> np.ndarray:
    if isinstance(params, KernelParams):
        return cross_gram(windows_a, windows_b, params)
    return baseline_cross(windows_a, windows_b, params)


def _params_dict(params) -> dict:
    doc = params.to_dict()
    if isinstance(params, KernelParams):
        doc = {"kind": "volterra", **doc}
    return doc


@dataclass
class Prepared:
    """Everything the grid search and the test phase need, already scaled."""

    timeseries: TimeSeries
    scaled: Sequence
    scale: float
    bound: float
    samples: SampleSet
    split: Split
    clipped_rows: int

    @property
    def train(self) -> SampleSet:
        return self.samples.subset(self.split.train)

    @property
    def test(self) -> SampleSet:
        return self.samples.subset(self.split.test)


def prepare(config: ExperimentConfig, timeseries: Optional[TimeSeries] = None) -> Prepared:
    if timeseries is None:
        if not config.data_path:
            raise ConfigurationError("no data_path configured")
        with stage("ingest"):
            timeseries = ingest_csv(config.data_path, config)
    series = timeseries.sequence
    channel = 0
    if config.target_column is not None:
        if config.target_column not in timeseries.columns:
            raise ConfigurationError(f"target column {config.target_column!r} not among {timeseries.columns}")
        channel = timeseries.columns.index(config.target_column)
    with stage("window"):
        split = split_windows(series.n, config)
    with stage("normalize"):
        scaled, scale = normalize(series, config.normalization, slice(0, split.train_rows))
        bound = sup_norm(Sequence(scaled.data[: split.train_rows])) * config.safety_factor
        if bound == 0:
            raise DataError("degenerate data: training rows are all zero")
        # Rows after the training span may exceed the bound.
        data, clipped = clip_rows(scaled.data, bound * (1.0 + 1e-12))
        if clipped:
            if config.out_of_bound == "reject":
                raise InputBoundError(f"{clipped} rows after the training span exceed bound M = {bound:.6g}")
            log.warning("clipped %d rows exceeding bound M = %.6g", clipped, bound)
            scaled = Sequence(data)
    with stage("window"):
        raw_targets = make_rolling_windows(series, config.window, config.horizon, config.target_agg, channel).targets
        windows = make_rolling_windows(scaled, config.window, config.horizon, config.target_agg, channel).windows
        samples = SampleSet(windows, raw_targets)
    return Prepared(timeseries, scaled, scale, bound, samples, split, clipped)


@dataclass
class GridResult:
    rows: list
    selected: dict
    selected_params: object
    selected_ridge: float


def grid_search(config: ExperimentConfig, prepared: Prepared) -> GridResult:
    """Score every grid point by validation MAPE on held-out training windows.

    The grid is walked in declaration order (kernel parameters outer, ridge
    inner) and the first configuration with the smallest score wins.
    """
    train = prepared.train
    fit_idx, val_idx = holdout(len(train), config.validation_size, config.horizon)
    fit_windows = [train.windows[i] for i in fit_idx]
    val_windows = [train.windows[i] for i in val_idx]
    y_fit = train.targets[fit_idx] / prepared.scale
    y_val = train.targets[val_idx]
    rows = []
    best = None
    for label, params in kernel_grid(config, prepared.bound):
        if isinstance(params, str):
            for ridge in config.ridge_grid:
                rows.append({**label, "ridge": ridge, "validation_mape": None, "error": params})
            continue
        K = kernel_matrix(fit_windows, fit_windows, params)
        K = np.tril(K) + np.tril(K, -1).T
        K_val = kernel_matrix(fit_windows, val_windows, params)
        gram = GramMatrix(K, params)
        for ridge in config.ridge_grid:
            row = {**label, "ridge": ridge}
            try:
                model = ridge_fit(gram, y_fit, ridge)
                score = mape(prepared.scale * (model.alpha @ K_val), y_val)
                if not math.isfinite(score):
                    raise NumericalError("non-finite validation score")
                row.update(validation_mape=score, error=None)
                if best is None or score < best[0]:
                    best = (score, row, params, ridge)
            except (NumericalError, ParameterError) as exc:
                row.update(validation_mape=None, error=str(exc))
            rows.append(row)
    if best is None:
        raise ConfigurationError("empty feasible grid")
    return GridResult(rows, dict(best[1]), best[2], best[3])


@dataclass
class ExperimentReport:
    config: dict
    kernel: str
    data: dict
    grid: list
    selected: dict
    test_mape: float
    forecasts: list
    cumulative_mape: list
    gram_meta: dict
    published_mape: dict = field(default_factory=lambda: dict(PUBLISHED_MAPE))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        return cls(**doc)


@dataclass
class FittedModel:
    params: object
    ridge: float
    alpha: np.ndarray
    scale: float
    bound: float
    train_fingerprint: str
    gram: GramMatrix

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "ridge": self.ridge,
            "kernel": _params_dict(self.params),
            "training_fingerprint": self.train_fingerprint,
            "scale": self.scale,
            "bound": self.bound,
        }


def fit_final(prepared: Prepared, params, ridge: float) -> FittedModel:
    train = prepared.train
    K = kernel_matrix(train.windows, train.windows, params)
    K = np.tril(K) + np.tril(K, -1).T
    gram = GramMatrix(K, params)
    model = ridge_fit(gram, train.targets / prepared.scale, ridge, sample=train)
    return FittedModel(params, ridge, model.alpha, prepared.scale, prepared.bound, model.training_fingerprint, gram)


def params_from_dict(doc: dict):
    doc = dict(doc)
    kind = doc.pop("kind", "volterra")
    if kind == "volterra":
        return KernelParams(**doc)
    return BaselineParams(kind=kind, **doc)


def load_model(path, prepared: Prepared) -> FittedModel:
    """Load a model export and check it was trained on ``prepared``'s training windows."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read model {path}: {exc}") from exc
    params = params_from_dict(doc["kernel"])
    train = prepared.train
    if doc.get("training_fingerprint") != fingerprint(train):
        raise ConfigurationError("model was trained on different data or windowing")
    K = kernel_matrix(train.windows, train.windows, params)
    K = np.tril(K) + np.tril(K, -1).T
    return FittedModel(
        params, float(doc["ridge"]), np.asarray(doc["alpha"], dtype=np.float64),
        float(doc["scale"]), float(doc["bound"]), doc["training_fingerprint"], GramMatrix(K, params),
    )


def forecast_test(model: FittedModel, prepared: Prepared, config: ExperimentConfig) -> list:
    """Forecast every test target from its own input window with the fixed model.

    Each record notes the rows its input touched and its forecast origin so
    the absence of lookahead can be checked afterwards.
    """
    test = prepared.test
    train = prepared.train
    ext = kernel_matrix(train.windows, test.windows, model.params)
    gram = model.gram.with_extension(ext)
    predicted = model.scale * (model.alpha @ gram.extension)
    dates = prepared.timeseries.dates
    records = []
    for j, w in enumerate(test.windows):
        target_row = w.stop
        records.append({
            "date": dates[target_row].isoformat() if dates else str(target_row),
            "origin": w.stop - 1,
            "input_rows": [w.start, w.stop],
            "target_rows": [w.stop, w.stop + config.horizon],
            "actual": float(test.targets[j]),
            "predicted": float(predicted[j]),
        })
    return records


def gram_meta(gram: GramMatrix, params) -> dict:
    summary = gram.eigen_summary()
    return {
        "n": gram.n,
        "h": gram.h,
        "kernel": _params_dict(params),
        "min_entry": float(gram.values.min()) if gram.n else None,
        "max_entry": float(gram.values.max()) if gram.n else None,
        **summary,
    }


def run_experiment(config: ExperimentConfig, timeseries: Optional[TimeSeries] = None) -> ExperimentReport:
    prepared = prepare(config, timeseries)
    with stage("grid_search"):
        result = grid_search(config, prepared)
    with stage("fit"):
        model = fit_final(prepared, result.selected_params, result.selected_ridge)
    with stage("forecast"):
        records = forecast_test(model, prepared, config)
    with stage("evaluate"):
        predicted = [r["predicted"] for r in records]
        actual = [r["actual"] for r in records]
        test_mape = mape(predicted, actual)
        cumulative = cumulative_mape(predicted, actual).tolist()
    ts = prepared.timeseries
    data = {
        "rows": len(ts),
        "columns": list(ts.columns),
        "first_date": ts.dates[0].isoformat() if ts.dates else None,
        "last_date": ts.dates[-1].isoformat() if ts.dates else None,
        "scale": prepared.scale,
        "bound": prepared.bound,
        "clipped_rows": prepared.clipped_rows,
        "train_rows": prepared.split.train_rows,
        "train_windows": int(prepared.split.train.size),
        "test_windows": int(prepared.split.test.size),
    }
    return ExperimentReport(
        config=config.to_dict(),
        kernel=config.kernel,
        data=data,
        grid=result.rows,
        selected={**result.selected, "kernel_params": _params_dict(result.selected_params)},
        test_mape=test_mape,
        forecasts=records,
        cumulative_mape=cumulative,
        gram_meta=gram_meta(model.gram, model.params),
    )


def write_predictions(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "actual", "predicted"])
        for r in records:
            writer.writerow([r["date"], repr(r["actual"]), repr(r["predicted"])])


def emit_report(report: ExperimentReport, output_dir) -> dict:
    """Write ``report.json``, ``predictions.csv``, ``cumulative_mape.csv`` and ``gram_meta.json``."""
    out = Path(output_dir)
    paths = {
        "report": out / "report.json",
        "predictions": out / "predictions.csv",
        "cumulative_mape": out / "cumulative_mape.csv",
        "gram_meta": out / "gram_meta.json",
    }
    current = out
    try:
        out.mkdir(parents=True, exist_ok=True)
        current = paths["report"]
        current.write_text(report.to_json() + "\n")
        current = paths["predictions"]
        write_predictions(report.forecasts, current)
        current = paths["cumulative_mape"]
        with open(current, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "value"])
            for step, value in enumerate(report.cumulative_mape, start=1):
                writer.writerow([step, repr(value)])
        current = paths["gram_meta"]
        current.write_text(json.dumps(report.gram_meta, indent=2) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {current}: {exc}") from exc
    return paths


def load_report(path) -> ExperimentReport:
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))


def default_data_path() -> Optional[str]:
    """Bundled bitcoin CSV location, overridable through ``RESERVOIR_KERNELS_BTC_CSV``."""
    env = os.environ.get("RESERVOIR_KERNELS_BTC_CSV")
    if env:
        return env
    return str(Path(__file__).resolve().parents[2] / "data" / "gemini_btcusd_daily.csv")
