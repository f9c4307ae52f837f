import csv
import datetime as dt
import json

import numpy as np
import pytest

from reservoir_kernels import Sequence, sup_norm
from reservoir_kernels.errors import ConfigurationError, DataError, IngestionError
from reservoir_kernels.pipeline import (
    PUBLISHED_MAPE,
    ExperimentConfig,
    ExperimentReport,
    TimeSeries,
    emit_report,
    grid_search,
    ingest_csv,
    load_report,
    normalize,
    prepare,
    run_experiment,
    split_windows,
)


def random_walk(n=200, seed=3, start=100.0):
    rng = np.random.default_rng(seed)
    return start * np.exp(np.cumsum(rng.normal(0.001, 0.03, n)))


def dated(values, start=dt.date(2017, 6, 2)):
    values = np.asarray(values, dtype=float)
    dates = tuple(start + dt.timedelta(days=i) for i in range(len(values)))
    return TimeSeries(Sequence(values), dates, ("close",))


def write_csv(path, rows, header=("date", "close")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


SMALL = dict(window=10, horizon=2, n_train=120, n_test=40, validation_size=15,
             theta_grid=[0.5, 0.9], lam_fraction_grid=[0.3, 0.9], ridge_grid=[1e-4, 1e-2])


class TestIngest:
    def test_three_rows(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", [("2020-01-01", "1.5"), ("2020-01-02", "2.5"), ("2020-01-03", "3")])
        ts = ingest_csv(path)
        assert ts.sequence.n == 3 and ts.sequence.d == 1
        np.testing.assert_array_equal(ts.sequence.data.ravel(), [1.5, 2.5, 3.0])

    def test_row_count_matches_line_count(self, tmp_path):
        values = random_walk(57)
        rows = [((dt.date(2018, 1, 1) + dt.timedelta(days=i)).isoformat(), repr(float(v))) for i, v in enumerate(values)]
        path = write_csv(tmp_path / "b.csv", rows)
        with open(path) as fh:
            lines = sum(1 for line in fh if line.strip())
        assert len(ingest_csv(path)) == lines - 1

    def test_non_numeric_cell(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", [("2020-01-01", "1"), ("2020-01-02", "n/a")])
        with pytest.raises(IngestionError, match=r"row 3, column 'close'"):
            ingest_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError, match="not found"):
            ingest_csv(tmp_path / "nope.csv")

    def test_duplicate_dates(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", [("2020-01-02", "1"), ("2020-01-01", "2"), ("2020-01-02", "3")])
        with pytest.raises(IngestionError, match="duplicate date 2020-01-02"):
            ingest_csv(path)

    def test_unsorted_rows_are_sorted(self, tmp_path):
        path = write_csv(tmp_path / "e.csv", [("2020-01-03", "3"), ("2020-01-01", "1"), ("2020-01-02", "2")])
        ts = ingest_csv(path)
        np.testing.assert_array_equal(ts.sequence.data.ravel(), [1, 2, 3])
        assert ts.dates[0] == dt.date(2020, 1, 1)

    def test_selected_columns(self, tmp_path):
        path = write_csv(tmp_path / "f.csv", [("2020-01-01", "1", "10"), ("2020-01-02", "2", "20")],
                         header=("Date", "open", "close"))
        ts = ingest_csv(path, ExperimentConfig(date_column="Date", value_columns=["close", "open"]))
        np.testing.assert_array_equal(ts.sequence.data, [[10, 1], [20, 2]])

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path / "g.csv", [("2020-01-01", "1")])
        with pytest.raises(IngestionError, match="volume"):
            ingest_csv(path, ExperimentConfig(value_columns=["volume"]))


class TestNormalize:
    def test_none(self):
        s = Sequence([2.0, 4.0])
        out, scale = normalize(s, "none")
        assert out is s and scale == 1.0

    def test_train_sup(self):
        s = Sequence([2.0, 4.0, 8.0, 16.0])
        out, scale = normalize(s, "divide_by_train_sup", slice(0, 3))
        assert scale == 8.0
        assert sup_norm(Sequence(out.data[:3])) == 1.0

    def test_round_trip(self):
        s = Sequence(random_walk(30))
        out, scale = normalize(s, "divide_by_train_sup", slice(0, 20))
        np.testing.assert_allclose(out.data * scale, s.data, rtol=1e-12)

    def test_zero_training_max(self):
        with pytest.raises(DataError, match="degenerate"):
            normalize(Sequence([0.0, 0.0, 1.0]), "divide_by_train_sup", slice(0, 2))


class TestSplit:
    def test_day_split_has_no_target_overlap(self):
        cfg = ExperimentConfig(window=36, horizon=2, n_train=346, n_test=78)
        split = split_windows(424, cfg)
        assert split.train.size == 346 - 36 - 2 + 1
        assert split.test.size == 78 - 2 + 1
        last_train_target = split.train[-1] + 36 + 2 - 1
        assert last_train_target < 346
        assert split.test[0] + 36 >= 424 - 78

    def test_window_split(self):
        cfg = ExperimentConfig(window=5, horizon=2, split="windows", n_train=50, n_test=10)
        split = split_windows(100, cfg)
        assert split.test.size == 10
        assert split.train[-1] + 5 + 2 <= split.test[0] + 5

    def test_split_too_large(self):
        with pytest.raises(ConfigurationError):
            split_windows(100, ExperimentConfig(n_train=90, n_test=20))


class TestGrid:
    def test_single_point(self):
        cfg = ExperimentConfig(**{**SMALL, "theta_grid": [0.5], "lam_fraction_grid": [0.6], "ridge_grid": [1e-3]})
        result = grid_search(cfg, prepare(cfg, dated(random_walk())))
        assert len(result.rows) == 1
        assert result.selected["theta"] == 0.5 and result.selected["ridge"] == 1e-3

    def test_duplicate_point_first_wins(self):
        cfg = ExperimentConfig(**{**SMALL, "theta_grid": [0.5, 0.5], "lam_fraction_grid": [0.6], "ridge_grid": [1e-3]})
        result = grid_search(cfg, prepare(cfg, dated(random_walk())))
        assert result.rows[0]["validation_mape"] == result.rows[1]["validation_mape"]
        assert result.selected is not result.rows[1]
        assert result.selected == result.rows[0]

    def test_cartesian_count(self):
        cfg = ExperimentConfig(**{**SMALL, "theta_grid": [0.3, 0.5, 0.7], "lam_fraction_grid": [0.3, 0.6, 0.9],
                                  "ridge_grid": [1e-4, 1e-2, 1.0]})
        result = grid_search(cfg, prepare(cfg, dated(random_walk())))
        assert len(result.rows) == 27
        scores = [r["validation_mape"] for r in result.rows]
        assert result.selected["validation_mape"] == min(scores)

    def test_empty_feasible_grid(self):
        cfg = ExperimentConfig(**{**SMALL, "theta_grid": [1.0, 1.5]})
        with pytest.raises(ConfigurationError, match="empty feasible grid"):
            grid_search(cfg, prepare(cfg, dated(random_walk())))

    def test_infeasible_points_are_recorded(self):
        cfg = ExperimentConfig(**{**SMALL, "theta_grid": [1.2, 0.5]})
        result = grid_search(cfg, prepare(cfg, dated(random_walk())))
        assert result.rows[0]["validation_mape"] is None
        assert "tensorization" in result.rows[0]["error"]
        assert result.selected["theta"] == 0.5


class TestRun:
    def test_ar1_noiseless(self):
        x = np.empty(200)
        x[0] = 30.0
        for t in range(1, 200):
            x[t] = 10.0 + 0.9 * (x[t - 1] - 10.0)
        cfg = ExperimentConfig(**SMALL)
        report = run_experiment(cfg, dated(x))
        # closed-form predictor of the 2-step mean: 10 + (0.9 + 0.81) / 2 * (x_t - 10)
        oracle = [10.0 + 0.855 * (x[f["origin"]] - 10.0) for f in report.forecasts]
        np.testing.assert_allclose(oracle, [f["actual"] for f in report.forecasts], rtol=1e-12)
        assert report.test_mape < 1.0

    def test_kernel_choice_changes_only_kernel_rows(self):
        ts = dated(random_walk())
        a = run_experiment(ExperimentConfig(**SMALL), ts).to_dict()
        b = run_experiment(ExperimentConfig(**{**SMALL, "kernel": "rbf"}), ts).to_dict()
        assert a["data"] == b["data"]
        assert [f["actual"] for f in a["forecasts"]] == [f["actual"] for f in b["forecasts"]]
        assert [f["date"] for f in a["forecasts"]] == [f["date"] for f in b["forecasts"]]
        assert a["kernel"] == "volterra" and b["kernel"] == "rbf"
        assert a["published_mape"] == b["published_mape"] == PUBLISHED_MAPE

    def test_no_lookahead(self):
        values = random_walk()
        cfg = ExperimentConfig(**SMALL)
        base = run_experiment(cfg, dated(values))
        for f in base.forecasts:
            lo, hi = f["input_rows"]
            assert hi - 1 == f["origin"] < f["target_rows"][0]
        # Changing anything after a forecast's origin must leave that forecast unchanged.
        for j in (0, len(base.forecasts) // 2):
            origin = base.forecasts[j]["origin"]
            perturbed = values.copy()
            perturbed[origin + 1:] *= 0.5
            other = run_experiment(cfg, dated(perturbed))
            assert other.forecasts[j]["predicted"] == base.forecasts[j]["predicted"]

    def test_errors_are_tagged_with_stage(self, tmp_path):
        cfg = ExperimentConfig(**{**SMALL, "data_path": str(tmp_path / "missing.csv")})
        with pytest.raises(IngestionError, match=r"^\[ingest\]"):
            run_experiment(cfg)

    def test_reject_policy(self):
        values = random_walk()
        values[120:] = np.minimum(values[120:], 0.99 * values[:120].max())
        values[-5] = 10 * values.max()
        with pytest.raises(DataError, match="exceed bound"):
            run_experiment(ExperimentConfig(**{**SMALL, "out_of_bound": "reject"}), dated(values))
        report = run_experiment(ExperimentConfig(**SMALL), dated(values))
        assert report.data["clipped_rows"] == 1

    def test_from_csv(self, tmp_path):
        values = random_walk(170)
        rows = [((dt.date(2018, 1, 1) + dt.timedelta(days=i)).isoformat(), repr(float(v))) for i, v in enumerate(values)]
        path = write_csv(tmp_path / "p.csv", rows)
        report = run_experiment(ExperimentConfig(**{**SMALL, "data_path": str(path)}))
        assert report.data["rows"] == 170
        assert report.forecasts[0]["date"] == (dt.date(2018, 1, 1) + dt.timedelta(days=130)).isoformat()


class TestReport:
    def test_files_and_roundtrip(self, tmp_path):
        report = run_experiment(ExperimentConfig(**SMALL), dated(random_walk()))
        paths = emit_report(report, tmp_path / "out")
        assert load_report(paths["report"]).to_dict() == report.to_dict()
        with open(paths["predictions"]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["date", "actual", "predicted"]
        assert len(rows) - 1 == len(report.forecasts)
        with open(paths["cumulative_mape"]) as fh:
            cum = list(csv.DictReader(fh))
        assert float(cum[-1]["value"]) == pytest.approx(len(report.forecasts) * report.test_mape, rel=1e-12)
        meta = json.loads(paths["gram_meta"].read_text())
        assert {"n", "min_eigenvalue", "max_eigenvalue", "kernel"} <= set(meta)

    def _report(self, forecasts):
        return ExperimentReport(config={}, kernel="volterra", data={}, grid=[], selected={}, test_mape=0.0,
                                forecasts=forecasts, cumulative_mape=[], gram_meta={})

    def test_empty_forecast_header_only(self, tmp_path):
        paths = emit_report(self._report([]), tmp_path)
        assert paths["predictions"].read_text().strip() == "date,actual,predicted"

    def test_78_rows(self, tmp_path):
        forecasts = [{"date": f"d{i}", "actual": 1.0, "predicted": 1.0} for i in range(78)]
        paths = emit_report(self._report(forecasts), tmp_path)
        assert len(paths["predictions"].read_text().strip().splitlines()) == 79

    def test_deterministic(self, tmp_path):
        ts = dated(random_walk())
        a = emit_report(run_experiment(ExperimentConfig(**SMALL), ts), tmp_path / "a")
        b = emit_report(run_experiment(ExperimentConfig(**SMALL), ts), tmp_path / "b")
        assert a["report"].read_bytes() == b["report"].read_bytes()

    def test_unwritable_dir(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(DataError, match="cannot write"):
            emit_report(self._report([]), blocker / "sub")


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown config keys"):
            ExperimentConfig.from_dict({"windw": 3})

    @pytest.mark.parametrize("kw", [dict(window=0), dict(kernel="gak"), dict(ridge_grid=[]),
                                    dict(normalization="zscore"), dict(theta_grid=[])])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kw)

    def test_json_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(**SMALL)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(path) == cfg
