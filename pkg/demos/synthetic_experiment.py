# Full experiment on a simulated price path: compare the three kernels.
import datetime as dt

import numpy as np

from reservoir_kernels import Sequence
from reservoir_kernels.pipeline import ExperimentConfig, TimeSeries, run_experiment

rng = np.random.default_rng(2017)
prices = 3000 * np.exp(np.cumsum(rng.normal(0.002, 0.04, 424)))
dates = tuple(dt.date(2017, 6, 2) + dt.timedelta(days=i) for i in range(prices.size))
series = TimeSeries(Sequence(prices), dates, ("close",))

for kernel in ("volterra", "rbf", "polynomial"):
    report = run_experiment(ExperimentConfig(kernel=kernel), series)
    params = {k: v for k, v in report.selected.items() if k not in ("error", "kernel_params")}
    print(f"{kernel:10s} test MAPE {report.test_mape:.3f}%  {params}")

# Persistence baseline: predict the last observed price.
actual = np.array([f["actual"] for f in report.forecasts])
last = np.array([prices[f["origin"]] for f in report.forecasts])
print(f"{'last price':10s} test MAPE {100 * np.mean(np.abs(last - actual) / actual):.3f}%")
