# Nested truncations of one series, the O(n^2) Gram fill, and a ridge forecast.
import time

import numpy as np

from reservoir_kernels import (
    KernelParams,
    Sequence,
    gram_extend,
    gram_streaming,
    nested_truncations,
    ridge_fit,
    ridge_predict,
)

rng = np.random.default_rng(1)
t = np.arange(400)
x = 0.5 + 0.3 * np.sin(t / 9.0) + 0.02 * rng.normal(size=t.size)

n = 346
params = KernelParams.from_theta(0.7, 0.6, bound=1.0)
sample = nested_truncations(Sequence(x[:n]), targets=x[1 : n + 1])

start = time.perf_counter()
gram = gram_streaming(sample, params)
print(f"streaming Gram {gram.n}x{gram.n} in {1e3 * (time.perf_counter() - start):.1f} ms")
print("PSD:", gram.is_psd(), gram.eigen_summary())

model = ridge_fit(gram, sample.targets, 1e-4, sample=sample)
# One-step-ahead forecast for the next truncation, which extends the series by one row.
ext = gram_extend(gram, sample, x[n : n + 1].reshape(1, 1), params)
print("forecast", ridge_predict(model, ext).values[0], "actual", x[n + 1])
