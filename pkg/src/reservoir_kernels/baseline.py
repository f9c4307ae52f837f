"""Static comparison kernels on flattened windows.

Windows are flattened time-major: row ``t`` contributes its ``d`` channels
as consecutive coordinates. Both kernels need equal-width windows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DimensionError, ParameterError
from .sequence import SampleSet, as_window
from .volterra import GramMatrix


@dataclass(frozen=True)
class BaselineParams:
    kind: Literal["rbf", "polynomial"] = "rbf"
    gamma: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind == "rbf":
            if not self.gamma > 0:
                raise ParameterError(f"RBF gamma must be positive, got {self.gamma}")
        elif self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ParameterError(f"polynomial degree must be an integer >= 1, got {self.degree}")
            if self.offset < 0:
                raise ParameterError(f"polynomial offset must be >= 0, got {self.offset}")
        else:
            raise ParameterError(f"unknown baseline kernel {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "rbf":
            return {"kind": "rbf", "gamma": self.gamma}
        return {"kind": "polynomial", "degree": int(self.degree), "offset": self.offset}


def flatten(windows) -> np.ndarray:
    windows = [as_window(w) for w in windows]
    if not windows:
        return np.zeros((0, 0))
    widths = {w.width for w in windows}
    channels = {w.d for w in windows}
    if len(widths) > 1 or len(channels) > 1:
        raise DimensionError(
            f"static kernels need equal window shapes, got widths {sorted(widths)} "
            f"and channel counts {sorted(channels)}"
        )
    return np.stack([w.data.reshape(-1) for w in windows])


def _kernel_matrix(u: np.ndarray, v: np.ndarray, params: BaselineParams) -> np.ndarray:
    if params.kind == "rbf":
        return np.exp(-params.gamma * cdist(u, v, "sqeuclidean"))
    return (u @ v.T + params.offset) ** int(params.degree)


def baseline_kernel(z, z_prime, params: BaselineParams) -> float:
    u = flatten([z, z_prime])
    if params.kind == "rbf":
        diff = u[0] - u[1]
        return float(np.exp(-params.gamma * np.dot(diff, diff)))
    return float((np.dot(u[0], u[1]) + params.offset) ** int(params.degree))


def baseline_cross(windows_a, windows_b, params: BaselineParams) -> np.ndarray:
    windows_a = [as_window(w) for w in windows_a]
    windows_b = [as_window(w) for w in windows_b]
    u = flatten(windows_a + windows_b)
    return _kernel_matrix(u[:len(windows_a)], u[len(windows_a):], params)


def baseline_gram(sample, params: BaselineParams) -> GramMatrix:
    windows = sample.windows if isinstance(sample, SampleSet) else list(sample)
    values = baseline_cross(windows, windows, params)
    values = np.tril(values) + np.tril(values, -1).T
    return GramMatrix(values, params, mode="pairwise")


def baseline_extend(gram: GramMatrix, sample, new_inputs, params: BaselineParams) -> GramMatrix:
    if gram.params != params:
        raise ConfigurationError("Gram matrix was built with different kernel parameters")
    windows = sample.windows if isinstance(sample, SampleSet) else list(sample)
    new_inputs = list(new_inputs)
    if not new_inputs:
        return gram.with_extension(np.zeros((gram.n, 0)))
    return gram.with_extension(baseline_cross(windows, new_inputs, params))
