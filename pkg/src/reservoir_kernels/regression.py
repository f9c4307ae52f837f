"""Kernel ridge regression in representer form, forecasts and error metrics.

The coefficients minimize ``||K a - Y||^2 + ridge * a' K a``. For symmetric
``K`` the minimizer satisfies ``(K'K + ridge K) a = K Y``; whenever ``K`` is
invertible this is the same as ``(K + ridge I) a = Y``, which is what the
fast path solves with a Cholesky factorization.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ContractError, DataError, NumericalError, ParameterError
from .volterra import GramMatrix

RESIDUAL_RTOL = 1e-8


def fingerprint(sample) -> str:
    """SHA-256 over the window contents and targets of a sample."""
    digest = hashlib.sha256()
    for w in sample.windows:
        data = np.ascontiguousarray(w.data, dtype=np.float64)
        digest.update(np.asarray(data.shape, dtype=np.int64).tobytes())
        digest.update(data.tobytes())
    digest.update(np.ascontiguousarray(sample.targets, dtype=np.float64).tobytes())
    return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class RidgeModel:
    alpha: np.ndarray
    ridge: float
    params: object = None
    targets: Optional[np.ndarray] = None
    training_fingerprint: Optional[str] = None
    solver: str = "cholesky"

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def in_sample(self, gram: GramMatrix) -> np.ndarray:
        return gram.values @ self.alpha

    def to_dict(self) -> dict:
        params = self.params.to_dict() if hasattr(self.params, "to_dict") else self.params
        return {
            "alpha": self.alpha.tolist(),
            "ridge": self.ridge,
            "kernel": params,
            "training_fingerprint": self.training_fingerprint,
            "solver": self.solver,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict, params=None) -> "RidgeModel":
        return cls(
            alpha=np.asarray(doc["alpha"], dtype=np.float64),
            ridge=float(doc["ridge"]),
            params=params if params is not None else doc.get("kernel"),
            training_fingerprint=doc.get("training_fingerprint"),
            solver=doc.get("solver", "cholesky"),
        )


@dataclass(frozen=True, eq=False)
class Forecast:
    values: np.ndarray
    columns: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return self.values.shape[0]


def _objective_residual(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, ridge: float) -> float:
    """Normwise backward error of ``a`` for ``(K'K + ridge K) a = K y``."""
    Ka = K @ alpha
    lhs = K.T @ Ka + ridge * Ka
    rhs = K.T @ y
    k_norm = np.linalg.norm(K)
    scale = k_norm * ((k_norm + ridge) * np.linalg.norm(alpha) + np.linalg.norm(y))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(lhs - rhs) / scale)


def solve_regularized_system(K: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """Minimum-norm least-squares solution of ``(K'K + ridge K) a = K y``."""
    A = K.T @ K + ridge * K
    alpha, *_ = scipy.linalg.lstsq(A, K.T @ y, lapack_driver="gelsd")
    return alpha


def ridge_fit(gram, targets, ridge: float, sample=None) -> RidgeModel:
    """Fit representer coefficients for the given Gram matrix and targets."""
    K = gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=np.float64)
    params = gram.params if isinstance(gram, GramMatrix) else None
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if not ridge > 0:
        raise ParameterError(f"ridge must be positive, got {ridge}")
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ContractError(f"Gram matrix must be square, got shape {K.shape}")
    if y.shape[0] != K.shape[0]:
        raise ContractError(f"{K.shape[0]} Gram rows but {y.shape[0]} targets")
    if not np.array_equal(K, K.T):
        raise ContractError("Gram matrix is not symmetric")
    n = K.shape[0]
    fp = fingerprint(sample) if sample is not None else None
    if n == 0:
        return RidgeModel(np.zeros(0), float(ridge), params, y, fp)

    solver = "cholesky"
    alpha = None
    try:
        factor = scipy.linalg.cho_factor(K + ridge * np.eye(n), lower=True, check_finite=True)
        alpha = scipy.linalg.cho_solve(factor, y)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        alpha = None
    if alpha is None or not np.all(np.isfinite(alpha)) or _objective_residual(K, y, alpha, ridge) > RESIDUAL_RTOL:
        solver = "lstsq"
        alpha = solve_regularized_system(K, y, ridge)
        if not np.all(np.isfinite(alpha)) or _objective_residual(K, y, alpha, ridge) > RESIDUAL_RTOL:
            raise NumericalError("Gram numerically degenerate")
    return RidgeModel(alpha, float(ridge), params, y, fp, solver)


def ridge_predict(model: RidgeModel, gram_with_extension: GramMatrix) -> Forecast:
    ext = gram_with_extension.extension
    if ext is None:
        raise ContractError("Gram matrix has no forecasting extension")
    if ext.shape[0] != model.n:
        raise ContractError(f"extension has {ext.shape[0]} rows but the model has {model.n} coefficients")
    return Forecast(model.alpha @ ext, np.arange(ext.shape[1]))


def _percentage_errors(predicted, actual) -> np.ndarray:
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if predicted.shape != actual.shape:
        raise ContractError(f"{predicted.shape[0]} predictions but {actual.shape[0]} actual values")
    if np.any(actual == 0):
        raise DataError("MAPE undefined at zero target")
    return 100.0 * np.abs(predicted - actual) / np.abs(actual)


def mape(predicted, actual) -> float:
    """Mean absolute percentage error, in percent."""
    errors = _percentage_errors(predicted, actual)
    return float(errors.mean()) if errors.size else 0.0


def cumulative_mape(predicted, actual) -> np.ndarray:
    """Running sum of per-step absolute percentage errors."""
    return np.cumsum(_percentage_errors(predicted, actual))
