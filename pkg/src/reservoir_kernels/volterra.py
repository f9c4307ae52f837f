"""Volterra reservoir kernel.

For two inputs ``z``, ``z'`` with entries bounded by ``M`` the kernel obeys

    K(z, z') = 1 + lam**2 * K(T z, T z') / (1 - tau**2 <z_0, z'_0>)

where ``T`` drops the time-0 entry. Under zero padding the recursion bottoms
out at ``K(0, .) = 1 / (1 - lam**2)``, which is exact, so a finite window
needs exactly ``min(len(z), len(z'))`` recursion steps. Feature vectors are
never formed; everything is done with kernel values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError, InputBoundError, ParameterError
from .sequence import SampleSet, Sequence, Window, as_window

# Relative slack on the sup-norm check so that data scaled to exactly M
# survives floating point rounding.
BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """Kernel parameters ``(lam, tau, bound)``; ``bound`` is the input sup-norm ``M``.

    Construction validates the echo state constraints:
    ``tau**2 * bound**2 < 1`` and ``0 < lam < sqrt(1 - tau**2 * bound**2)``.
    """

    lam: float
    tau: float
    bound: float = 1.0

    def __post_init__(self):
        lam, tau, bound = (float(v) for v in (self.lam, self.tau, self.bound))
        for name, v in (("lam", lam), ("tau", tau), ("bound", bound)):
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
        if bound <= 0 or tau <= 0:
            raise ParameterError("bound M and tau must both be positive")
        if tau * tau * bound * bound >= 1.0:
            raise ParameterError(
                f"tensorization out of range: tau^2 M^2 = {tau * tau * bound * bound:.6g} >= 1"
            )
        if lam <= 0 or lam >= math.sqrt(1.0 - tau * tau * bound * bound):
            raise ParameterError(
                f"no echo state property for these parameters: lam = {lam:.6g} must lie "
                f"in (0, {math.sqrt(1.0 - tau * tau * bound * bound):.6g})"
            )
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "bound", bound)

    @property
    def rho(self) -> float:
        """Contraction constant ``lam / sqrt(1 - tau^2 M^2)``."""
        return self.lam / math.sqrt(1.0 - self.tau ** 2 * self.bound ** 2)

    @property
    def state_bound(self) -> float:
        """State norm bound ``L = 1 / (1 - rho)``."""
        return 1.0 / (1.0 - self.rho)

    @property
    def kernel_bound(self) -> float:
        """Upper bound ``1 / (1 - rho^2)`` on every kernel value."""
        return 1.0 / (1.0 - self.rho ** 2)

    @property
    def base_value(self) -> float:
        """Kernel value against the all-zero input, ``1 / (1 - lam^2)``."""
        return 1.0 / (1.0 - self.lam ** 2)

    @classmethod
    def from_theta(cls, theta: float, lam_fraction: float, bound: float = 1.0) -> "KernelParams":
        """Parametrize by ``theta = tau * M`` and ``lam`` as a fraction of its upper limit."""
        if not 0 < theta < 1:
            raise ParameterError(f"tensorization out of range: theta = {theta} not in (0, 1)")
        return cls(lam=lam_fraction * math.sqrt(1.0 - theta * theta), tau=theta / bound, bound=bound)

    def to_dict(self) -> dict:
        return {"lam": self.lam, "tau": self.tau, "bound": self.bound}


def validate(params: KernelParams | dict | tuple) -> KernelParams:
    """Return validated params, raising :class:`ParameterError` if infeasible."""
    if isinstance(params, KernelParams):
        return params
    if isinstance(params, dict):
        return KernelParams(**params)
    return KernelParams(*params)


def check_inputs(windows, params: KernelParams, d: Optional[int] = None) -> None:
    """Reject windows whose rows exceed ``M`` or whose channel counts differ."""
    limit = params.bound * (1.0 + BOUND_SLACK)
    for k, w in enumerate(windows):
        if d is not None and w.d != d:
            raise DimensionError(f"channel mismatch: expected {d}, window {k} has {w.d}")
        data = w.data
        if data.shape[0] == 0:
            continue
        norms = np.linalg.norm(data, axis=1)
        worst = int(np.argmax(norms))
        if norms[worst] > limit:
            raise InputBoundError(
                f"input exceeds bound M = {params.bound:.6g}: row {getattr(w, 'start', 0) + worst} "
                f"of window {k} has norm {norms[worst]:.6g}"
            )


def _row_dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a * b).sum(axis=-1)


def kernel_pair(z, z_prime, params: KernelParams, base: Optional[float] = None) -> float:
    """Kernel value between two windows, aligned at their last rows.

    ``base`` overrides the zero-tail value ``1 / (1 - lam^2)``; only useful
    for studying sensitivity to the initial condition.
    """
    z, z_prime = as_window(z), as_window(z_prime)
    if z.d != z_prime.d:
        raise DimensionError(f"channel mismatch: {z.d} vs {z_prime.d}")
    check_inputs((z, z_prime), params)
    m = min(z.width, z_prime.width)
    dots = _row_dots(z.data[z.width - m:], z_prime.data[z_prime.width - m:])
    lam2, tau2 = params.lam ** 2, params.tau ** 2
    value = params.base_value if base is None else float(base)
    for dot in dots:
        value = 1.0 + lam2 * value / (1.0 - tau2 * dot)
    return float(value)


def kernel_sum(z, z_prime, params: KernelParams, tolerance: float = 1e-12) -> float:
    """Kernel value from the explicit series, truncated with a guaranteed error.

    Terms ``lam^(2k) * prod_{j<k} 1 / (1 - tau^2 <z_{-j}, z'_{-j}>)`` are summed
    up to the first depth ``k`` whose remainder bound ``rho^(2(k+1)) / (1 - rho^2)``
    drops below ``tolerance``. Entries past either window's start are zero,
    so their factors are 1.
    """
    if tolerance <= 0:
        raise ParameterError("tolerance must be positive")
    z, z_prime = as_window(z), as_window(z_prime)
    if z.d != z_prime.d:
        raise DimensionError(f"channel mismatch: {z.d} vs {z_prime.d}")
    check_inputs((z, z_prime), params)
    rho2 = params.rho ** 2
    depth = 1
    while rho2 ** (depth + 1) / (1.0 - rho2) >= tolerance:
        depth += 1
    # newest first
    a = z.data[::-1]
    b = z_prime.data[::-1]
    m = min(len(a), len(b))
    factors = np.ones(depth)
    overlap = min(m, depth)
    factors[:overlap] = 1.0 / (1.0 - params.tau ** 2 * _row_dots(a[:overlap], b[:overlap]))
    lam2 = params.lam ** 2
    total = 1.0
    term = 1.0
    for k in range(depth):
        term *= lam2 * factors[k]
        total += term
    return float(total)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric kernel matrix plus an optional ``n x h`` forecasting extension."""

    values: np.ndarray
    params: object
    mode: str = "pairwise"
    extension: Optional[np.ndarray] = None
    boundary: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"Gram matrix must be square, got shape {values.shape}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.extension is not None:
            ext = np.asarray(self.extension, dtype=np.float64).reshape(values.shape[0], -1).copy()
            ext.setflags(write=False)
            object.__setattr__(self, "extension", ext)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> int:
        return 0 if self.extension is None else self.extension.shape[1]

    def with_extension(self, extension: np.ndarray) -> "GramMatrix":
        return GramMatrix(self.values, self.params, self.mode, extension, self.boundary)

    def eigen_summary(self) -> dict:
        if self.n == 0:
            return {"min_eigenvalue": None, "max_eigenvalue": None}
        eig = np.linalg.eigvalsh(self.values)
        return {"min_eigenvalue": float(eig[0]), "max_eigenvalue": float(eig[-1])}

    def is_psd(self, rel_tol: float = 1e-8) -> bool:
        summary = self.eigen_summary()
        if summary["max_eigenvalue"] is None:
            return True
        return summary["min_eigenvalue"] >= -rel_tol * abs(summary["max_eigenvalue"])


def _stack_right_aligned(windows) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into ``(count, length, d)``, left-padding with zeros."""
    length = max((w.width for w in windows), default=0)
    d = windows[0].d if windows else 1
    out = np.zeros((len(windows), length, d))
    widths = np.empty(len(windows), dtype=np.int64)
    for k, w in enumerate(windows):
        widths[k] = w.width
        if w.width:
            out[k, length - w.width:] = w.data
    return out, widths


def cross_gram(windows_a, windows_b, params: KernelParams, base: Optional[float] = None) -> np.ndarray:
    """Matrix of kernel values ``K(a_i, b_j)`` evaluated for all pairs at once.

    The recursion runs over aligned time positions from oldest to newest;
    a pair only updates once both windows have data at that position.
    """
    windows_a = [as_window(w) for w in windows_a]
    windows_b = [as_window(w) for w in windows_b]
    d = windows_a[0].d if windows_a else (windows_b[0].d if windows_b else 1)
    check_inputs(windows_a, params, d)
    check_inputs(windows_b, params, d)
    a, wa = _stack_right_aligned(windows_a)
    b, wb = _stack_right_aligned(windows_b)
    la, lb = a.shape[1], b.shape[1]
    lam2, tau2 = params.lam ** 2, params.tau ** 2
    values = np.full((len(windows_a), len(windows_b)), params.base_value if base is None else float(base))
    for back in range(min(la, lb), 0, -1):
        # ``back`` rows before the end, counting the last row as 1
        ra, rb = a[:, la - back, :], b[:, lb - back, :]
        dots = ra @ rb.T
        updated = 1.0 + lam2 * values / (1.0 - tau2 * dots)
        active = (wa[:, None] >= back) & (wb[None, :] >= back)
        values = np.where(active, updated, values)
    return values


def gram_pairwise(sample, params: KernelParams, base: Optional[float] = None) -> GramMatrix:
    """Gram matrix of arbitrary windows, ``values[i, j] = kernel_pair(w_i, w_j)``."""
    windows = sample.windows if isinstance(sample, SampleSet) else [as_window(w) for w in sample]
    values = cross_gram(windows, windows, params, base)
    values = np.tril(values) + np.tril(values, -1).T
    return GramMatrix(values, params, mode="pairwise")


def gram_streaming(sample, params: KernelParams, base: Optional[float] = None) -> GramMatrix:
    """Gram matrix of the nested truncations of one series in O(n^2).

    Row ``i`` (truncation ending at series row ``i``) is obtained from row
    ``i - 1`` shifted one diagonal: ``K[i, j] = 1 + lam^2 K[i-1, j-1] / (1 - tau^2 <Z_i, Z_j>)``,
    with the zero truncation ``K[i, -1] = 1 / (1 - lam^2)`` as boundary.
    """
    if isinstance(sample, Sequence):
        series = sample
    else:
        if not isinstance(sample, SampleSet) or not sample.is_nested():
            raise ConfigurationError("streaming mode requires nested truncations")
        series = sample.windows[0].series if len(sample) else Sequence.empty(sample.d)
        n_used = len(sample)
        if n_used != series.n:
            series = Sequence(series.data[:n_used])
    check_inputs([series.as_window()], params)
    z = series.data
    n = z.shape[0]
    init = params.base_value if base is None else float(base)
    lam2, tau2 = params.lam ** 2, params.tau ** 2
    dots = _row_dots(z[:, None, :], z[None, :, :])
    # column 0 of ``work`` is the zero-truncation boundary
    work = np.zeros((n + 1, n + 1))
    work[:, 0] = init
    for i in range(1, n + 1):
        work[i, 1:i + 1] = 1.0 + lam2 * work[i - 1, 0:i] / (1.0 - tau2 * dots[i - 1, 0:i])
    lower = work[1:, 1:]
    values = np.tril(lower) + np.tril(lower, -1).T
    boundary = np.full(n + 1, init)
    return GramMatrix(values, params, mode="streaming", boundary=boundary)


def gram_extend(
    gram: GramMatrix,
    sample,
    new_inputs,
    params: KernelParams,
) -> GramMatrix:
    """Attach kernel values between every training input and each forecast input.

    Pairwise mode: ``new_inputs`` is a list of windows and column ``j`` is
    ``kernel_pair`` of each training window against window ``j``.

    Streaming mode: ``new_inputs`` holds ``h`` further observations that
    continue the training series; column ``j`` is the kernel against the
    series extended by its first ``j`` new rows, filled by the diagonal
    recursion seeded with the Gram's last column.
    """
    if gram.params != params:
        raise ConfigurationError("Gram matrix was built with different kernel parameters")
    if gram.mode == "streaming":
        if isinstance(new_inputs, (Sequence, Window)):
            new = as_window(new_inputs).data
        else:
            new = np.asarray(new_inputs, dtype=np.float64)
            new = new.reshape(len(new), -1) if new.size else np.zeros((0, _channels(sample)))
        h = new.shape[0]
        if h == 0:
            return gram.with_extension(np.zeros((gram.n, 0)))
        if isinstance(sample, SampleSet):
            if not sample.is_nested():
                raise ConfigurationError("streaming mode requires nested truncations")
            train = sample.windows[-1].data if len(sample) else np.zeros((0, new.shape[1]))
        else:
            train = as_window(sample).data
        if train.shape[1] != new.shape[1]:
            raise DimensionError(f"channel mismatch: {train.shape[1]} vs {new.shape[1]}")
        check_inputs([Sequence(new).as_window()], params)
        n = gram.n
        lam2, tau2 = params.lam ** 2, params.tau ** 2
        init = params.base_value if gram.boundary is None else float(gram.boundary[0])
        # work[i, j]: truncation i (0 = zero input) against extension j (0 = full training series)
        work = np.empty((n + 1, h + 1))
        work[0, :] = init
        work[1:, 0] = gram.values[:, n - 1] if n else []
        dots = train @ new.T if n else np.zeros((0, h))
        for j in range(1, h + 1):
            work[1:, j] = 1.0 + lam2 * work[:-1, j - 1] / (1.0 - tau2 * dots[:, j - 1])
        return gram.with_extension(work[1:, 1:])
    windows = sample.windows if isinstance(sample, SampleSet) else [as_window(w) for w in sample]
    new_windows = [as_window(w) for w in new_inputs]
    if not new_windows:
        return gram.with_extension(np.zeros((gram.n, 0)))
    return gram.with_extension(cross_gram(windows, new_windows, params))


def _channels(sample) -> int:
    return sample.d if isinstance(sample, SampleSet) else as_window(sample).d
