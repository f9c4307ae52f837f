"""Finite samples of semi-infinite input sequences.

A :class:`Sequence` holds ``n`` rows of ``d`` channels. Row ``i`` sits at
time ``-(n - 1) + i``, so the last row is time 0. Everything before the
first row is implicitly zero; the padding is never stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .errors import DataError


class SizingError(DataError):
    """Raised when a series is too short for the requested windowing."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Sequence:
    data: np.ndarray

    def __init__(self, data, channels: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            if channels is not None and channels > 1:
                if arr.size != 0:
                    raise DataError("1-d data can only describe a single channel")
                arr = arr.reshape(0, channels)
            else:
                arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise DataError(f"sequence data must be 1-d or 2-d, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise DataError("a sequence needs at least one channel")
        if not np.all(np.isfinite(arr)):
            raise DataError("sequence entries must be finite")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def empty(cls, channels: int = 1) -> "Sequence":
        return cls(np.zeros((0, channels)))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sequence):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.data.shape, self.data.tobytes()))

    def window(self, start: int, width: int) -> "Window":
        return Window(self, start, width)

    def as_window(self) -> "Window":
        """The whole sequence viewed as a single window (empty sequences allowed)."""
        return Window(self, 0, self.n, allow_empty=True)


@dataclass(frozen=True)
class Window:
    """Rows ``[start, start + width)`` of a sequence, zero before ``start``."""

    series: Sequence
    start: int
    width: int
    allow_empty: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        min_width = 0 if self.allow_empty else 1
        if self.start < 0 or self.width < min_width or self.start + self.width > self.series.n:
            raise SizingError(
                f"window [{self.start}, {self.start + self.width}) does not fit "
                f"in a series of length {self.series.n}"
            )

    @property
    def data(self) -> np.ndarray:
        return self.series.data[self.start:self.start + self.width]

    @property
    def d(self) -> int:
        return self.series.d

    @property
    def stop(self) -> int:
        return self.start + self.width

    def __len__(self) -> int:
        return self.width


def as_window(z) -> Window:
    """Coerce a Window, Sequence or array-like into a Window."""
    if isinstance(z, Window):
        return z
    if isinstance(z, Sequence):
        return z.as_window()
    return Sequence(z).as_window()


@dataclass(frozen=True)
class SampleSet:
    """Ordered windows with one target each.

    ``nested`` marks the sample as the growing truncations of one series,
    window ``i`` ending at row ``i`` and all starting at row 0.
    """

    windows: tuple
    targets: np.ndarray
    nested: bool = False

    def __init__(self, windows: Iterable[Window], targets=None, nested: bool = False):
        windows = tuple(as_window(w) for w in windows)
        if targets is None:
            targets = np.full(len(windows), np.nan)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if targets.shape[0] != len(windows):
            raise DataError(
                f"{len(windows)} windows but {targets.shape[0]} targets"
            )
        if len({w.d for w in windows}) > 1:
            raise DataError("all windows in a sample must have the same channel count")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "targets", _frozen(targets))
        object.__setattr__(self, "nested", bool(nested))

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def d(self) -> int:
        return self.windows[0].d if self.windows else 1

    def is_nested(self) -> bool:
        """True when the windows are the truncations ``[0, 1), [0, 2), ...`` of one series."""
        if not self.windows:
            return True
        series = self.windows[0].series
        return all(
            w.series is series and w.start == 0 and w.width == i + 1
            for i, w in enumerate(self.windows)
        )

    def subset(self, index) -> "SampleSet":
        index = np.arange(len(self))[index]
        return SampleSet([self.windows[i] for i in index], self.targets[index])


def nested_truncations(series: Sequence, targets=None) -> SampleSet:
    """Sample of the ``n`` growing truncations of ``series``.

    Entry ``i`` (0-based) holds rows ``0..i``, the truncation ending
    ``n - 1 - i`` steps before the last row.
    """
    windows = [Window(series, 0, i + 1) for i in range(series.n)]
    return SampleSet(windows, targets, nested=True)


def make_rolling_windows(
    series: Sequence,
    width: int,
    horizon: int,
    target_agg: Literal["mean", "last"] = "mean",
    channel: int = 0,
) -> SampleSet:
    """Sliding windows of ``width`` rows, each paired with a look-ahead target.

    Window ``k`` covers rows ``[k, k + width)``; its target aggregates
    ``channel`` over rows ``[k + width, k + width + horizon)``.
    """
    if width < 1 or horizon < 1:
        raise SizingError("width and horizon must both be at least 1")
    needed = width + horizon
    if series.n < needed:
        raise SizingError(
            f"series of length {series.n} is too short: width {width} and "
            f"horizon {horizon} need at least {needed} rows"
        )
    if target_agg not in ("mean", "last"):
        raise DataError(f"unknown target aggregation {target_agg!r}")
    count = series.n - width - horizon + 1
    values = series.data[:, channel]
    windows = []
    targets = np.empty(count)
    for k in range(count):
        windows.append(Window(series, k, width))
        ahead = values[k + width:k + width + horizon]
        targets[k] = ahead.mean() if target_agg == "mean" else ahead[-1]
    return SampleSet(windows, targets)


def delay(seq: Sequence, tau: int) -> Sequence:
    """Shift toward the past by ``tau`` steps: drop the last ``tau`` rows."""
    if tau < 0:
        raise DataError("delay must be non-negative")
    if tau == 0:
        return seq
    return Sequence(seq.data[: max(seq.n - tau, 0)].reshape(-1, seq.d))


def project_last(seq) -> np.ndarray:
    """Time-0 entry of the sequence, or the zero vector if it is empty."""
    data = seq.data
    if data.shape[0] == 0:
        return np.zeros(data.shape[1])
    return np.array(data[-1])


def sup_norm(seq) -> float:
    data = seq.data if hasattr(seq, "data") else np.asarray(seq, dtype=np.float64).reshape(len(seq), -1)
    if data.shape[0] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(data, axis=1)))
