"""Series containers, CSV ingestion, chronological splits and sliding windows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DataError(ValueError):
    """Raised when input data violates a container invariant."""


@dataclass(frozen=True)
class TimeSeries:
    """A ``C x T`` matrix of real samples with channel names.

    ``dt`` is the model-time spacing between columns; 0 when unknown
    (ingested real-world data).
    """

    name: str
    channel_names: tuple[str, ...]
    values: np.ndarray
    dt: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise DataError(f"values must be 2-D (C x T), got shape {values.shape}")
        C, T = values.shape
        if C < 1 or T < 1:
            raise DataError(f"series needs C >= 1 and T >= 1, got {values.shape}")
        names = tuple(str(n) for n in self.channel_names)
        if len(names) != C:
            raise DataError(f"{len(names)} channel names for {C} channels")
        if not np.all(np.isfinite(values)):
            c, t = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at channel {names[c]!r}, step {t}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int, name: str | None = None) -> "TimeSeries":
        return TimeSeries(name or self.name, self.channel_names, self.values[:, start:stop], self.dt)

    def select(self, channels: Sequence[int]) -> "TimeSeries":
        idx = list(channels)
        return TimeSeries(
            self.name, tuple(self.channel_names[i] for i in idx), self.values[idx], self.dt
        )


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test ratios (default 7:1:2)."""

    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        r = tuple(float(x) for x in self.ratios)
        if len(r) != 3:
            raise DataError("split needs exactly three ratios")
        if any(x < 0 or x > 1 for x in r):
            raise DataError(f"split ratios must lie in [0, 1], got {r}")
        if abs(sum(r) - 1.0) > 1e-9:
            raise DataError(f"split ratios must sum to 1, got {sum(r)!r}")
        object.__setattr__(self, "ratios", r)


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding-window (query, answer) pairs cut from one series segment.

    ``X`` has shape ``(n, C, L)`` and ``Y`` shape ``(n, C, H)``. Datasets built
    by :func:`make_windows` keep the contiguous ``source`` segment, which lets
    fitting code accumulate normal equations without materialising windows.
    """

    lookback: int
    horizon: int
    X: np.ndarray
    Y: np.ndarray
    stride: int = 1
    source: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1 or self.stride < 1:
            raise DataError("lookback, horizon and stride must be positive")
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 3 or Y.ndim != 3 or X.shape[0] != Y.shape[0] or X.shape[1] != Y.shape[1]:
            raise DataError(f"inconsistent window arrays {X.shape} / {Y.shape}")
        if X.shape[2] != self.lookback or Y.shape[2] != self.horizon:
            raise DataError(
                f"window widths {X.shape[2]}/{Y.shape[2]} do not match "
                f"L={self.lookback}, H={self.horizon}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[np.ndarray, np.ndarray]]) -> "WindowedDataset":
        if not samples:
            raise DataError("cannot infer window sizes from an empty sample list")
        X = np.stack([np.asarray(x, dtype=float) for x, _ in samples])
        Y = np.stack([np.asarray(y, dtype=float) for _, y in samples])
        return cls(X.shape[2], Y.shape[2], X, Y)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.X[i], self.Y[i]

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(self)

    @property
    def n_channels(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Normalizer:
    """Per-channel z-score statistics fitted on a training segment."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        std = np.asarray(self.std, dtype=float).ravel()
        if mean.shape != std.shape:
            raise DataError("mean and std must have the same length")
        if np.any(std <= 0):
            raise DataError("normalizer std entries must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


_TIME_HEADERS = {"t", "time", "date", "datetime", "timestamp"}


def load_csv(path: str | Path, has_time_column: bool | None = True) -> TimeSeries:
    """Read a comma-separated file with one header row into a series.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV file.
    has_time_column : bool or None
        Whether the first column is an opaque timestamp to drop. ``None``
        guesses from the header name (``t``, ``date``, ``time`` ...).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (header row required)") from None
        if has_time_column is None:
            has_time_column = header[0].strip().lower() in _TIME_HEADERS
        skip = 1 if has_time_column else 0
        names = [h.strip() for h in header[skip:]]
        if not names:
            raise DataError(f"{path}: no data columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}"
                )
            parsed = []
            for col, cell in zip(names, row[skip:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col!r}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col!r}: non-finite cell {cell!r}")
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.array(rows, dtype=float).T
    return TimeSeries(path.stem, tuple(names), values)


def split_series(
    series: TimeSeries, spec: SplitSpec | None = None, boundaries: tuple[int, int] | None = None
) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Cut a series into contiguous train/val/test segments.

    Boundaries are ``floor(T * r_train)`` and ``floor(T * (r_train + r_val))``
    unless explicit ``boundaries`` (e.g. month-based ETT splits) are given.
    """
    T = series.n_steps
    if boundaries is None:
        r = (spec or SplitSpec()).ratios
        # slack absorbs ratio sums like 0.7 + 0.1 = 0.7999999999999999
        b1 = math.floor(T * r[0] + 1e-9)
        b2 = math.floor(T * (r[0] + r[1]) + 1e-9)
    else:
        b1, b2 = boundaries
    if not 0 < b1 < b2 < T:
        raise DataError(
            f"split of T={T} at ({b1}, {b2}) leaves an empty segment"
        )
    return (
        series.slice(0, b1, f"{series.name}/train"),
        series.slice(b1, b2, f"{series.name}/val"),
        series.slice(b2, T, f"{series.name}/test"),
    )


def window_count(n_steps: int, lookback: int, horizon: int, stride: int = 1) -> int:
    if n_steps < lookback + horizon:
        return 0
    return (n_steps - lookback - horizon) // stride + 1


def make_windows(
    segment: TimeSeries | np.ndarray, lookback: int, horizon: int, stride: int = 1
) -> WindowedDataset:
    """Sliding windows strictly inside ``segment``; empty when it is too short."""
    values = segment.values if isinstance(segment, TimeSeries) else np.asarray(segment, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    if lookback < 1 or horizon < 1 or stride < 1:
        raise DataError("lookback, horizon and stride must be positive")
    C, T = values.shape
    n = window_count(T, lookback, horizon, stride)
    if n == 0:
        return WindowedDataset(
            lookback, horizon, np.empty((0, C, lookback)), np.empty((0, C, horizon)), stride
        )
    W = lookback + horizon
    full = sliding_window_view(values, W, axis=1)[:, : (n - 1) * stride + 1 : stride]
    full = full.transpose(1, 0, 2)  # (n, C, W)
    return WindowedDataset(
        lookback, horizon, full[:, :, :lookback], full[:, :, lookback:], stride, source=values
    )


def fit_normalizer(train: TimeSeries) -> Normalizer:
    """Per-channel mean and population standard deviation of ``train``."""
    mean = train.values.mean(axis=1)
    std = train.values.std(axis=1)
    zero = np.flatnonzero(std == 0)
    if zero.size:
        names = ", ".join(train.channel_names[i] for i in zero)
        raise DataError(f"zero-variance channel(s) in training segment: {names}")
    return Normalizer(mean, std)


def apply_normalizer(series: TimeSeries, norm: Normalizer, direction: str = "forward") -> TimeSeries:
    if series.n_channels != norm.mean.size:
        raise DataError(
            f"normalizer fitted on {norm.mean.size} channels, series has {series.n_channels}"
        )
    mu, sd = norm.mean[:, None], norm.std[:, None]
    if direction == "forward":
        values = (series.values - mu) / sd
    elif direction == "inverse":
        values = series.values * sd + mu
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return TimeSeries(series.name, series.channel_names, values, series.dt)


def mse(Y: np.ndarray, Yhat: np.ndarray) -> float:
    """Mean of squared differences over every entry."""
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape:
        raise DataError(f"shape mismatch {Y.shape} vs {Yhat.shape}")
    return float(np.mean((Y - Yhat) ** 2))
