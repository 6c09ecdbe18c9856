"""Pairwise Granger-causality F-tests with redundancy and stationarity preprocessing."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .._parallel import parallel_map
from ..data import TimeSeries
from .adf import SingularRegressionError, adf_test
from .fdist import f_upper_tail

logger = logging.getLogger(__name__)


class GrangerError(ValueError):
    """Raised when an analysis cannot produce any channel pair."""


class NonStationaryError(ValueError):
    """A channel stayed non-stationary (or degenerate) after ``max_diff`` differences."""


@dataclass(frozen=True)
class GrangerConfig:
    lag: int = 30
    alpha: float = 0.05
    pearson_threshold: float = 0.95
    sample_len: int = 1000
    max_diff: int = 2

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError("lag must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.pearson_threshold <= 1:
            raise ValueError("pearson_threshold must lie in (0, 1]")
        if self.sample_len <= 3 * self.lag:
            raise ValueError(f"sample_len {self.sample_len} must exceed 3 * lag = {3 * self.lag}")
        if self.max_diff < 0:
            raise ValueError("max_diff must be non-negative")


@dataclass(frozen=True)
class PairResult:
    effect: int
    cause: int
    ssr_u: float
    ssr_mv: float
    f_stat: float
    p_value: float
    df_num: int
    df_den: int
    rejected: bool


@dataclass(frozen=True)
class GrangerReport:
    lag: int
    alpha: float
    retained_channels: list[int]
    diff_orders: dict[int, int]
    pairs: list[PairResult]
    avg_f: float
    pct_rejected: float
    skipped_channels: list[int] = field(default_factory=list)
    skipped_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "lag": self.lag,
            "alpha": self.alpha,
            "retained_channels": list(self.retained_channels),
            "diff_orders": {str(k): v for k, v in sorted(self.diff_orders.items())},
            "pairs": [asdict(p) for p in self.pairs],
            "avg_f": self.avg_f,
            "pct_rejected": self.pct_rejected,
            "skipped_channels": list(self.skipped_channels),
            "skipped_pairs": self.skipped_pairs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GrangerReport":
        return cls(
            lag=int(d["lag"]),
            alpha=float(d["alpha"]),
            retained_channels=[int(c) for c in d["retained_channels"]],
            diff_orders={int(k): int(v) for k, v in d["diff_orders"].items()},
            pairs=[PairResult(**p) for p in d["pairs"]],
            avg_f=float(d["avg_f"]),
            pct_rejected=float(d["pct_rejected"]),
            skipped_channels=[int(c) for c in d.get("skipped_channels", [])],
            skipped_pairs=int(d.get("skipped_pairs", 0)),
        )


def pearson_filter(series: TimeSeries | np.ndarray, threshold: float = 0.95) -> list[int]:
    """Greedy redundancy filter on absolute Pearson correlation.

    Channel ``j`` is dropped when ``|corr(i, j)| > threshold`` for an
    already-retained ``i < j``.
    """
    values = series.values if isinstance(series, TimeSeries) else np.atleast_2d(series)
    names = series.channel_names if isinstance(series, TimeSeries) else None
    std = values.std(axis=1)
    for c in np.flatnonzero(std == 0):
        label = names[c] if names else c
        raise GrangerError(f"channel {label!r} is constant; correlation undefined")
    corr = np.corrcoef(values)
    kept: list[int] = []
    for j in range(values.shape[0]):
        if all(abs(corr[i, j]) <= threshold for i in kept):
            kept.append(j)
    return kept


def make_stationary(channel, cfg: GrangerConfig | None = None) -> tuple[np.ndarray, int]:
    """Difference until the ADF test calls the channel stationary."""
    cfg = cfg or GrangerConfig()
    x = np.asarray(channel, dtype=float).ravel()
    for order in range(cfg.max_diff + 1):
        try:
            _, stationary = adf_test(x)
        except (SingularRegressionError, ValueError) as exc:
            raise NonStationaryError(f"ADF test failed after {order} difference(s): {exc}") from exc
        if stationary:
            return x, order
        if order < cfg.max_diff:
            x = np.diff(x)
    raise NonStationaryError(f"still non-stationary after {cfg.max_diff} difference(s)")


def build_lag_design(y, regressors: Sequence, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Intercept plus ``lag`` lagged values of each regressor, newest lag first."""
    y = np.asarray(y, dtype=float).ravel()
    n_raw = y.size
    regs = [np.asarray(r, dtype=float).ravel() for r in regressors]
    if any(r.size != n_raw for r in regs):
        raise ValueError("all regressors must match the target length")
    if lag < 1 or lag >= n_raw:
        raise ValueError(f"lag {lag} needs a series longer than {lag} (got {n_raw})")
    n = n_raw - lag
    cols = [np.ones(n)]
    for r in regs:
        for i in range(1, lag + 1):
            cols.append(r[lag - i : lag - i + n])
    return np.column_stack(cols), y[lag:]


def ols_fit_ssr(design: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-norm least squares (SVD, relative cutoff 1e-10) and its residual SSR."""
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    if design.size == 0 or target.size == 0:
        raise ValueError("empty design")
    coef, *_ = np.linalg.lstsq(design, target, rcond=1e-10)
    resid = target - design @ coef
    return coef, float(resid @ resid)


def granger_pair(y_c1, x_c2, cfg: GrangerConfig | None = None, effect: int = 0,
                 cause: int = 1) -> PairResult:
    """F-test of whether lags of ``x_c2`` improve the autoregression of ``y_c1``."""
    cfg = cfg or GrangerConfig()
    y = np.asarray(y_c1, dtype=float).ravel()
    x = np.asarray(x_c2, dtype=float).ravel()
    if y.size != x.size:
        raise ValueError("both channels must have equal length")
    lag = cfg.lag
    n = y.size - lag
    k_u, k_mv = lag, 2 * lag + 1
    if n <= k_mv:
        raise ValueError(f"{n} observations cannot support {k_mv} parameters")
    design_u, target = build_lag_design(y, [y], lag)
    design_mv, _ = build_lag_design(y, [y, x], lag)
    _, ssr_u = ols_fit_ssr(design_u, target)
    _, ssr_mv = ols_fit_ssr(design_mv, target)
    df_den = n - k_mv
    gain = max(ssr_u - ssr_mv, 0.0)
    if ssr_mv > 0.0:
        f = (gain / k_u) / (ssr_mv / df_den)
        p = f_upper_tail(f, k_u, df_den)
    elif gain > 0.0:
        f, p = math.inf, 0.0
    else:
        # both fits exact: nothing left to explain
        f, p = 0.0, 1.0
    return PairResult(effect, cause, ssr_u, ssr_mv, f, p, k_u, df_den, p < cfg.alpha)


def granger_analyze(series: TimeSeries, cfg: GrangerConfig | None = None) -> GrangerReport:
    """Filter, stationarize and F-test every ordered channel pair of ``series``."""
    cfg = cfg or GrangerConfig()
    if series.n_steps < cfg.sample_len:
        raise GrangerError(f"series has {series.n_steps} steps, sample_len is {cfg.sample_len}")
    window = series.slice(0, cfg.sample_len)
    retained = pearson_filter(window, cfg.pearson_threshold)
    if len(retained) < 2:
        raise GrangerError(f"only {len(retained)} channel(s) survive the correlation filter")

    stationary: dict[int, np.ndarray] = {}
    diff_orders: dict[int, int] = {}
    skipped: list[int] = []
    for c in retained:
        try:
            stationary[c], diff_orders[c] = make_stationary(window.values[c], cfg)
        except NonStationaryError as exc:
            logger.info("skipping channel %s: %s", window.channel_names[c], exc)
            skipped.append(c)
    usable = [c for c in retained if c in stationary]
    all_pairs = [(a, b) for a in retained for b in retained if a != b]
    todo = [(a, b) for a, b in all_pairs if a in stationary and b in stationary]
    if not todo:
        raise GrangerError("no channel pair left after stationarity preprocessing")

    def run(pair):
        a, b = pair
        m = min(stationary[a].size, stationary[b].size)
        # keep the time-aligned tails
        return granger_pair(stationary[a][-m:], stationary[b][-m:], cfg, effect=a, cause=b)

    pairs = parallel_map(run, todo)
    fs = [p.f_stat for p in pairs]
    rejected = sum(p.rejected for p in pairs)
    logger.debug("analyzed %d pairs over channels %s", len(pairs), usable)
    return GrangerReport(
        lag=cfg.lag,
        alpha=cfg.alpha,
        retained_channels=retained,
        diff_orders=diff_orders,
        pairs=pairs,
        avg_f=float(np.mean(fs)),
        pct_rejected=100.0 * rejected / len(pairs),
        skipped_channels=skipped,
        skipped_pairs=len(all_pairs) - len(todo),
    )


PAIR_COLUMNS = [f.name for f in fields(PairResult)]


def export_granger_report(report: GrangerReport, path: str | Path, fmt: str = "json") -> None:
    path = Path(path)
    if fmt == "json":
        with path.open("w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PAIR_COLUMNS)
            for p in report.pairs:
                writer.writerow([repr(getattr(p, c)) if isinstance(getattr(p, c), float)
                                 else getattr(p, c) for c in PAIR_COLUMNS])
    else:
        raise ValueError(f"unsupported format {fmt!r}; use 'json' or 'csv'")


def load_granger_report(path: str | Path) -> GrangerReport:
    with Path(path).open() as fh:
        return GrangerReport.from_dict(json.load(fh))
