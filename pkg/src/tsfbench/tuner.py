"""Seeded random search over linear-forecaster hyperparameters, lookback included."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._parallel import parallel_map
from .data import (
    SplitSpec,
    TimeSeries,
    apply_normalizer,
    fit_normalizer,
    make_windows,
    split_series,
)
from .forecasters import (
    CHANNEL_MODES,
    FAMILIES,
    FittedForecaster,
    ForecasterSpec,
    evaluate_mse,
    fit_linear_forecaster,
)

logger = logging.getLogger(__name__)

REPORT_FORMAT = "tsfbench-tune-report"
MAX_ATTEMPTS = 1000


class SearchError(ValueError):
    """Raised when no candidate configuration fits the data."""


@dataclass(frozen=True)
class SearchSpace:
    lookbacks: tuple[int, ...] = (96, 192, 336, 512, 720)
    lambda_range: tuple[float, float] = (1e-6, 1e2)
    kernels: tuple[int, ...] = (1, 13, 25, 49)
    families: tuple[str, ...] = FAMILIES
    modes: tuple[str, ...] = CHANNEL_MODES
    revin: tuple[bool, ...] = (False, True)
    individual: tuple[bool, ...] = (False,)

    def __post_init__(self):
        for name in ("lookbacks", "kernels", "families", "modes", "revin", "individual"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"search space field {name!r} is empty")
            object.__setattr__(self, name, values)
        lo, hi = self.lambda_range
        if not 0 < lo <= hi or not math.isfinite(hi):
            raise ValueError(f"lambda range must satisfy 0 < lo <= hi, got {self.lambda_range}")
        if any(L < 1 for L in self.lookbacks):
            raise ValueError("lookbacks must be positive")
        if any(k < 1 or k % 2 == 0 for k in self.kernels):
            raise ValueError("kernels must be odd and positive")
        if set(self.families) - set(FAMILIES) or set(self.modes) - set(CHANNEL_MODES):
            raise ValueError("unknown family or channel mode in search space")

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


_BOOL = {"1": True, "true": True, "on": True, "yes": True,
         "0": False, "false": False, "off": False, "no": False}


def load_search_space(path: str | Path) -> SearchSpace:
    """Read a flat ``key = value`` file; list values are comma separated.

    Keys: ``lookbacks``, ``lambda_min``, ``lambda_max``, ``kernels``,
    ``families``, ``modes``, ``revin``, ``individual``. Blank lines and
    ``#`` comments are ignored; absent keys keep their defaults.
    """
    kwargs: dict = {}
    lam = list(SearchSpace().lambda_range)
    with Path(path).open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            items = [v.strip() for v in value.split(",") if v.strip()]
            try:
                if key in ("lookbacks", "kernels"):
                    kwargs[key] = tuple(int(v) for v in items)
                elif key in ("families", "modes"):
                    kwargs[key] = tuple(items)
                elif key in ("revin", "individual"):
                    kwargs[key] = tuple(_BOOL[v.lower()] for v in items)
                elif key == "lambda_min":
                    lam[0] = float(value)
                elif key == "lambda_max":
                    lam[1] = float(value)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return SearchSpace(lambda_range=(lam[0], lam[1]), **kwargs)


def sample_trial_config(space: SearchSpace, seed: int, trial_index: int, horizon: int = 96,
                        attempt: int = 0) -> ForecasterSpec:
    """Deterministic draw for ``(seed, trial_index, attempt)``.

    Lookback, family, mode, kernel and flags are uniform over their sets; the
    ridge penalty is log-uniform over the lambda range.
    """
    rng = np.random.default_rng([seed, trial_index, attempt])
    family = space.families[rng.integers(len(space.families))]
    mode = space.modes[rng.integers(len(space.modes))]
    lookback = int(space.lookbacks[rng.integers(len(space.lookbacks))])
    lo, hi = space.lambda_range
    lam = float(math.exp(rng.uniform(math.log(lo), math.log(hi)))) if hi > lo else float(lo)
    kernel = int(space.kernels[rng.integers(len(space.kernels))])
    revin = bool(space.revin[rng.integers(len(space.revin))])
    individual = bool(space.individual[rng.integers(len(space.individual))]) and mode == "CI"
    return ForecasterSpec(
        family=family, channel_mode=mode, lookback=lookback, horizon=horizon,
        ridge_lambda=lam, ma_kernel=kernel, revin=revin, individual=individual,
    )


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    spec: ForecasterSpec
    val_mse: float
    test_mse: float | None = None
    fit_seconds: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "trial_index": self.trial_index,
            "spec": asdict(self.spec),
            "val_mse": self.val_mse,
            "test_mse": self.test_mse,
        }
        if include_timing:
            d["fit_seconds"] = self.fit_seconds
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        return cls(int(d["trial_index"]), ForecasterSpec(**d["spec"]), float(d["val_mse"]),
                   None if d.get("test_mse") is None else float(d["test_mse"]),
                   float(d.get("fit_seconds", 0.0)))


@dataclass(frozen=True)
class TuneReport:
    dataset: str
    horizon: int
    budget: int
    seed: int
    trials: list[TrialResult]
    best: int
    best_lookback: int
    redraws: int = 0
    space: dict = field(default_factory=dict)

    @property
    def best_trial(self) -> TrialResult:
        return self.trials[self.best]

    @property
    def model(self) -> str:
        """Family and channel mode of the selected trial, e.g. ``PlainLinear-CD``."""
        return self.best_trial.spec.model_id

    @property
    def test_mse(self) -> float:
        return self.best_trial.test_mse

    def to_dict(self, include_timing: bool = False) -> dict:
        return {
            "format": REPORT_FORMAT,
            "dataset": self.dataset,
            "horizon": self.horizon,
            "budget": self.budget,
            "seed": self.seed,
            "best": self.best,
            "best_lookback": self.best_lookback,
            "model": self.model,
            "test_mse": self.test_mse,
            "redraws": self.redraws,
            "space": self.space,
            "trials": [t.to_dict(include_timing) for t in self.trials],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TuneReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a tune report")
        return cls(d["dataset"], int(d["horizon"]), int(d["budget"]), int(d["seed"]),
                   [TrialResult.from_dict(t) for t in d["trials"]], int(d["best"]),
                   int(d["best_lookback"]), int(d.get("redraws", 0)), dict(d.get("space", {})))


def export_tune_report(report: TuneReport, path: str | Path, include_timing: bool = False) -> None:
    """JSON export; wall-clock timings are opt-in so reruns stay byte-identical."""
    with Path(path).open("w") as fh:
        json.dump(report.to_dict(include_timing), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_tune_report(path: str | Path) -> TuneReport:
    with Path(path).open() as fh:
        return TuneReport.from_dict(json.load(fh))


def prepare_splits(series: TimeSeries, spec: SplitSpec | None = None):
    """Chronological split, z-scored with statistics of the training part."""
    train, val, test = split_series(series, spec)
    norm = fit_normalizer(train)
    return tuple(apply_normalizer(s, norm) for s in (train, val, test)), norm


def _fits(spec: ForecasterSpec, lengths: Sequence[int]) -> bool:
    if spec.lookback + spec.horizon > min(lengths):
        return False
    return spec.family != "DLinear" or spec.ma_kernel <= spec.lookback


def run_search(
    splits: tuple[TimeSeries, TimeSeries, TimeSeries],
    horizon: int,
    space: SearchSpace | None = None,
    budget: int = 20,
    seed: int = 3001,
    dataset: str | None = None,
    return_model: bool = False,
):
    """Random search selecting on validation MSE; only the winner sees test data.

    Draws whose window ``L + H`` exceeds a segment are redrawn with the next
    attempt index; the number of redraws is reported. With ``return_model``
    the selected fitted model is returned alongside the report.
    """
    space = space or SearchSpace()
    train, val, test = splits
    if budget < 1:
        raise ValueError("budget must be at least 1")
    lengths = (train.n_steps, val.n_steps, test.n_steps)
    if all(L + horizon > min(lengths) for L in space.lookbacks):
        raise SearchError(
            f"segments of length {lengths} are shorter than every lookback + H={horizon}"
        )

    specs, redraws = [], 0
    for i in range(budget):
        for attempt in range(MAX_ATTEMPTS):
            spec = sample_trial_config(space, seed, i, horizon, attempt)
            if _fits(spec, lengths):
                break
            redraws += 1
        else:
            raise SearchError(f"trial {i}: no feasible configuration in {MAX_ATTEMPTS} draws")
        specs.append(spec)

    def run_trial(item):
        i, spec = item
        start = time.perf_counter()
        model = fit_linear_forecaster(spec, make_windows(train, spec.lookback, horizon))
        val_mse = evaluate_mse(model, make_windows(val, spec.lookback, horizon))
        elapsed = time.perf_counter() - start
        logger.debug("trial %d %s L=%d val=%.6g", i, spec.model_id, spec.lookback, val_mse)
        return TrialResult(i, spec, val_mse, None, elapsed), model

    outcomes = parallel_map(run_trial, list(enumerate(specs)))
    # strict < keeps the lowest index among ties
    best = 0
    for i, (trial, _) in enumerate(outcomes):
        if trial.val_mse < outcomes[best][0].val_mse:
            best = i
    best_trial, best_model = outcomes[best]
    test_mse = evaluate_mse(best_model, make_windows(test, best_trial.spec.lookback, horizon))
    trials = [t for t, _ in outcomes]
    trials[best] = replace(best_trial, test_mse=test_mse)
    report = TuneReport(
        dataset=dataset or train.name.split("/")[0],
        horizon=horizon,
        budget=budget,
        seed=seed,
        trials=trials,
        best=best,
        best_lookback=best_trial.spec.lookback,
        redraws=redraws,
        space=space.to_dict(),
    )
    if return_model:
        return report, best_model
    return report


__all__ = [
    "FittedForecaster", "SearchError", "SearchSpace", "TrialResult", "TuneReport",
    "export_tune_report", "load_search_space", "load_tune_report", "prepare_splits",
    "run_search", "sample_trial_config",
]
