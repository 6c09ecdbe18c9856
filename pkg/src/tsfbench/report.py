"""Summary tables over evaluation results: horizon averages, ranks, wins, matchups, histograms."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .tuner import TuneReport

MISSING = None  # explicit OOM / absent marker in a ResultsTable

POLICIES = {
    "ties": "equal averages share the mean of their rank positions; every minimal model gets a win",
    "missing": "missing entries are excluded from the dataset's ranking",
    "avg_rank": "mean over the datasets where the model is present",
    "avg_rank_missing_last": "alternative where missing models share the last rank positions",
    "matchup_ties": "equal CI and CD averages count for neither side",
}


class ReportError(ValueError):
    """Raised on inconsistent or incomplete result tables."""


@dataclass
class ResultsTable:
    """Test MSE per ``(model, dataset, horizon)``; ``None`` marks OOM or absent runs."""

    entries: dict[tuple[str, str, int], float | None] = field(default_factory=dict)

    def add(self, model: str, dataset: str, horizon: int, value: float | None) -> None:
        key = (model, dataset, int(horizon))
        if key in self.entries:
            raise ReportError(f"duplicate result for {key}")
        if value is not None and not (value >= 0 and math.isfinite(value)):
            raise ReportError(f"MSE for {key} must be finite and non-negative, got {value}")
        self.entries[key] = value

    @classmethod
    def from_tune_reports(cls, reports: Iterable[TuneReport]) -> "ResultsTable":
        table = cls()
        for r in reports:
            table.add(r.model, r.dataset, r.horizon, r.test_mse)
        return table

    @property
    def horizons(self) -> list[int]:
        return sorted({h for _, _, h in self.entries})


def average_over_horizons(table: ResultsTable, horizons: Sequence[int] | None = None
                          ) -> dict[tuple[str, str], float | None]:
    """Mean test MSE per ``(model, dataset)`` over ``horizons``.

    A cell with every horizon missing stays missing; a partially covered
    cell is an error.
    """
    horizons = list(horizons) if horizons is not None else table.horizons
    if not horizons:
        raise ReportError("no horizons to average over")
    cells = sorted({(m, d) for m, d, _ in table.entries})
    out: dict[tuple[str, str], float | None] = {}
    for m, d in cells:
        vals = [table.entries.get((m, d, h), "absent") for h in horizons]
        if all(v is None for v in vals):
            out[(m, d)] = MISSING
            continue
        gaps = [h for h, v in zip(horizons, vals) if v is None or v == "absent"]
        if gaps:
            raise ReportError(f"cell ({m}, {d}) lacks horizon(s) {gaps}")
        out[(m, d)] = math.fsum(vals) / len(vals)
    return out


def _mean_ranks(values: Mapping[str, float]) -> dict[str, float]:
    ordered = sorted(values.items(), key=lambda kv: kv[1])
    ranks, i = {}, 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1][1] == ordered[i][1]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[ordered[k][0]] = shared
        i = j + 1
    return ranks


def _by_dataset(avg: Mapping[tuple[str, str], float | None]):
    models = sorted({m for m, _ in avg})
    datasets = sorted({d for _, d in avg})
    present = {d: {m: avg[(m, d)] for m in models if avg.get((m, d)) is not None} for d in datasets}
    return models, datasets, present


def rank_and_wins(avg: Mapping[tuple[str, str], float | None]):
    """Per-dataset ascending ranks, mean rank per model and win counts.

    Returns ``(ranks, avg_rank, wins)`` with ``ranks`` keyed by
    ``(model, dataset)`` over present entries only.
    """
    if not avg:
        raise ReportError("empty results")
    models, datasets, present = _by_dataset(avg)
    ranks: dict[tuple[str, str], float] = {}
    wins = {m: 0 for m in models}
    for d in datasets:
        vals = present[d]
        if not vals:
            continue
        for m, r in _mean_ranks(vals).items():
            ranks[(m, d)] = r
        best = min(vals.values())
        for m, v in vals.items():
            if v == best:
                wins[m] += 1
    avg_rank = {}
    for m in models:
        mine = [r for (mm, _), r in ranks.items() if mm == m]
        avg_rank[m] = sum(mine) / len(mine) if mine else MISSING
    return ranks, avg_rank, wins


def avg_rank_missing_last(avg: Mapping[tuple[str, str], float | None]) -> dict[str, float]:
    """Mean rank when missing models take the last positions of a dataset's ranking."""
    models, datasets, present = _by_dataset(avg)
    totals = defaultdict(float)
    for d in datasets:
        vals = present[d]
        ranks = _mean_ranks(vals)
        last = (len(vals) + 1 + len(models)) / 2
        for m in models:
            totals[m] += ranks[m] if m in ranks else last
    return {m: totals[m] / len(datasets) for m in models}


def lookback_histogram(reports: Sequence[TuneReport], grouping: str = "model"
                       ) -> dict[str, dict[int, int]]:
    """Counts of selected lookbacks per model or per dataset, pooled over horizons."""
    if grouping not in ("model", "dataset"):
        raise ValueError(f"grouping must be 'model' or 'dataset', got {grouping!r}")
    if not reports:
        raise ReportError("no tune reports")
    hist: dict[str, Counter] = defaultdict(Counter)
    for r in reports:
        hist[r.model if grouping == "model" else r.dataset][r.best_lookback] += 1
    return {g: dict(sorted(c.items())) for g, c in sorted(hist.items())}


def ci_cd_matchup(
    avg: Mapping[tuple[str, str], float | None],
    pairing: Mapping[str, tuple[str, str]],
    dataset_families: Mapping[str, str],
):
    """Count datasets where the CI variant beats the CD variant and vice versa.

    Returns ``(counts, skipped)``: ``counts[(family, dataset_family)] =
    (ci_wins, cd_wins)`` and the ``(family, dataset)`` pairs skipped because
    a variant is missing.
    """
    counts: dict[tuple[str, str], tuple[int, int]] = {}
    skipped: list[tuple[str, str]] = []
    for fam, (ci_id, cd_id) in pairing.items():
        for d, dfam in dataset_families.items():
            ci, cd = avg.get((ci_id, d)), avg.get((cd_id, d))
            key = (fam, dfam)
            a, b = counts.get(key, (0, 0))
            if ci is None or cd is None:
                skipped.append((fam, d))
                counts[key] = (a, b)
                continue
            counts[key] = (a + (ci < cd), b + (cd < ci))
    return counts, skipped


def infer_pairing(models: Iterable[str]) -> dict[str, tuple[str, str]]:
    """Pair ``<family>-CI`` with ``<family>-CD`` model ids."""
    models = set(models)
    out = {}
    for m in sorted(models):
        if m.endswith("-CI") and m[:-3] + "-CD" in models:
            out[m[:-3]] = (m, m[:-3] + "-CD")
    return out


@dataclass
class SummaryReport:
    avg_mse: dict[tuple[str, str], float | None]
    ranks: dict[tuple[str, str], float]
    avg_rank: dict[str, float | None]
    wins: dict[str, int]
    lookback_hist: dict[str, dict[int, int]] = field(default_factory=dict)
    matchup: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    policies: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def nest(d):
            out: dict = {}
            for (a, b), v in sorted(d.items()):
                out.setdefault(a, {})[b] = v
            return out

        return {
            "avg_mse": nest(self.avg_mse),
            "ranks": nest(self.ranks),
            "avg_rank": dict(sorted(self.avg_rank.items())),
            "wins": dict(sorted(self.wins.items())),
            "lookback_hist": {g: {str(k): v for k, v in sorted(h.items())}
                              for g, h in sorted(self.lookback_hist.items())},
            "matchup": nest({k: list(v) for k, v in self.matchup.items()}),
            "policies": self.policies,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SummaryReport":
        def flat(d, conv=lambda v: v):
            return {(a, b): conv(v) for a, inner in d.items() for b, v in inner.items()}

        return cls(
            avg_mse=flat(doc["avg_mse"]),
            ranks=flat(doc["ranks"]),
            avg_rank=dict(doc["avg_rank"]),
            wins={k: int(v) for k, v in doc["wins"].items()},
            lookback_hist={g: {int(k): int(v) for k, v in h.items()}
                           for g, h in doc["lookback_hist"].items()},
            matchup=flat(doc["matchup"], lambda v: (int(v[0]), int(v[1]))),
            policies=dict(doc.get("policies", {})),
        )


def summarize(
    reports: Sequence[TuneReport],
    horizons: Sequence[int] | None = None,
    grouping: str = "model",
    dataset_families: Mapping[str, str] | None = None,
) -> SummaryReport:
    """Build a summary from tune reports (one per model, dataset and horizon)."""
    table = ResultsTable.from_tune_reports(reports)
    avg = average_over_horizons(table, horizons)
    ranks, avg_rank, wins = rank_and_wins(avg)
    datasets = sorted({d for _, d in avg})
    families = dict(dataset_families or {d: "all" for d in datasets})
    matchup, skipped = ci_cd_matchup(avg, infer_pairing(m for m, _ in avg), families)
    policies = dict(POLICIES)
    policies["avg_rank_missing_last_values"] = avg_rank_missing_last(avg)
    policies["matchup_skipped"] = [list(s) for s in skipped]
    return SummaryReport(avg, ranks, avg_rank, wins, lookback_histogram(reports, grouping),
                         matchup, policies)


def export_report(report: SummaryReport, path: str | Path, fmt: str = "json") -> None:
    """JSON (full report) or CSV (one row per model and dataset)."""
    if fmt == "json":
        with Path(path).open("w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "dataset", "avg_mse", "rank"])
            for (m, d), v in sorted(report.avg_mse.items()):
                rank = report.ranks.get((m, d))
                writer.writerow([m, d, "" if v is None else repr(v), "" if rank is None else rank])
    else:
        raise ValueError(f"unsupported format {fmt!r}; use 'json' or 'csv'")


def load_report(path: str | Path) -> SummaryReport:
    with Path(path).open() as fh:
        return SummaryReport.from_dict(json.load(fh))
