"""Command-line entry point: ``tsfbench <generate|granger|tune|evaluate|report> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
``TSF_THREADS`` caps worker threads (0 or unset: one per CPU).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .data import load_csv, make_windows
from .forecasters import evaluate_mse, load_model, save_model
from .granger import GrangerConfig, export_granger_report, granger_analyze
from .ode import SYSTEM_NAMES, IntegratorConfig, generate_benchmark, make_system
from .report import export_report, summarize
from .tuner import (
    REPORT_FORMAT,
    SearchSpace,
    export_tune_report,
    load_search_space,
    load_tune_report,
    prepare_splits,
    run_search,
)

DEFAULT_SEED = 3001


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _data_args(p):
    p.add_argument("--data", required=True, type=Path, help="CSV file with one header row")
    p.add_argument("--no-time-column", action="store_true",
                   help="treat the first column as data (default: guess from the header)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsfbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", help="integrate the chaotic ODE benchmark")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--steps", type=int, default=60000)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--transient", type=int, default=1000, help="discarded warm-up steps")
    p.add_argument("--systems", default=",".join(SYSTEM_NAMES),
                   help="comma-separated subset of " + ", ".join(SYSTEM_NAMES))

    p = sub.add_parser("granger", help="pairwise Granger-causality analysis of one CSV")
    _data_args(p)
    p.add_argument("--lag", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sample-len", type=int, default=1000)
    p.add_argument("--pearson-threshold", type=float, default=0.95)
    p.add_argument("--max-diff", type=int, default=2)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", type=Path, help="report file (default: JSON on stdout)")

    p = sub.add_parser("tune", help="seeded random search over linear forecasters")
    _data_args(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--space", type=Path, help="flat key = value search-space file")
    p.add_argument("--out", type=Path, help="tune report (default: stdout)")
    p.add_argument("--model-out", type=Path, help="save the selected fitted model here")
    p.add_argument("--timings", action="store_true",
                   help="include per-trial wall-clock seconds (output no longer reproducible)")

    p = sub.add_parser("evaluate", help="test MSE of a saved model")
    _data_args(p)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--horizon", type=int, required=True)

    p = sub.add_parser("report", help="aggregate tune reports into a summary")
    p.add_argument("--in", dest="in_dir", required=True, type=Path,
                   help="directory of tune report JSON files")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--group-by", choices=("model", "dataset"), default="model",
                   help="lookback histogram grouping")
    return parser


def _ensure_parent(*paths):
    for path in paths:
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)


def _load(args):
    return load_csv(args.data, has_time_column=False if args.no_time_column else None)


def _cmd_generate(args):
    names = [s.strip() for s in args.systems.split(",") if s.strip()]
    systems = [make_system(n) for n in names]
    cfg = IntegratorConfig(dt=args.dt, steps=args.steps, seed=args.seed,
                           transient_steps=args.transient)
    manifest = generate_benchmark(args.out, cfg, systems)
    print(f"wrote {len(manifest['datasets'])} series to {args.out}")


def _cmd_granger(args):
    cfg = GrangerConfig(lag=args.lag, alpha=args.alpha, pearson_threshold=args.pearson_threshold,
                        sample_len=args.sample_len, max_diff=args.max_diff)
    _ensure_parent(args.out)
    report = granger_analyze(_load(args), cfg)
    if args.out is None:
        json.dump(report.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        export_granger_report(report, args.out, args.format)
        print(f"avg F {report.avg_f:.6g}, {report.pct_rejected:.1f}% of pairs rejected")


def _cmd_tune(args):
    space = load_search_space(args.space) if args.space else SearchSpace()
    _ensure_parent(args.out, args.model_out)
    series = _load(args)
    splits, _ = prepare_splits(series)
    report, model = run_search(splits, args.horizon, space, args.budget, args.seed,
                               dataset=series.name, return_model=True)
    if args.model_out:
        save_model(model, args.model_out)
    if args.out is None:
        json.dump(report.to_dict(args.timings), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        export_tune_report(report, args.out, args.timings)
        print(f"best trial {report.best}: {report.model} L={report.best_lookback} "
              f"test MSE {report.test_mse:.6g}")


def _cmd_evaluate(args):
    model = load_model(args.model)
    if model.spec.horizon != args.horizon:
        raise ValueError(f"model forecasts H={model.spec.horizon}, --horizon is {args.horizon}")
    (_, _, test), _ = prepare_splits(_load(args))
    windows = make_windows(test, model.spec.lookback, args.horizon)
    if len(windows) == 0:
        raise ValueError("test segment too short for the model's lookback and horizon")
    print(repr(evaluate_mse(model, windows)))


def _cmd_report(args):
    if not args.in_dir.is_dir():
        raise FileNotFoundError(f"no such directory: {args.in_dir}")
    reports = []
    for path in sorted(args.in_dir.glob("*.json")):
        with path.open() as fh:
            doc = json.load(fh)
        if isinstance(doc, dict) and doc.get("format") == REPORT_FORMAT:
            reports.append(load_tune_report(path))
    if not reports:
        raise ValueError(f"no tune reports in {args.in_dir}")
    _ensure_parent(args.out)
    export_report(summarize(reports, grouping=args.group_by), args.out, args.format)
    print(f"summarized {len(reports)} tune reports into {args.out}")


_COMMANDS = {
    "generate": _cmd_generate,
    "granger": _cmd_granger,
    "tune": _cmd_tune,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"tsfbench {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
