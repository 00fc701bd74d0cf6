"""Command-line front end: run studies, compute ground truth, render reports.

Exit codes: 0 success, 1 configuration/validation failure, 2 runtime
failure, 3 external-adapter failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (
    MIN_TRUTH_N, build_problem, build_report, compute_truth, find_truth,
    run_id_for, run_study,
)
from .config import load_config, parse_config
from .errors import AkpckError, ConfigError, ExternalEvaluatorError
from .report import load_run_summary, render_table, write_study_report

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ADAPTER = 3


def _echo(msg: str) -> None:
    print(msg, flush=True)


def _resolve_out(args, config) -> str:
    out = getattr(args, "out", None) or config.output_dir
    if not out:
        raise ConfigError("output_dir: set it in the config or pass --out DIR")
    return out


def cmd_run(args) -> int:
    config = load_config(args.config)
    out_dir = _resolve_out(args, config)
    report = run_study(config, out_dir, jobs=args.jobs, resume=args.resume,
                       echo=_echo if not args.quiet else None)
    incomplete = [s for s in report.runs
                  if s["final_design_size"] < config.budget or s["flag"]]
    for row in report.rows:
        if "eps_beta" in row:
            _echo(f"{row['strategy']}/{row['metric']}: "
                  f"mean eps_beta = {row['eps_beta']['mean']:.3e} "
                  f"over {row['n_runs']} run(s)")
        else:
            _echo(f"{row['strategy']}/{row['metric']}: {row['n_runs']} run(s) "
                  f"complete (no ground truth for error metrics)")
    _echo(f"report written to {out_dir}")
    if incomplete:
        _echo(f"warning: {len(incomplete)} run(s) terminated early "
              f"({', '.join(s['run_id'] for s in incomplete)})")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_truth(args) -> int:
    config = load_config(args.config)
    if args.n < MIN_TRUTH_N:
        raise ConfigError(f"--n: ground truth needs at least {MIN_TRUTH_N} samples")
    out_dir = _resolve_out(args, config)
    truth_dir = os.path.join(out_dir, "truth")
    with build_problem(config.problem, for_truth=True) as problem:
        entries = compute_truth(problem, args.n, args.seed, truth_dir)
    for name, entry in entries.items():
        _echo(f"{name}: beta = {entry['beta']:.6f}, p = {entry['p_hat']:.6e} "
              f"(se {entry['se']:.2e}, n = {entry['n']}, seed = {entry['seed']})")
    _echo(f"cached under {truth_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    study_dir = args.study_dir
    study_path = os.path.join(study_dir, "study.json")
    if not os.path.exists(study_path):
        raise AkpckError(f"{study_dir} has no study.json; run `akpck run` first")
    import json

    with open(study_path, encoding="utf-8") as fh:
        config = parse_config(json.load(fh))

    summaries = []
    for strategy, metric, rep in config.runs():
        run_id = run_id_for(strategy, metric, rep)
        if not os.path.exists(os.path.join(study_dir, "records", f"{run_id}.csv")):
            raise AkpckError(
                f"missing record {run_id}; rerun `akpck run --resume` to complete"
            )
        summaries.append(load_run_summary(study_dir, run_id))

    truth = find_truth(os.path.join(study_dir, "truth"), config.problem.name)
    if truth is None:
        if config.problem.kind in ("analytic", "mock"):
            raise AkpckError(
                "no cached ground truth; compute it with "
                f"`akpck truth <config> --n {10**7} --seed <S>` into this study dir"
            )
        entries = None
    else:
        entries = truth["entries"]

    report = build_report(config, summaries, entries)
    write_study_report(study_dir, report)
    if args.format == "csv":
        with open(os.path.join(study_dir, "report.csv"), encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
    else:
        sys.stdout.write(render_table(report))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="akpck",
        description="Active PC-Kriging reliability studies over multiple limit states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured study")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="replication worker processes (default 1)")
    p_run.add_argument("--resume", action="store_true",
                       help="skip completed runs, continue from checkpoints")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_truth = sub.add_parser("truth", help="compute and cache ground-truth indices")
    p_truth.add_argument("config")
    p_truth.add_argument("--n", type=int, required=True)
    p_truth.add_argument("--seed", type=int, required=True)
    p_truth.add_argument("--out", help="study directory (overrides config)")
    p_truth.set_defaults(func=cmd_truth)

    p_report = sub.add_parser("report", help="rebuild report files for a study dir")
    p_report.add_argument("study_dir")
    p_report.add_argument("--format", choices=("table", "csv"), default="table")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExternalEvaluatorError as exc:
        print(f"external adapter failure: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except AkpckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
