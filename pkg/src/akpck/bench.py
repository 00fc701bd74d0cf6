"""Built-in reliability problems, ground-truth oracles and the study runner.

The analytic two-limit-state problem is evaluated in closed form; threshold
problems wrap an external simulator (or the bundled mock) behind the line
protocol adapter, with one simulator reading per distinct point shared by
every threshold margin.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .active import StrategySpec, load_checkpoint, run_active_learning
from .adapter import ExternalAdapter
from .config import StudyConfig, config_to_dict, parse_config
from .errors import UnsupportedOracleError
from .probspace import RandomInput, derive_seed, from_standard, stream_rng
from .reliability import LimitState, ReliabilityEstimate, combined_error, relative_beta_error

__all__ = [
    "g1", "g2", "analytic_problem", "build_problem", "external_limit_state",
    "threshold_limit_states", "ground_truth_beta", "compute_truth", "load_truth",
    "run_study", "StudyReport", "run_id_for", "MIN_TRUTH_N",
]

MIN_TRUTH_N = 10 ** 6
DEFAULT_TRUTH_N = 10 ** 7
DEFAULT_TRUTH_SEED = 424242
TRUTH_CHUNK = 10 ** 6


def g1(x1, x2):
    """First analytic limit state: sin(5 x1 / 2) + 2 - (x1^2 + 4)(x2 - 1) / 20."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.sin(2.5 * x1) + 2.0 - (x1 * x1 + 4.0) * (x2 - 1.0) / 20.0


def g2(x1, x2):
    """Second analytic limit state: sin(2 x1) - 1/2 + (x1^2 + 4)(x2 + 1) / 20."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.sin(2.0 * x1) - 0.5 + (x1 * x1 + 4.0) * (x2 + 1.0) / 20.0


@dataclass
class Problem:
    """A concrete, evaluatable reliability problem."""

    name: str
    input: RandomInput
    limit_states: list[LimitState]
    adapter: ExternalAdapter | None = None

    @property
    def m(self) -> int:
        return len(self.limit_states)

    def close(self) -> None:
        if self.adapter is not None:
            self.adapter.close()

    def __enter__(self) -> "Problem":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


ANALYTIC_INPUT = RandomInput(mu=(1.5, 2.5), sigma=(1.0, 1.0), names=("x1", "x2"))


def analytic_problem() -> Problem:
    """The built-in two-limit-state problem with its Gaussian marginals."""
    return Problem(
        name="two-lsf-analytic",
        input=ANALYTIC_INPUT,
        limit_states=[
            LimitState("g1", lambda pts: g1(pts[:, 0], pts[:, 1])),
            LimitState("g2", lambda pts: g2(pts[:, 0], pts[:, 1])),
        ],
    )


def external_limit_state(adapter: ExternalAdapter, threshold: float,
                         name: str = "g") -> LimitState:
    """Threshold margin over an adapter reading: g(x) = threshold - reading(x)."""
    def evaluator(points: np.ndarray) -> np.ndarray:
        return np.array([threshold - adapter.evaluate(row) for row in points])

    return LimitState(name=name, evaluator=evaluator, cost="expensive-external")


def threshold_limit_states(adapter: ExternalAdapter, names, thresholds) -> list[LimitState]:
    """One margin per threshold, all sharing the cached adapter reading.

    Thresholds are expected on the adapter's 2^-40 reading grid (config
    snapping guarantees this), which makes pairwise margin differences
    exactly equal to the threshold differences.
    """
    return [external_limit_state(adapter, float(t), str(n))
            for n, t in zip(names, thresholds)]


def _mock_command(spec) -> list[str]:
    cmd = [sys.executable, "-m", "akpck.mock_adapter"]
    for key, value in spec.mock_params:
        cmd += [f"--{key.replace('_', '-')}", repr(float(value))]
    return cmd


def build_problem(spec, for_truth: bool = False) -> Problem:
    """Instantiate a problem from its picklable spec.

    With ``for_truth`` the mock problem is built from the mock's closed
    form directly (no subprocess) so brute-force oracles stay cheap;
    genuinely external problems have no such oracle.
    """
    if spec.kind == "analytic":
        return Problem(name=spec.name, input=spec.input, limit_states=[
            LimitState("g1", lambda pts: g1(pts[:, 0], pts[:, 1])),
            LimitState("g2", lambda pts: g2(pts[:, 0], pts[:, 1])),
        ])
    if spec.kind == "mock" and for_truth:
        params = dict(spec.mock_params)
        scale = params.get("scale", 0.18)
        vp = params.get("velocity_power", 2.0)
        sp = params.get("stress_power", 1.0)
        ref = params.get("stress_ref", 317.0)

        def make(threshold):
            def evaluator(pts, _t=threshold):
                v = np.maximum(pts[:, 0], 0.0)
                rho = np.maximum(pts[:, 1], 1e-6)
                return _t - scale * v ** vp * (ref / rho) ** sp
            return evaluator

        return Problem(name=spec.name, input=spec.input, limit_states=[
            LimitState(n, make(t)) for n, t in zip(spec.lsf_names, spec.thresholds)
        ])
    if spec.kind == "external" and for_truth:
        raise UnsupportedOracleError(
            "no brute-force oracle for an external simulator; use the mock problem"
        )
    command = list(spec.command) if spec.kind == "external" else _mock_command(spec)
    adapter = ExternalAdapter(command, timeout=spec.timeout, name=spec.name)
    return Problem(
        name=spec.name, input=spec.input,
        limit_states=threshold_limit_states(adapter, spec.lsf_names, spec.thresholds),
        adapter=adapter,
    )


# -- ground truth -----------------------------------------------------------

def _truth_path(cache_dir, problem_name: str, n: int, seed: int) -> str:
    fname = f"{problem_name}__n{n}__seed{seed}.json"
    return os.path.join(cache_dir, fname)


def ground_truth_beta(problem: Problem, j: int, n: int, seed: int,
                      cache_dir=None) -> ReliabilityEstimate:
    """Brute-force Monte Carlo reference for limit state ``j`` (1-based).

    Counts failures over fixed 1e6-sample chunks drawn from per-chunk
    streams, so partial sums are reproducible and order-stable.  Results
    are cached on disk keyed by (problem, limit state, n, seed).
    """
    if n < MIN_TRUTH_N:
        raise ValueError(f"ground truth needs n >= {MIN_TRUTH_N}, got {n}")
    ls = problem.limit_states[j - 1]
    if ls.cost != "cheap-analytic":
        raise UnsupportedOracleError(
            f"limit state {ls.name!r} is not cheap to evaluate in bulk"
        )
    entry = None
    if cache_dir is not None:
        cached = load_truth(cache_dir, problem.name, n, seed)
        entry = (cached or {}).get(ls.name)
    if entry is None:
        n_fail = 0
        done = 0
        chunk_id = 0
        while done < n:
            size = min(TRUTH_CHUNK, n - done)
            rng = stream_rng(seed, f"truth-pool/chunk{chunk_id}")
            u = rng.standard_normal((size, problem.input.dims))
            g = ls(from_standard(problem.input, u))
            n_fail += int(np.count_nonzero(g <= 0.0))
            done += size
            chunk_id += 1
        from .reliability import beta_from_p

        p_hat = n_fail / n
        entry = {
            "p_hat": p_hat,
            "beta": beta_from_p(p_hat, n),
            "se": math.sqrt(p_hat * (1.0 - p_hat) / n),
            "n": n,
            "seed": seed,
            "n_fail": n_fail,
        }
        if cache_dir is not None:
            _store_truth(cache_dir, problem.name, n, seed, ls.name, entry)
    return ReliabilityEstimate(
        p_hat=entry["p_hat"], beta_hat=entry["beta"],
        n_samples=entry["n"], std_err=entry["se"],
    )


def _store_truth(cache_dir, problem_name, n, seed, lsf_name, entry) -> None:
    os.makedirs(cache_dir, exist_ok=True)
    path = _truth_path(cache_dir, problem_name, n, seed)
    data = {"problem": problem_name, "n": n, "seed": seed, "entries": {}}
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    data["entries"][lsf_name] = entry
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
    os.replace(tmp, path)


def load_truth(cache_dir, problem_name: str, n: int, seed: int) -> dict | None:
    path = _truth_path(cache_dir, problem_name, n, seed)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh).get("entries", {})


def find_truth(cache_dir, problem_name: str) -> dict | None:
    """Newest-largest cached truth entries for a problem, if any."""
    if not os.path.isdir(cache_dir):
        return None
    best = None
    for fname in sorted(os.listdir(cache_dir)):
        if not (fname.startswith(problem_name + "__") and fname.endswith(".json")):
            continue
        with open(os.path.join(cache_dir, fname), "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if best is None or data.get("n", 0) > best.get("n", 0):
            best = data
    return best


def compute_truth(problem: Problem, n: int, seed: int, cache_dir) -> dict:
    """Cache-and-return reference entries for every limit state."""
    for j in range(1, problem.m + 1):
        ground_truth_beta(problem, j, n, seed, cache_dir=cache_dir)
    return load_truth(cache_dir, problem.name, n, seed)


# -- study running ----------------------------------------------------------

def run_id_for(strategy_label: str, metric: str, rep: int) -> str:
    s = strategy_label.replace(":", "").replace("-guided", "")
    return f"{s}_{metric.replace('-', '')}_rep{rep:03d}"


def run_seed_for(base_seed: int, strategy_label: str, rep: int) -> int:
    # shared across metrics: U and U-LOO are compared on common random numbers
    return derive_seed(base_seed, f"run/{strategy_label}/rep{rep}")


@dataclass
class StudyReport:
    """Aggregated study outcome; recomputable from the raw records."""

    config: dict                    # config echo (config_to_dict form)
    lsf_names: tuple
    truth: dict | None              # per-lsf {beta, p_hat, se, n, seed}
    runs: list = field(default_factory=list)    # per-run summary dicts
    rows: list = field(default_factory=list)    # per (strategy, metric) stats
    bands: dict = field(default_factory=dict)   # (strategy, metric) -> per-lsf series


def _percentile(values, q: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=float), q))


def build_report(config: StudyConfig, run_summaries: list, truth: dict | None) -> StudyReport:
    """Assemble the study report from per-run summaries (disk or memory)."""
    lsf_names = config.problem.lsf_names
    report = StudyReport(config=config_to_dict(config), lsf_names=lsf_names,
                         truth=truth, runs=run_summaries)
    by_combo: dict[tuple, list] = {}
    for s in run_summaries:
        by_combo.setdefault((s["strategy"], s["metric"]), []).append(s)

    for strategy in config.strategies:
        for metric in config.metrics:
            combo = by_combo.get((strategy, metric), [])
            combo = sorted(combo, key=lambda s: s["rep"])
            row = {"strategy": strategy, "metric": metric, "n_runs": len(combo)}
            if truth is not None and combo:
                per_lsf_errors = []
                for name in lsf_names:
                    beta_ref = truth[name]["beta"]
                    errs = [relative_beta_error(s["final_beta"][name], beta_ref)
                            for s in combo]
                    per_lsf_errors.append(errs)
                    row[f"eps_{name}"] = _mean_std(errs)
                combined = [combined_error(e) for e in zip(*per_lsf_errors)]
                row["eps_beta"] = _mean_std(combined)
                row["box"] = {
                    "q25": _percentile(combined, 25.0),
                    "median": _percentile(combined, 50.0),
                    "q75": _percentile(combined, 75.0),
                    "w025": _percentile(combined, 2.5),
                    "w975": _percentile(combined, 97.5),
                    "mean": float(np.mean(combined)),
                }
            report.rows.append(row)

            series: dict[str, list] = {name: [] for name in lsf_names}
            if combo:
                n_steps = min(len(s["p_evolution"][lsf_names[0]]) for s in combo)
                for name in lsf_names:
                    for t in range(n_steps):
                        vals = [s["p_evolution"][name][t] for s in combo]
                        series[name].append({
                            "design_size": config.n_init + t,
                            "p30": _percentile(vals, 30.0),
                            "p60": _percentile(vals, 60.0),
                            "mean": float(np.mean(vals)),
                        })
            report.bands[(strategy, metric)] = series
    return report


def _mean_std(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else None,
    }


def _worker(payload: tuple) -> str:
    """Run one replication and persist its record files; returns the run id."""
    (config_dict, strategy_label, metric, rep, out_dir, resume) = payload
    config = parse_config(config_dict)
    spec = config.problem
    run_id = run_id_for(strategy_label, metric, rep)
    seed = run_seed_for(config.base_seed, strategy_label, rep)
    ckpt_path = os.path.join(out_dir, "checkpoints", f"{run_id}.json")
    resume_payload = None
    if resume and os.path.exists(ckpt_path):
        resume_payload = load_checkpoint(ckpt_path)
    strategy = StrategySpec.parse(strategy_label, metric=metric)
    with build_problem(spec) as problem:
        record = run_active_learning(
            problem.input, problem.limit_states, strategy,
            budget=config.budget, n_init=config.n_init,
            pool_size=config.pool_size, seed=seed,
            degrees=config.degrees, theta_domain=config.theta_domain,
            checkpoint_path=ckpt_path, resume_from=resume_payload,
        )
        stats = {"adapter_calls": 0, "adapter_cache_hits": 0}
        if problem.adapter is not None:
            stats = {"adapter_calls": problem.adapter.n_calls,
                     "adapter_cache_hits": problem.adapter.n_cache_hits}
    from .report import write_run_files

    write_run_files(out_dir, run_id, rep, record, stats)
    return run_id


def run_study(config: StudyConfig, out_dir, jobs: int = 1, resume: bool = False,
              truth_n: int = DEFAULT_TRUTH_N, truth_seed: int = DEFAULT_TRUTH_SEED,
              echo=None) -> StudyReport:
    """Run every (strategy, metric, replication) and aggregate the report.

    Completed runs (evolution file present) are skipped when resuming;
    interrupted runs continue from their checkpoints.  Worker processes
    each own their adapter session; ``jobs`` is capped by the problem's
    adapter concurrency limit when one is set.
    """
    from .report import load_run_summary, write_study_report

    out_dir = str(out_dir)
    for sub in ("records", "checkpoints", "truth"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    config_dict = config_to_dict(config)
    study_path = os.path.join(out_dir, "study.json")
    with open(study_path, "w", encoding="utf-8") as fh:
        json.dump(config_dict, fh, indent=1)

    tasks = []
    for strategy_label, metric, rep in config.runs():
        run_id = run_id_for(strategy_label, metric, rep)
        done = os.path.exists(os.path.join(out_dir, "records", f"{run_id}.csv"))
        if resume and done:
            continue
        tasks.append((config_dict, strategy_label, metric, rep, out_dir, resume))

    if config.problem.concurrency > 0:
        jobs = min(jobs, config.problem.concurrency)
    jobs = max(1, jobs)
    if echo:
        echo(f"running {len(tasks)} of {config.replications * len(config.strategies) * len(config.metrics)} "
             f"replications with {jobs} worker(s)")
    if tasks:
        if jobs == 1:
            for payload in tasks:
                _worker(payload)
                if echo:
                    echo(f"  done {run_id_for(payload[1], payload[2], payload[3])}")
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for run_id in pool.map(_worker, tasks, chunksize=1):
                    if echo:
                        echo(f"  done {run_id}")

    truth = None
    truth_dir = os.path.join(out_dir, "truth")
    try:
        with build_problem(config.problem, for_truth=True) as oracle_problem:
            truth = find_truth(truth_dir, config.problem.name)
            truth = truth["entries"] if truth else None
            if truth is None or set(truth) != set(config.problem.lsf_names):
                truth = compute_truth(oracle_problem, truth_n, truth_seed, truth_dir)
    except UnsupportedOracleError:
        truth = None

    summaries = [
        load_run_summary(out_dir, run_id_for(s, mtr, rep))
        for s, mtr, rep in config.runs()
    ]
    report = build_report(config, summaries, truth)
    write_study_report(out_dir, report)
    return report
