"""Sequential training loop shared by all selection strategies.

Every accepted point is evaluated on all limit states, so the m surrogates
grow on one common experimental design; strategies differ only in which
limit state's score drives the next selection.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .correction import CorrectionField, build_correction, corrected_variance_batch
from .errors import DuplicatePointError, ExhaustedPoolError
from .pck import PckModel, Prediction, predict_batch, select_model
from .pcebasis import design_matrix
from .probspace import RandomInput, SamplePool, sample_lhs, sample_mc, to_standard
from .reliability import LimitState, delta_beta, estimate_probability

__all__ = [
    "DUPLICATE_TOL",
    "ExperimentalDesign",
    "StrategySpec",
    "StepRecord",
    "RunRecord",
    "u_score",
    "u_scores",
    "select_candidate",
    "choose_target",
    "run_active_learning",
]

DUPLICATE_TOL = 1e-10
DEFAULT_DEGREES = (0, 1, 2, 3, 4)


class ExperimentalDesign:
    """Input points with observed responses for every limit state."""

    def __init__(self, input: RandomInput, n_limit_states: int):
        self.input = input
        self.m = n_limit_states
        self.X = np.empty((0, input.dims))
        self.U = np.empty((0, input.dims))
        self.y = [np.empty(0) for _ in range(n_limit_states)]

    @property
    def size(self) -> int:
        return self.X.shape[0]

    def append(self, x_phys, responses) -> None:
        """Add one point with its m responses; rejects near-duplicates."""
        x = np.asarray(x_phys, dtype=float).reshape(1, -1)
        u = to_standard(self.input, x)
        if self.size and float(np.min(np.linalg.norm(self.U - u, axis=1))) <= DUPLICATE_TOL:
            raise DuplicatePointError("point duplicates an existing design point")
        if len(responses) != self.m:
            raise ValueError(f"expected {self.m} responses, got {len(responses)}")
        self.X = np.vstack([self.X, x])
        self.U = np.vstack([self.U, u])
        self.y = [np.append(self.y[j], float(responses[j])) for j in range(self.m)]


@dataclass(frozen=True)
class StrategySpec:
    """Which limit state drives each selection, and with which score."""

    kind: str                 # "single" | "alternate" | "convergence"
    metric: str = "U"         # "U" | "U-LOO"
    target: int | None = None  # 1-based, for kind == "single"

    _KINDS = ("single", "alternate", "convergence")
    _METRICS = ("U", "U-LOO")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.metric not in self._METRICS:
            raise ValueError(f"unknown learning metric {self.metric!r}")
        if self.kind == "single" and (self.target is None or self.target < 1):
            raise ValueError("single-target strategy needs a 1-based target index")

    @property
    def label(self) -> str:
        if self.kind == "single":
            return f"single:{self.target}"
        return "alternate" if self.kind == "alternate" else "convergence-guided"

    @classmethod
    def parse(cls, text: str, metric: str = "U") -> "StrategySpec":
        t = text.strip().lower()
        if t.startswith("single:"):
            return cls(kind="single", metric=metric, target=int(t.split(":", 1)[1]))
        if t == "alternate":
            return cls(kind="alternate", metric=metric)
        if t in ("convergence-guided", "convergence"):
            return cls(kind="convergence", metric=metric)
        raise ValueError(f"unknown strategy {text!r}")


@dataclass
class StepRecord:
    """One refit of all surrogates, plus the selection made afterwards."""

    step: int
    design_size: int
    p_hat: tuple
    beta_hat: tuple
    std_err: tuple
    target: int | None = None       # 1-based; None on the final record
    point: tuple | None = None      # physical coordinates of the selection
    u_value: float | None = None
    wall_time: float = 0.0


@dataclass
class RunRecord:
    """Full history of one active-learning replication."""

    strategy: str
    metric: str
    seed: int
    budget: int
    n_init: int
    pool_size: int
    lsf_names: tuple
    steps: list = field(default_factory=list)
    models: list = field(default_factory=list)   # final PckModel per limit state
    flag: str = ""

    @property
    def m(self) -> int:
        return len(self.lsf_names)

    def final_step(self) -> StepRecord:
        return self.steps[-1]


def u_score(prediction: Prediction) -> float:
    """Boundary-proximity score |mean| / sd; small is informative.

    Zero spread yields 0 on the predicted boundary and +inf elsewhere.
    """
    return _u(prediction.mean, prediction.sd)


def _u(mean: float, sd: float) -> float:
    if sd > 0.0:
        return abs(mean) / sd
    return 0.0 if mean == 0.0 else math.inf


def u_scores(means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    """Vectorized :func:`u_score` with the same zero-spread sentinels."""
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(means) / sds
    out[sds == 0.0] = np.where(means[sds == 0.0] == 0.0, 0.0, np.inf)
    return out


def _duplicate_mask(U_pool: np.ndarray, U_design: np.ndarray) -> np.ndarray:
    if U_design.shape[0] == 0:
        return np.zeros(U_pool.shape[0], dtype=bool)
    return cdist(U_pool, U_design).min(axis=1) <= DUPLICATE_TOL


def _argmin_unmasked(scores: np.ndarray, mask: np.ndarray) -> int:
    """Lowest-index argmin among non-duplicate candidates."""
    valid = np.flatnonzero(~mask)
    if valid.size == 0:
        raise ExhaustedPoolError("every pool candidate duplicates the design")
    return int(valid[np.argmin(scores[valid])])


def select_candidate(model: PckModel, correction: CorrectionField | None,
                     pool: SamplePool, design: ExperimentalDesign,
                     scores: np.ndarray | None = None):
    """Pick the pool point minimizing the U score for ``model``.

    Corrected variances are used when a correction field is supplied.
    Candidates duplicating a design point are skipped; exact ties resolve
    to the lowest pool index.  Precomputed ``scores`` (from the same model
    and correction) may be passed to avoid re-predicting.
    """
    U_pool = to_standard(design.input, pool.points)
    if scores is None:
        mean, sd = predict_batch(model, U_pool)
        if correction is not None:
            var = corrected_variance_batch(correction, U_pool, sd * sd)
            sd = np.sqrt(var)
        scores = u_scores(mean, sd)
    idx = _argmin_unmasked(scores, _duplicate_mask(U_pool, design.U))
    return pool.points[idx], float(scores[idx]), idx


def choose_target(strategy: StrategySpec, t: int, record: RunRecord) -> int:
    """Limit state (1-based) whose score drives the selection at step ``t``."""
    m = record.m
    if strategy.kind == "single":
        if strategy.target > m:
            raise ValueError(f"target {strategy.target} exceeds m = {m}")
        return strategy.target
    rr = (t % m) + 1
    if strategy.kind == "alternate":
        return rr
    # convergence-guided: round-robin until every limit state was targeted
    if t < m:
        return rr
    curr, prev = record.steps[t], record.steps[t - 1]
    deltas = []
    for j in range(m):
        # a clamped estimate (empty or saturated failure set) carries no
        # convergence information: treat as maximally unconverged
        degenerate = curr.p_hat[j] in (0.0, 1.0) or prev.p_hat[j] in (0.0, 1.0)
        deltas.append(math.inf if degenerate else
                      delta_beta(prev.beta_hat[j], curr.beta_hat[j]))
    best = max(deltas)
    # ties (including multiple sentinels) resolve in cyclic round-robin order
    for off in range(m):
        j = (rr - 1 + off) % m
        if deltas[j] == best:
            return j + 1
    raise AssertionError("unreachable")


def run_active_learning(input: RandomInput, limit_states, strategy: StrategySpec,
                        budget: int, n_init: int, pool_size: int, seed: int,
                        degrees=DEFAULT_DEGREES, theta_domain=(1e-2, 1e2),
                        checkpoint_path=None, resume_from=None) -> RunRecord:
    """Run one active-learning replication under a fixed evaluation budget.

    Starts from an LHS design of ``n_init`` points, then one point per step
    chosen by U-score argmin over a fixed Monte Carlo candidate pool; every
    accepted point is evaluated on all limit states.  Stops exactly when
    the design reaches ``budget`` points and returns the step history with
    the final models.
    """
    if n_init >= budget:
        raise ValueError("n_init must be smaller than the budget")
    limit_states = list(limit_states)
    m = len(limit_states)
    if m < 1:
        raise ValueError("need at least one limit state")

    # single-threaded BLAS keeps records bit-identical across worker layouts
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        return _run_loop(input, limit_states, strategy, budget, n_init, pool_size,
                         seed, degrees, theta_domain, checkpoint_path, resume_from)


def _run_loop(input, limit_states, strategy, budget, n_init, pool_size, seed,
              degrees, theta_domain, checkpoint_path, resume_from) -> RunRecord:
    m = len(limit_states)
    pool = sample_mc(input, pool_size, seed)
    U_pool = to_standard(input, pool.points)

    record = RunRecord(
        strategy=strategy.label, metric=strategy.metric, seed=seed, budget=budget,
        n_init=n_init, pool_size=pool_size,
        lsf_names=tuple(ls.name for ls in limit_states),
    )
    design = ExperimentalDesign(input, m)

    if resume_from is not None:
        _restore(resume_from, design, record)
    if design.size < n_init:
        init = sample_lhs(input, n_init, seed)
        for x in init.points[design.size:]:
            design.append(x, [ls(x) for ls in limit_states])
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, design, record)

    mask = _duplicate_mask(U_pool, design.U)
    F_pool_cache: dict[int, np.ndarray] = {}
    t = len(record.steps)

    while True:
        tic = time.perf_counter()
        models, means, sds = [], [], []
        for j in range(m):
            model = select_model(design.U, design.y[j], degrees, theta_domain)
            F_pool = F_pool_cache.get(model.basis.degree)
            if F_pool is None:
                F_pool = design_matrix(model.basis, U_pool)
                F_pool_cache[model.basis.degree] = F_pool
            mean, sd = predict_batch(model, U_pool, F_query=F_pool)
            models.append(model)
            means.append(mean)
            sds.append(sd)
        ests = [estimate_probability(mean) for mean in means]
        step = StepRecord(
            step=t, design_size=design.size,
            p_hat=tuple(e.p_hat for e in ests),
            beta_hat=tuple(e.beta_hat for e in ests),
            std_err=tuple(e.std_err for e in ests),
        )
        record.steps.append(step)

        if design.size >= budget:
            step.wall_time = time.perf_counter() - tic
            record.models = models
            break

        target = choose_target(strategy, t, record)
        model = models[target - 1]
        sd_sel = sds[target - 1]
        if strategy.metric == "U-LOO":
            fieldc = build_correction(model)
            sd_sel = np.sqrt(corrected_variance_batch(fieldc, U_pool, sd_sel * sd_sel))
        scores = u_scores(means[target - 1], sd_sel)
        try:
            idx = _argmin_unmasked(scores, mask)
        except ExhaustedPoolError:
            record.flag = "exhausted-pool"
            step.wall_time = time.perf_counter() - tic
            record.models = models
            break
        x_new = pool.points[idx]
        step.target = target
        step.point = tuple(float(v) for v in x_new)
        step.u_value = float(scores[idx])

        design.append(x_new, [ls(x_new) for ls in limit_states])
        mask |= np.linalg.norm(U_pool - design.U[-1], axis=1) <= DUPLICATE_TOL
        step.wall_time = time.perf_counter() - tic
        t += 1
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, design, record)

    return record


# -- checkpointing ----------------------------------------------------------

def _step_to_dict(s: StepRecord) -> dict:
    return {
        "step": s.step, "design_size": s.design_size,
        "p_hat": list(s.p_hat), "beta_hat": list(s.beta_hat),
        "std_err": list(s.std_err), "target": s.target,
        "point": list(s.point) if s.point is not None else None,
        "u_value": s.u_value, "wall_time": s.wall_time,
    }


def _step_from_dict(d: dict) -> StepRecord:
    return StepRecord(
        step=int(d["step"]), design_size=int(d["design_size"]),
        p_hat=tuple(d["p_hat"]), beta_hat=tuple(d["beta_hat"]),
        std_err=tuple(d["std_err"]),
        target=d["target"], u_value=d["u_value"],
        point=tuple(d["point"]) if d["point"] is not None else None,
        wall_time=float(d.get("wall_time", 0.0)),
    )


def save_checkpoint(path, design: ExperimentalDesign, record: RunRecord) -> None:
    """Persist the growing design and step history as JSON."""
    payload = {
        "strategy": record.strategy, "metric": record.metric, "seed": record.seed,
        "budget": record.budget, "n_init": record.n_init,
        "pool_size": record.pool_size, "lsf_names": list(record.lsf_names),
        "X": design.X.tolist(),
        "y": [col.tolist() for col in design.y],
        "steps": [_step_to_dict(s) for s in record.steps],
        "flag": record.flag,
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _restore(payload: dict, design: ExperimentalDesign, record: RunRecord) -> None:
    for key in ("strategy", "metric", "seed", "budget", "n_init", "pool_size"):
        if payload[key] != getattr(record, key):
            raise ValueError(f"checkpoint mismatch on {key!r}")
    X = np.asarray(payload["X"], dtype=float)
    ys = [np.asarray(col, dtype=float) for col in payload["y"]]
    for i in range(X.shape[0]):
        design.append(X[i], [col[i] for col in ys])
    record.steps = [_step_from_dict(d) for d in payload["steps"]]
    record.flag = payload.get("flag", "")
