"""Event probabilities, reliability indices and error metrics.

The event of interest is {g <= 0}; its probability over a Monte Carlo pool
maps to a reliability index through the inverse standard-normal CDF,
beta = -ppf(p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UndefinedReferenceError
from .pck import PckModel, predict_batch
from .probspace import RandomInput, SamplePool, norm_ppf, to_standard

__all__ = [
    "LimitState",
    "ReliabilityEstimate",
    "estimate_probability",
    "surrogate_probability",
    "relative_beta_error",
    "combined_error",
    "delta_beta",
]


@dataclass(frozen=True)
class LimitState:
    """A deterministic scalar performance function over physical space.

    ``evaluator`` maps an (n, M) block of physical points to n g-values.
    ``cost`` distinguishes cheap closed forms from external simulators.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    cost: str = "cheap-analytic"   # or "expensive-external"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        values = np.asarray(self.evaluator(np.atleast_2d(pts)), dtype=float).reshape(-1)
        return float(values[0]) if single else values


@dataclass(frozen=True)
class ReliabilityEstimate:
    """Monte Carlo event-probability estimate with its reliability index."""

    p_hat: float
    beta_hat: float
    n_samples: int
    std_err: float


def beta_from_p(p_hat: float, n: int) -> float:
    """beta = -ppf(p), with empty/full failure sets clamped to 1/(2n) mass."""
    p = min(max(p_hat, 1.0 / (2.0 * n)), 1.0 - 1.0 / (2.0 * n))
    return -norm_ppf(p)


def estimate_probability(g_values) -> ReliabilityEstimate:
    """Estimate p{g <= 0} from g-values evaluated over a sample pool."""
    g = np.asarray(g_values, dtype=float).reshape(-1)
    n = g.size
    if n == 0:
        raise ValueError("needs a non-empty vector of g-values")
    p_hat = float(np.count_nonzero(g <= 0.0)) / n
    se = math.sqrt(p_hat * (1.0 - p_hat) / n)
    return ReliabilityEstimate(
        p_hat=p_hat, beta_hat=beta_from_p(p_hat, n), n_samples=n, std_err=se
    )


def surrogate_probability(model: PckModel, pool: SamplePool, input: RandomInput,
                          F_pool: np.ndarray | None = None) -> ReliabilityEstimate:
    """Event probability with g replaced by the surrogate predictive mean."""
    U = to_standard(input, pool.points)
    mean, _ = predict_batch(model, U, F_query=F_pool)
    return estimate_probability(mean)


def relative_beta_error(beta_hat: float, beta_truth: float) -> float:
    """Absolute relative error |(beta_hat - beta_truth) / beta_truth|."""
    if beta_truth == 0.0:
        raise UndefinedReferenceError("reference reliability index is zero")
    return abs((beta_hat - beta_truth) / beta_truth)


def combined_error(errors) -> float:
    """Sum of the per-limit-state relative errors."""
    errs = [float(e) for e in errors]
    if not errs:
        raise ValueError("needs at least one per-limit-state error")
    return float(sum(errs))


def delta_beta(beta_prev: float, beta_curr: float) -> float:
    """Relative change |(beta_curr - beta_prev) / beta_prev|.

    A zero previous estimate signals an uninitialized index and returns the
    +inf sentinel so the caller targets that limit state next.
    """
    if beta_prev == 0.0:
        return math.inf
    return abs((beta_curr - beta_prev) / beta_prev)
