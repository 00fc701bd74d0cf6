"""Stochastic input model, standard-normal transforms and sampling.

Inputs are mutually independent Gaussians.  All stochastic operations draw
from named counter-based streams keyed by ``(seed, label)`` so that every
pool, design and replication is independently reproducible.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError, EmptyPoolError, InputShapeError

__all__ = [
    "RandomInput",
    "SamplePool",
    "stream_rng",
    "norm_cdf",
    "norm_ppf",
    "sample_mc",
    "sample_lhs",
]


def stream_rng(seed: int, label: str) -> np.random.Generator:
    """Return a counter-based generator for the stream ``(seed, label)``.

    Distinct labels under the same seed give statistically independent
    Philox streams; the same pair always reproduces the same stream.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=words)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, label: str) -> int:
    """Derive a decorrelated integer sub-seed from ``(seed, label)``."""
    digest = hashlib.sha256(f"{seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# Rational approximation of the standard normal quantile (Acklam 2003),
# |relative error| < 1.15e-9 before refinement.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_PPF_PLOW = 0.02425


def norm_cdf(x):
    """Standard normal CDF, exact to machine precision via ``erfc``."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * _erfc(-x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def _erfc(x):
    if np.ndim(x) == 0:
        return np.float64(math.erfc(float(x)))
    from scipy.special import erfc

    return erfc(x)


def norm_ppf(p):
    """Standard normal quantile function.

    Acklam's rational approximation followed by one Halley refinement step
    against the erfc-based CDF, giving near machine precision.  Evaluation
    runs on the lower tail of min(p, 1 - p) where erfc keeps relative
    accuracy, then mirrors the sign.  Accepts scalars or arrays with values
    in ``[0, 1]``; the endpoints map to ``-inf`` / ``+inf``.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0.0) | (p_arr > 1.0) | ~np.isfinite(p_arr)):
        raise ValueError("probabilities must lie in [0, 1]")
    scalar = p_arr.ndim == 0
    p_arr = np.atleast_1d(p_arr)

    sign = np.where(p_arr > 0.5, -1.0, 1.0)
    q = np.minimum(p_arr, 1.0 - p_arr)   # lower-tail mass, in [0, 0.5]
    x = np.empty_like(q)

    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    tail = (q > 0.0) & (q < _PPF_PLOW)
    mid = q >= _PPF_PLOW
    if np.any(mid):
        t = q[mid] - 0.5
        r = t * t
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[mid] = num * t / den
    if np.any(tail):
        t = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]
        den = (((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0
        x[tail] = num / den
    x[q == 0.0] = -np.inf

    # One Halley step on the lower tail: e = Phi(x) - q, x <= 0 so the
    # erfc argument is non-negative and e keeps relative accuracy.
    finite = np.isfinite(x)
    if np.any(finite):
        xf = x[finite]
        err = 0.5 * _erfc(-xf / math.sqrt(2.0)) - q[finite]
        u = err * math.sqrt(2.0 * math.pi) * np.exp(0.5 * xf * xf)
        x[finite] = xf - u / (1.0 + 0.5 * xf * u)

    x *= sign
    out = x + 0.0   # normalize -0.0 at p = 0.5
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class RandomInput:
    """Joint independent-Gaussian input model over ``M`` physical variables."""

    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        sigma = tuple(float(v) for v in self.sigma)
        if len(mu) != len(sigma) or not mu:
            raise InputShapeError("mu and sigma must be non-empty and equal length")
        if any(s <= 0.0 for s in sigma):
            raise ValueError("every sigma must be > 0")
        names = tuple(self.names) or tuple(f"x{i + 1}" for i in range(len(mu)))
        if len(names) != len(mu):
            raise InputShapeError("names must match the number of dimensions")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "names", names)

    @property
    def dims(self) -> int:
        return len(self.mu)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dims:
            raise InputShapeError(
                f"point has {x.shape[-1]} coordinates, input model has {self.dims}"
            )
        return x


def to_standard(input: RandomInput, x) -> np.ndarray:
    """Map physical-space point(s) to standard-normal space: u = (x - mu) / sigma."""
    x = input._check(x)
    return (x - np.asarray(input.mu)) / np.asarray(input.sigma)


def from_standard(input: RandomInput, u) -> np.ndarray:
    """Inverse of :func:`to_standard`: x = mu + sigma * u."""
    u = input._check(u)
    return np.asarray(input.mu) + np.asarray(input.sigma) * u


@dataclass(frozen=True)
class SamplePool:
    """An i.i.d. Monte Carlo population in physical space."""

    points: np.ndarray
    seed: int
    generation: int = 0

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]


def sample_mc(input: RandomInput, n: int, seed: int, generation: int = 0) -> SamplePool:
    """Draw ``n`` i.i.d. samples from the input model.

    Deterministic for fixed ``(seed, generation, n, input)``; distinct
    generation indices use distinct streams and therefore never reuse a
    stream position.
    """
    if n < 1:
        raise EmptyPoolError("a Monte Carlo pool needs n >= 1 samples")
    rng = stream_rng(seed, f"mc-pool/gen{generation}")
    u = rng.standard_normal((n, input.dims))
    return SamplePool(points=from_standard(input, u), seed=seed, generation=generation)


def sample_lhs(input: RandomInput, n: int, seed: int) -> SamplePool:
    """Latin hypercube design: one point per equiprobable stratum per dimension.

    Probabilities are drawn uniformly within each stratum, ``(k + u) / n``
    with u in (0, 1), then mapped through the Gaussian quantile; a random
    permutation pairs strata across dimensions.  Uniform positions (rather
    than stratum midpoints) let the initial design reach the distribution
    tails, which the active stage cannot recover cheaply on its own.
    """
    if n < 2:
        raise DegenerateDesignError("a stratified design needs n >= 2 points")
    rng = stream_rng(seed, "lhs-design")
    u = np.empty((n, input.dims))
    for j in range(input.dims):
        # integers in [1, 2^53) keep the within-stratum offset strictly inside (0, 1)
        offset = rng.integers(1, 2 ** 53, size=n) / 2.0 ** 53
        u[:, j] = norm_ppf((rng.permutation(n) + offset) / n)
    return SamplePool(points=from_standard(input, u), seed=seed, generation=0)
