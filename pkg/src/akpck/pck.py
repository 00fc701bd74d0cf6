"""PC-Kriging: universal Kriging with an orthonormal Hermite trend.

Fits the trend coefficients and process variance by profile maximum
likelihood, optimizes the isotropic Matern-5/2 scale over a bounded
log-domain, and carries leave-one-out diagnostics (trend and variance
re-estimated per fold, kernel scale held fixed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist

from .errors import HyperparameterError, IllConditionedError, UnderdeterminedTrendError
from .pcebasis import PceBasis, build_index_set, design_matrix, eval_basis

__all__ = [
    "KernelSpec",
    "Prediction",
    "PckModel",
    "matern52",
    "fit_given",
    "fit",
    "predict",
    "predict_batch",
    "loo_diagnostics",
    "select_model",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

NUGGET_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
THETA_DOMAIN = (1e-2, 1e2)
N_STARTS = 5
SIGMA2_REL_FLOOR = 1e-12
SIGMA2_ABS_FLOOR = 1e-24
_INFEASIBLE = 1e30   # objective value for scales whose Cholesky fails


def matern52(d, theta):
    """Matern-5/2 correlation at distance ``d`` for scale ``theta``.

    r(d) = (1 + sqrt(5) d / theta + 5 d^2 / (3 theta^2)) exp(-sqrt(5) d / theta)
    """
    if theta <= 0.0:
        raise HyperparameterError("matern52 needs theta > 0")
    d = np.asarray(d, dtype=float)
    h = d * (math.sqrt(5.0) / theta)
    if h.ndim == 0:
        h = float(h)
        return (1.0 + h + h * h / 3.0) * math.exp(-h)
    return _matern52_core(h)


def _matern52_core(h: np.ndarray) -> np.ndarray:
    """In-place evaluation on scaled distances h = sqrt(5) d / theta."""
    out = 1.0 + h
    sq = h * h
    sq /= 3.0
    out += sq
    np.negative(h, out=sq)
    np.exp(sq, out=sq)
    out *= sq
    return out


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic Matern-5/2 kernel with a non-negative diagonal nugget."""

    theta: float
    nugget: float = 0.0
    family: str = "matern52"

    def __post_init__(self):
        if self.theta <= 0.0:
            raise HyperparameterError("theta must be > 0")
        if self.nugget < 0.0:
            raise HyperparameterError("nugget must be >= 0")


@dataclass(frozen=True)
class Prediction:
    """Predictive mean and standard deviation at one point."""

    mean: float
    sd: float


def _correlation(X: np.ndarray, theta: float, nugget: float) -> np.ndarray:
    return _correlation_from_dist(cdist(X, X), theta, nugget)


def _correlation_from_dist(D: np.ndarray, theta: float, nugget: float) -> np.ndarray:
    R = matern52(D, theta)
    if nugget:
        R[np.diag_indices_from(R)] += nugget
    return R


def _sigma2_floor(y: np.ndarray) -> float:
    v = float(np.var(y))
    return SIGMA2_REL_FLOOR * v if v > 0.0 else SIGMA2_ABS_FLOOR


def _gls(L: np.ndarray, F: np.ndarray, y: np.ndarray):
    """Profile-likelihood inner step given the Cholesky factor of R.

    Returns (a, sigma2_raw, G_chol, white_resid) where sigma2_raw is the
    unfloored residual estimate.
    """
    n = y.shape[0]
    yw = solve_triangular(L, y, lower=True, check_finite=False)
    Fw = solve_triangular(L, F, lower=True, check_finite=False)
    G = Fw.T @ Fw
    G_chol = cho_factor(G, lower=True, check_finite=False)
    a = cho_solve(G_chol, Fw.T @ yw, check_finite=False)
    resid = yw - Fw @ a
    sigma2 = float(resid @ resid) / n
    return a, sigma2, G_chol, resid


def _objective(L: np.ndarray, F: np.ndarray, y: np.ndarray, floor: float | None = None):
    n = y.shape[0]
    a, sigma2_raw, G_chol, resid = _gls(L, F, y)
    sigma2 = max(sigma2_raw, _sigma2_floor(y) if floor is None else floor)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    nll = 0.5 * (logdet + n * math.log(2.0 * math.pi * sigma2) + n)
    return a, sigma2, nll, G_chol, resid


def fit_given(X, y, basis: PceBasis, theta: float, nugget: float = 0.0):
    """Trend/variance/objective for a fixed kernel scale.

    a = (F' R^-1 F)^-1 F' R^-1 y, sigma2 = (1/N) (y - F a)' R^-1 (y - F a),
    objective = 0.5 [log det R + N log(2 pi sigma2) + N].  The nugget
    escalates through the standard ladder if the Cholesky fails.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    F = design_matrix(basis, X)
    n, k = F.shape
    if n <= k:
        raise UnderdeterminedTrendError(f"need N > {k} trend terms, got N = {n}")
    for nug in _ladder_from(nugget):
        try:
            L = np.linalg.cholesky(_correlation(X, theta, nug))
        except np.linalg.LinAlgError:
            continue
        a, sigma2, nll, _, _ = _objective(L, F, y)
        return a, sigma2, nll
    raise IllConditionedError("correlation matrix not PD after nugget escalation")


def _ladder_from(nugget: float):
    yield nugget
    for nug in NUGGET_LADDER:
        if nug > nugget:
            yield nug


@dataclass
class PckModel:
    """A fitted PC-Kriging surrogate (immutable after construction)."""

    basis: PceBasis
    kernel: KernelSpec
    X: np.ndarray            # training inputs, standard space, (N, M)
    y: np.ndarray            # training responses, (N,)
    a: np.ndarray            # trend coefficients over the index set
    sigma2: float            # process variance (floored)
    L: np.ndarray            # lower Cholesky factor of R (with nugget)
    nll: float               # profile-likelihood objective at the optimum
    e_loo: np.ndarray = field(default=None, repr=False)
    s2_loo: np.ndarray = field(default=None, repr=False)
    eps_loo: float = None
    nll_trace: tuple = ()    # accepted (theta, nll) iterates of the search

    def __post_init__(self):
        for name in ("X", "y", "a", "L"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        F = design_matrix(self.basis, self.X)
        Fw = solve_triangular(self.L, F, lower=True, check_finite=False)
        G_chol = cho_factor(Fw.T @ Fw, lower=True, check_finite=False)
        resid = self.y - F @ self.a
        alpha = cho_solve((self.L, True), resid, check_finite=False)
        rinv_F = cho_solve((self.L, True), F, check_finite=False)
        self._F, self._G_chol, self._alpha, self._rinv_F = F, G_chol, alpha, rinv_F

    @property
    def n_train(self) -> int:
        return self.X.shape[0]


def _virtual_loo(model: PckModel):
    """Delete-one residuals/variances with the kernel scale held fixed.

    Uses the projected-precision identities for universal Kriging: with
    Q = R^-1 - R^-1 F (F' R^-1 F)^-1 F' R^-1, the fold residual is
    [Q y]_s / Q_ss, the fold-refit process variance follows from the
    quadratic-form downdate, and the fold predictive variance is
    sigma2_fold / Q_ss.  Equivalent to literal refits (tested to 1e-8).
    """
    n = model.n_train
    rinv = cho_solve((model.L, True), np.eye(n), check_finite=False)
    T = cho_solve(model._G_chol, model._rinv_F.T, check_finite=False).T
    Q = rinv - T @ model._rinv_F.T
    qdiag = np.diag(Q).copy()
    if np.any(qdiag <= 0.0):
        raise IllConditionedError("non-positive LOO precision; design degenerate")
    Qy = Q @ model.y
    e = Qy / qdiag
    quad = float(model.y @ Qy)
    floor = _sigma2_floor(model.y)
    sigma2_fold = np.maximum((quad - Qy * Qy / qdiag) / (n - 1), floor)
    s2 = sigma2_fold / qdiag
    return e, s2, float(np.mean(e * e))


def loo_diagnostics(model: PckModel):
    """Return (e_loo, s2_loo, eps_loo), computing and caching if needed."""
    if model.e_loo is None:
        if model.n_train < model.basis.size + 2:
            raise UnderdeterminedTrendError(
                "leave-one-out needs N >= trend size + 2"
            )
        e, s2, eps = _virtual_loo(model)
        e.setflags(write=False)
        s2.setflags(write=False)
        object.__setattr__(model, "e_loo", e)
        object.__setattr__(model, "s2_loo", s2)
        object.__setattr__(model, "eps_loo", eps)
    return model.e_loo, model.s2_loo, model.eps_loo


def fit(X, y, basis: PceBasis, theta_domain=THETA_DOMAIN, n_starts: int = N_STARTS,
        with_loo: bool = True) -> PckModel:
    """Fit a PCK model, optimizing the kernel scale by profile likelihood.

    Multi-start bounded scalar minimization over log(theta): the log-domain
    splits into ``n_starts`` equal brackets, each searched with bounded
    Brent.  Nugget escalates only if every evaluation at a level fails.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be (N, M)")
    F = design_matrix(basis, X)
    n, k = F.shape
    if n <= k:
        raise UnderdeterminedTrendError(f"need N > {k} trend terms, got N = {n}")
    lo, hi = theta_domain
    if not (0.0 < lo < hi):
        raise HyperparameterError("theta domain must satisfy 0 < lo < hi")

    log_lo, log_hi = math.log(lo), math.log(hi)
    edges = np.linspace(log_lo, log_hi, n_starts + 1)
    D = cdist(X, X)
    floor = _sigma2_floor(y)

    for nugget in NUGGET_LADDER:
        best = None          # (nll, theta)
        trace: list[tuple[float, float]] = []

        def objective(log_theta: float) -> float:
            theta = math.exp(log_theta)
            try:
                L = np.linalg.cholesky(_correlation_from_dist(D, theta, nugget))
            except np.linalg.LinAlgError:
                return _INFEASIBLE
            _, _, nll, _, _ = _objective(L, F, y, floor=floor)
            return nll

        for i in range(n_starts):
            res = minimize_scalar(
                objective, bounds=(edges[i], edges[i + 1]), method="bounded",
                options={"xatol": 1e-3, "maxiter": 60},
            )
            if res.fun < _INFEASIBLE and (best is None or res.fun < best[0]):
                best = (float(res.fun), math.exp(float(res.x)))
                trace.append((best[1], best[0]))
        if best is None:
            continue
        nll, theta = best
        L = np.linalg.cholesky(_correlation_from_dist(D, theta, nugget))
        a, sigma2, nll, _, _ = _objective(L, F, y, floor=floor)
        model = PckModel(
            basis=basis, kernel=KernelSpec(theta=theta, nugget=nugget),
            X=X, y=y, a=a, sigma2=sigma2, L=L, nll=nll, nll_trace=tuple(trace),
        )
        if with_loo and n >= k + 2:
            loo_diagnostics(model)
        return model
    raise IllConditionedError("all kernel-scale starts failed the Cholesky")


def predict_batch(model: PckModel, U: np.ndarray, F_query: np.ndarray | None = None):
    """Vectorized universal-Kriging prediction.

    Returns (mean, sd) arrays over the (n, M) standard-space query block.
    Negative variances from round-off clamp to zero.
    """
    U = np.asarray(U, dtype=float)
    if F_query is None:
        F_query = design_matrix(model.basis, U)
    r = matern52(cdist(model.X, U), model.kernel.theta)
    mean = F_query @ model.a + r.T @ model._alpha
    v = F_query.T - model._rinv_F.T @ r
    z = solve_triangular(model.L, r, lower=True, overwrite_b=True, check_finite=False)
    r_rinv_r = np.einsum("ij,ij->j", z, z)
    w = solve_triangular(model._G_chol[0], v, lower=True, overwrite_b=True,
                         check_finite=False)
    v_ginv_v = np.einsum("ij,ij->j", w, w)
    var = model.sigma2 * (1.0 - r_rinv_r + v_ginv_v)
    return mean, np.sqrt(np.maximum(var, 0.0))


def predict(model: PckModel, u) -> Prediction:
    """Predict at a single standard-space point."""
    u = np.asarray(u, dtype=float).reshape(1, -1)
    mean, sd = predict_batch(model, u)
    return Prediction(mean=float(mean[0]), sd=float(sd[0]))


def select_model(X, y, degrees, theta_domain=THETA_DOMAIN) -> PckModel:
    """Sweep trend degrees, keep the candidate with minimal LOO error.

    A degree p is admissible when N > |A(p)| + 1.  Ties break toward the
    lower degree; LOO errors within floating noise of the response scale
    count as ties so that, e.g., constant data selects degree zero.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    tie = 1e-12 * float(np.mean(y * y))
    best = None
    for p in sorted(set(int(d) for d in degrees)):
        if n <= math.comb(m + p, p) + 1:
            continue
        model = fit(X, y, build_index_set_basis(m, p), theta_domain=theta_domain)
        if best is None or model.eps_loo < best.eps_loo - tie:
            best = model
    if best is None:
        raise UnderdeterminedTrendError(
            f"no admissible trend degree for N = {n} observations"
        )
    return best


def build_index_set_basis(M: int, p: int) -> PceBasis:
    return PceBasis(index_set=build_index_set(M, p))


def model_to_dict(model: PckModel) -> dict:
    """All model fields at full numeric precision, JSON-serializable."""
    e, s2, eps = loo_diagnostics(model)
    return {
        "dims": model.basis.dims,
        "degree": model.basis.degree,
        "theta": model.kernel.theta,
        "nugget": model.kernel.nugget,
        "a": model.a.tolist(),
        "sigma2": model.sigma2,
        "X": model.X.tolist(),
        "y": model.y.tolist(),
        "L": model.L.tolist(),
        "nll": model.nll,
        "e_loo": e.tolist(),
        "s2_loo": s2.tolist(),
        "eps_loo": eps,
        "nll_trace": [list(t) for t in model.nll_trace],
    }


def model_from_dict(data: dict) -> PckModel:
    model = PckModel(
        basis=build_index_set_basis(int(data["dims"]), int(data["degree"])),
        kernel=KernelSpec(theta=float(data["theta"]), nugget=float(data["nugget"])),
        X=np.asarray(data["X"], dtype=float),
        y=np.asarray(data["y"], dtype=float),
        a=np.asarray(data["a"], dtype=float),
        sigma2=float(data["sigma2"]),
        L=np.asarray(data["L"], dtype=float),
        nll=float(data["nll"]),
        nll_trace=tuple(tuple(t) for t in data.get("nll_trace", [])),
    )
    e = np.asarray(data["e_loo"], dtype=float)
    s2 = np.asarray(data["s2_loo"], dtype=float)
    e.setflags(write=False)
    s2.setflags(write=False)
    object.__setattr__(model, "e_loo", e)
    object.__setattr__(model, "s2_loo", s2)
    object.__setattr__(model, "eps_loo", float(data["eps_loo"]))
    return model


def save_model(model: PckModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> PckModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
