"""Cell-wise predictive-variance inflation from leave-one-out errors.

Each training point owns the region of standard space closer to it than to
any other training point; queries falling in that cell get their raw
variance multiplied by 1 + e_loo^2 / s2_loo of the owning point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyDesignError
from .pck import PckModel, SIGMA2_REL_FLOOR, loo_diagnostics

__all__ = ["CorrectionField", "build_correction", "corrected_variance", "corrected_variance_batch"]


@dataclass(frozen=True)
class CorrectionField:
    """Per-cell variance inflation factors anchored at the training sites."""

    sites: np.ndarray     # (N, M) standard-space training inputs
    factors: np.ndarray   # (N,) multipliers, all >= 1

    def __post_init__(self):
        for name in ("sites", "factors"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def build_correction(model: PckModel) -> CorrectionField:
    """Correction factors 1 + e_loo[i]^2 / s2_loo[i] at each training site.

    Degenerate fold variances are floored so factors stay finite.
    """
    if model.n_train == 0:
        raise EmptyDesignError("cannot build a correction field on an empty design")
    e, s2, _ = loo_diagnostics(model)
    floor = SIGMA2_REL_FLOOR * model.sigma2
    factors = 1.0 + (e * e) / np.maximum(s2, floor)
    return CorrectionField(sites=model.X, factors=factors)


def _owner(field: CorrectionField, U: np.ndarray) -> np.ndarray:
    # argmin breaks ties toward the lowest site index
    return np.argmin(cdist(U, field.sites), axis=1)


def corrected_variance(field: CorrectionField, u, raw: float) -> float:
    """Inflate one raw variance by the factor of the cell containing ``u``."""
    if raw < 0.0:
        raise ValueError("raw variance must be >= 0")
    u = np.asarray(u, dtype=float).reshape(1, -1)
    return float(raw * field.factors[_owner(field, u)[0]])


def corrected_variance_batch(field: CorrectionField, U: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Vectorized :func:`corrected_variance` over query block ``U``."""
    U = np.asarray(U, dtype=float)
    return np.asarray(raw, dtype=float) * field.factors[_owner(field, U)]
