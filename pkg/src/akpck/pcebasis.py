"""Multivariate orthonormal Hermite bases with total-degree truncation.

Polynomials are probabilists' Hermite, evaluated in standard-normal space
and normalized to unit variance, so the regression design matrix is well
conditioned and E[psi_a psi_b] = delta_ab under the input measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputShapeError

__all__ = ["MultiIndexSet", "PceBasis", "build_index_set", "eval_basis", "design_matrix"]


def _graded_lex_indices(M: int, p: int) -> list[tuple[int, ...]]:
    """All multi-indices with total degree <= p, graded lexicographic order."""
    out: list[tuple[int, ...]] = []

    def compositions(total: int, parts: int, prefix: tuple[int, ...]):
        if parts == 1:
            out.append(prefix + (total,))
            return
        for head in range(total, -1, -1):
            compositions(total - head, parts - 1, prefix + (head,))

    for degree in range(p + 1):
        compositions(degree, M, ())
    return out


@dataclass(frozen=True)
class MultiIndexSet:
    """Total-degree truncated multi-index set A = {a : sum(a) <= p}."""

    dims: int
    degree: int
    indices: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.indices)


def build_index_set(M: int, p: int) -> MultiIndexSet:
    """Build the truncation set for ``M`` dimensions and total degree ``p``.

    Cardinality is C(M + p, p); the zero tuple comes first.
    """
    if M < 1 or p < 0:
        raise ValueError("need M >= 1 and p >= 0")
    indices = tuple(_graded_lex_indices(M, p))
    assert len(indices) == math.comb(M + p, p)
    return MultiIndexSet(dims=M, degree=p, indices=indices)


@dataclass(frozen=True)
class PceBasis:
    """Orthonormal Hermite basis over a truncated multi-index set."""

    index_set: MultiIndexSet

    @property
    def dims(self) -> int:
        return self.index_set.dims

    @property
    def size(self) -> int:
        return len(self.index_set)

    @property
    def degree(self) -> int:
        return self.index_set.degree


def hermite_table(u: np.ndarray, p: int) -> np.ndarray:
    """Normalized probabilists' Hermite values He_k(u)/sqrt(k!) for k = 0..p.

    ``u`` has shape (..., ), the result shape (p + 1, ...).  Three-term
    recurrence He_{k+1} = u He_k - k He_{k-1}.
    """
    u = np.asarray(u, dtype=float)
    he = np.empty((p + 1,) + u.shape)
    he[0] = 1.0
    if p >= 1:
        he[1] = u
    for k in range(1, p):
        he[k + 1] = u * he[k] - k * he[k - 1]
    norms = np.array([math.sqrt(math.factorial(k)) for k in range(p + 1)])
    return he / norms.reshape((p + 1,) + (1,) * u.ndim)


def eval_basis(basis: PceBasis, u) -> np.ndarray:
    """Evaluate all basis polynomials at one standard-space point."""
    u = np.asarray(u, dtype=float)
    if u.shape != (basis.dims,):
        raise InputShapeError(f"expected a point with {basis.dims} coordinates")
    return design_matrix(basis, u.reshape(1, -1))[0]


def design_matrix(basis: PceBasis, points: np.ndarray) -> np.ndarray:
    """Regression design matrix: row s holds the basis evaluated at point s."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != basis.dims:
        raise InputShapeError(f"expected an (n, {basis.dims}) array of points")
    p = basis.degree
    # per-dimension normalized Hermite values, shape (p + 1, n, M)
    he = hermite_table(pts, p)
    n = pts.shape[0]
    F = np.ones((n, basis.size))
    for col, alpha in enumerate(basis.index_set.indices):
        for dim, a in enumerate(alpha):
            if a:
                F[:, col] *= he[a, :, dim]
    return F
