"""Vertex-scoring baseline: per-column nonnegative regression.

Each column of X is regressed on all the others under a nonnegativity
constraint; columns that are nearly nonnegative combinations of the rest get
low scores and cannot be mixing-matrix columns, so the highest-scoring
columns are taken as the vertex estimate.  This succeeds only when pure
(stand-alone peak) columns exist, which is exactly the condition the facet
pipeline drops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import SeparationResult, as_matrix
from .errors import InputError
from .nnls import recover_sources, solve_nnls

#: Residual threshold deciding feasibility of an exact-representation test.
_FEAS_RTOL = 1e-9

#: Penalty weights for the minimum-coefficient-sum refinement; the largest
#: weight effectively enforces the equality constraint.
_PENALTY_WEIGHTS = (1e3, 1e5, 1e7)


@dataclass(frozen=True)
class ColumnScore:
    """Score of one column; ``is_edge`` is set by the noiseless edge test."""

    column_id: int
    score: float
    is_edge: bool | None = None


def score_columns(X) -> list:
    """Regression score of every column against all the others.

    score_k = min_{lambda >= 0} || sum_{j != k} X[:,j] lambda_j - X[:,k] ||^2
    """
    X = as_matrix(X)
    p = X.shape[1]
    if p < 2:
        raise InputError("need at least 2 columns to score")
    out = []
    for k in range(p):
        others = np.delete(X, k, axis=1)
        rep = solve_nnls(others, X[:, k])
        out.append(ColumnScore(column_id=k, score=rep.residual_norm**2))
    return out


def edge_test(X, k: int) -> ColumnScore:
    """Noiseless cone-edge certificate for column k.

    Solves min sum(lambda) s.t. sum_{j != k} X[:,j] lambda_j = X[:,k],
    lambda >= 0, through a feasibility NNLS followed by a sum-penalty
    refinement.  The column is an edge iff the program is infeasible or its
    optimum exceeds 1.  Columns are first rescaled to unit coefficient sum
    (cone membership is scale-free, and the unit threshold on the optimum
    presumes comparable column masses).
    """
    X = as_matrix(X)
    if float(np.linalg.norm(X[:, k])) == 0:
        raise InputError(f"column {k} is zero")
    sums = np.abs(X).sum(axis=0)
    sums[sums == 0] = 1.0
    Xn = X / sums
    col = Xn[:, k]
    others = np.delete(Xn, k, axis=1)
    feas = solve_nnls(others, col)
    if feas.residual_norm > _FEAS_RTOL * max(1.0, float(np.linalg.norm(col))):
        return ColumnScore(column_id=k, score=math.inf, is_edge=True)

    lam = feas.solution
    for w in _PENALTY_WEIGHTS:
        stacked = np.vstack([w * others, np.ones((1, others.shape[1]))])
        target = np.concatenate([w * col, [0.0]])
        lam = solve_nnls(stacked, target).solution
    cstar = float(lam.sum())
    return ColumnScore(column_id=k, score=cstar, is_edge=cstar > 1.0 + 1e-6)


def nn_separate(X, n: int) -> SeparationResult:
    """Take the n highest-scoring columns as the mixing estimate and recover
    sources by nonnegative least squares.  Ties at the cutoff break toward
    the lower column index."""
    X = as_matrix(X)
    p = X.shape[1]
    if p < n:
        raise InputError(f"need at least n={n} columns, got {p}")
    scores = score_columns(X)
    order = sorted(scores, key=lambda s: (-s.score, s.column_id))
    chosen = [s.column_id for s in order[:n]]
    X0 = np.maximum(X, 0.0)
    A = X0[:, chosen].copy()
    sums = A.sum(axis=0)
    if np.any(sums == 0):
        raise InputError("a selected column is entirely nonpositive")
    A /= sums
    S = recover_sources(A, X0)
    residual = float(np.linalg.norm(X0 - A @ S))
    return SeparationResult(
        A_hat=A,
        S_hat=np.maximum(S, 0.0),
        selected_plane_count=n,
        group_cardinalities=(),
        residual=residual,
    )
