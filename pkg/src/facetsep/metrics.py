"""Evaluation: the Comon equivalence index, column matching, realized SNR.

Two mixing matrices are equivalent for separation purposes when one is the
other times a permutation and a positive diagonal; the Comon index is a
scalar that vanishes exactly on that equivalence class.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .datamodel import as_matrix
from .errors import InputError

_SINGULAR_RTOL = 1e-12


class ConditioningError(InputError):
    """Matrix too close to singular for the requested comparison."""


@dataclass(frozen=True)
class EvalReport:
    comon_index: float
    matched_permutation: tuple
    per_column_error: tuple
    realized_snr_db: float | None = None


def _l2_normalized_columns(M):
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        raise ConditioningError("matrix has a zero column")
    return M / norms


def comon_index(A, A_hat) -> float:
    """Four-term distance on D = A^-1 A_hat after L2 column normalization:

        sum_i |sum_j |d_ij| - 1|^2 + sum_j |sum_i |d_ij| - 1|^2
      + sum_i |sum_j d_ij^2 - 1|   + sum_j |sum_i d_ij^2 - 1|

    Zero exactly when A_hat equals A up to column permutation and positive
    scaling.
    """
    A = as_matrix(A)
    A_hat = as_matrix(A_hat)
    if A.shape != A_hat.shape or A.shape[0] != A.shape[1]:
        raise InputError("expected two square matrices of identical shape")
    for M, name in ((A, "A"), (A_hat, "A_hat")):
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= _SINGULAR_RTOL * sv[0]:
            raise ConditioningError(f"{name} is numerically singular")
    An = _l2_normalized_columns(A)
    Bn = _l2_normalized_columns(A_hat)
    D = np.linalg.solve(An, Bn)
    absD = np.abs(D)
    sq = D * D
    term1 = float(np.sum((absD.sum(axis=1) - 1.0) ** 2))
    term2 = float(np.sum((absD.sum(axis=0) - 1.0) ** 2))
    term3 = float(np.sum(np.abs(sq.sum(axis=1) - 1.0)))
    term4 = float(np.sum(np.abs(sq.sum(axis=0) - 1.0)))
    return term1 + term2 + term3 + term4


def match_columns(A, A_hat) -> EvalReport:
    """Optimal column alignment after L1 normalization.

    Exhaustive over the m! permutations (m <= 6); reports the assignment
    minimizing the total L2 error and the per-column errors under it.  The
    Comon index is included when both matrices admit it, else infinity.
    """
    A = as_matrix(A)
    A_hat = as_matrix(A_hat)
    if A.shape != A_hat.shape or A.shape[0] != A.shape[1]:
        raise InputError("expected two square matrices of identical shape")
    m = A.shape[0]
    if m > 6:
        raise InputError("exhaustive matching supports m <= 6")

    def l1n(M):
        n = np.abs(M).sum(axis=0)
        n[n == 0] = 1.0
        return M / n

    An, Bn = l1n(A), l1n(A_hat)
    cost = np.linalg.norm(An[:, :, None] - Bn[:, None, :], axis=0)  # cost[i, j]
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(m)):
        total = sum(cost[perm[j], j] for j in range(m))
        if total < best:
            best, best_perm = total, perm
    errors = tuple(float(cost[best_perm[j], j]) for j in range(m))
    try:
        ci = comon_index(A, A_hat)
    except ConditioningError:
        ci = math.inf
    return EvalReport(
        comon_index=ci,
        matched_permutation=tuple(best_perm),
        per_column_error=errors,
    )


def realized_snr(X_clean, X_noisy) -> float:
    """10 log10(||X_clean||_F^2 / ||X_noisy - X_clean||_F^2); infinity when
    the matrices coincide."""
    X_clean = as_matrix(X_clean)
    X_noisy = as_matrix(X_noisy)
    if X_clean.shape != X_noisy.shape:
        raise InputError("matrices must have identical shape")
    sig = float(np.sum(X_clean * X_clean))
    if sig == 0:
        raise InputError("SNR undefined for an all-zero reference")
    noise = float(np.sum((X_noisy - X_clean) ** 2))
    if noise == 0:
        return math.inf
    return 10.0 * math.log10(sig / noise)
