"""Nonnegative least squares by the classic active-set method.

Solves ``argmin_s ||A s - x||_2`` subject to ``s >= 0`` and certifies the
result through the KKT conditions: with g = A^T(A s - x), every g_i >= -tol
and |g_i| <= tol wherever s_i > 0.  The tolerance is scaled by the problem,
``tol * max(1, ||A^T x||_inf)``, so reports are meaningful at any data scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import as_matrix
from .errors import ConvergenceError, InputError

_RELTOL_SINGULAR = 1e-12


@dataclass(frozen=True)
class NnlsReport:
    solution: np.ndarray
    residual_norm: float
    iterations: int


def solve_nnls(A, x, tol: float = 1e-10) -> NnlsReport:
    """Active-set NNLS with anti-cycling via a hard cap of 10*n outer passes.

    Raises :class:`ConvergenceError` carrying the best iterate if the cap is
    reached without a KKT certificate.
    """
    A = as_matrix(A)
    x = np.asarray(x, dtype=float).ravel()
    m, n = A.shape
    if x.shape[0] != m:
        raise InputError(f"shape mismatch: A is {m}x{n}, x has {x.shape[0]} entries")
    if tol <= 0:
        raise InputError("tol must be > 0")
    s = np.zeros(n)
    if n == 0:
        return NnlsReport(s, float(np.linalg.norm(x)), 0)

    tol_eff = tol * max(1.0, float(np.abs(A.T @ x).max()))
    passive = np.zeros(n, dtype=bool)
    w = A.T @ x  # negative gradient of 1/2||As-x||^2 at s = 0
    max_passes = max(10 * n, 10)
    passes = 0
    certified = False
    while passes < max_passes:
        free = ~passive
        if not np.any(free & (w > tol_eff)):
            certified = True
            break
        passes += 1
        cand = np.where(free)[0]
        j = cand[int(np.argmax(w[cand]))]
        passive[j] = True
        while passive.any():
            idx = np.where(passive)[0]
            z = np.linalg.lstsq(A[:, idx], x, rcond=None)[0]
            if z.min() > 0:
                s[:] = 0.0
                s[idx] = z
                break
            # move from s toward z until the first passive variable hits zero,
            # then release every variable that reached the boundary
            sp = s[idx]
            bad = np.where(z <= 0)[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = sp[bad] / (sp[bad] - z[bad])
            ratios[~np.isfinite(ratios)] = 0.0
            alpha = float(np.min(ratios))
            upd = sp + alpha * (z - sp)
            atol = 1e-13 * max(1.0, float(np.abs(upd).max()))
            leave = upd <= atol
            leave[bad[int(np.argmin(ratios))]] = True  # guarantee progress
            upd[leave] = 0.0
            s[idx] = upd
            passive[idx[leave]] = False
        w = A.T @ (x - A @ s)

    residual = float(np.linalg.norm(x - A @ s))
    g = -w
    ok = bool(np.all(g >= -tol_eff) and np.all(np.abs(g[s > 0]) <= tol_eff))
    if not (certified and ok):
        report = NnlsReport(s, residual, passes)
        if ok:
            return report
        raise ConvergenceError(
            f"no KKT certificate after {passes} passes (cap {max_passes})", best=report
        )
    return NnlsReport(s, residual, passes)


def recover_sources(A, X0, tol: float = 1e-10) -> np.ndarray:
    """Column-wise NNLS of X0 against a nonsingular square A.

    Columns whose unconstrained solve is already nonnegative are accepted
    directly (their KKT gradient is zero); the rest go through the active-set
    solver.  Failures carry the offending column index.
    """
    A = as_matrix(A)
    X0 = as_matrix(X0)
    m, n = A.shape
    if m != n:
        raise InputError(f"A must be square, got {m}x{n}")
    if X0.shape[0] != m:
        raise InputError(f"X0 must have {m} rows, got {X0.shape[0]}")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= _RELTOL_SINGULAR * sv[0]:
        raise InputError("A is numerically singular")
    p = X0.shape[1]
    if p == 0:
        return np.zeros((n, 0))
    S = np.linalg.solve(A, X0)
    bad = np.where(S.min(axis=0) < 0)[0]
    for j in bad:
        try:
            S[:, j] = solve_nnls(A, X0[:, j], tol=tol).solution
        except ConvergenceError as e:
            raise ConvergenceError(f"column {j}: {e}", best=e.best) from e
    return S
