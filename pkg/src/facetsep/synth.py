"""Synthetic sources, mixing matrices, and calibrated white Gaussian noise.

Source rows are sums of Lorentzian peaks, the shape of real absorption
spectra.  Two source conditions are supported: ``nna`` gives every source one
stand-alone peak (a column where all other sources vanish), ``facet`` places
blocks of columns on each coordinate hyperplane so the data cone has densely
populated facets but no pure columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import as_matrix
from .errors import InputError, ParameterError

#: Peak-height scale of generated spectra.  Chosen so that realistic
#: noise-filter thresholds (tens) separate peak-bearing columns (norms in the
#: hundreds) from baseline columns (norms of order one).
SOURCE_AMPLITUDE = 1000.0

#: Fraction of samples placed on coordinate hyperplanes in ``facet`` mode,
#: spread evenly over the coordinates.  Facets then carry the largest point
#: counts by a wide margin (spurious hull facets hold m-1 points), while the
#: bulk of the signal energy stays in the strong condition columns, which
#: keeps their angular noise small at a given global SNR.
FACET_COLUMN_FRACTION = 0.15


@dataclass(frozen=True)
class SourceSpec:
    """Recipe for a synthetic source matrix."""

    n_sources: int
    n_samples: int
    mode: str = "facet"
    peak_count: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("nna", "facet"):
            raise ParameterError(f"mode must be 'nna' or 'facet', got {self.mode!r}")
        if self.n_sources < 2:
            raise ParameterError("need at least 2 sources")
        if self.n_samples < 3 * self.n_sources:
            raise ParameterError(
                f"n_samples must be >= 3*n_sources, got {self.n_samples} < {3 * self.n_sources}"
            )
        if self.peak_count < 1:
            raise ParameterError("peak_count must be >= 1")


def _lorentzian_rows(rng, n: int, p: int, peak_count: int) -> np.ndarray:
    """Rows of summed positive Lorentzian peaks h*g^2/((t-t0)^2+g^2)."""
    # narrow strong peaks over a deep baseline: the column-norm histogram is
    # then bimodal (peak-bearing columns in the hundreds, tail columns near
    # zero), so a single norm threshold separates signal from noise-dominated
    # columns the way absorption spectra allow in practice
    t = np.arange(p, dtype=float)
    S = np.zeros((n, p))
    for i in range(n):
        for _ in range(peak_count):
            h = rng.uniform(0.8, 1.6) * SOURCE_AMPLITUDE
            t0 = rng.uniform(0.0, p - 1.0)
            g = rng.uniform(0.004, 0.01) * p
            S[i] += h * g * g / ((t - t0) ** 2 + g * g)
    return S


def _facet_pattern_block(m: int, skip: int) -> np.ndarray:
    """m-1 linearly independent nonnegative columns with coordinate ``skip`` zero.

    Entries are 1 everywhere off ``skip`` with a single 2 rotating through the
    remaining coordinates; the (m-1)x(m-1) submatrix is I + ones, which is
    nonsingular, so independence holds exactly.
    """
    others = [k for k in range(m) if k != skip]
    block = np.zeros((m, m - 1))
    for j, k in enumerate(others):
        block[others, j] = 1.0
        block[k, j] = 2.0
    return block


def gen_sources(spec: SourceSpec) -> np.ndarray:
    """Generate an n x p nonnegative source matrix satisfying ``spec.mode``.

    nna:   one column per source is overwritten with a stand-alone peak.
    facet: for each coordinate i, a block of columns with i-th entry zero and
           all other entries strictly positive is written in; the first m-1
           columns of each block use an exactly independent integer pattern,
           the rest are random, so every coordinate hyperplane carries many
           points and none of them is a stand-alone peak (m >= 3).
    """
    rng = np.random.default_rng(spec.seed)
    m, p = spec.n_sources, spec.n_samples
    S = _lorentzian_rows(rng, m, p, spec.peak_count)

    if spec.mode == "nna":
        cols = rng.choice(p, size=m, replace=False)
        for i, j in enumerate(cols):
            S[:, j] = 0.0
            S[i, j] = rng.uniform(0.5, 1.0) * SOURCE_AMPLITUDE
        return S

    per_plane = max(m - 1, int(FACET_COLUMN_FRACTION * p) // m)
    per_plane = min(per_plane, (p - m) // m)  # leave generic columns over
    per_plane = max(per_plane, m - 1)
    cols = rng.choice(p, size=m * per_plane, replace=False)
    # all condition columns carry the same total mass (narrow scale range,
    # patterns rescaled to unit L1), so every facet's points sit at the same
    # signal-to-noise level and one grouping tube width fits all facets
    for i in range(m):
        mine = cols[i * per_plane : (i + 1) * per_plane]
        block = _facet_pattern_block(m, i)
        for j, col in enumerate(mine):
            mass = rng.uniform(2.2, 3.3) * SOURCE_AMPLITUDE
            if j < m - 1:
                v = block[:, j]
            else:
                v = np.zeros(m)
                others = [k for k in range(m) if k != i]
                v[others] = rng.uniform(0.2, 1.0, size=m - 1)
            S[:, col] = mass * v / v.sum()
    return S


def verify_condition(S, mode: str) -> bool:
    """Check the source condition: stand-alone peaks (nna) or m-1 independent
    columns on every coordinate hyperplane (facet).  Pure predicate."""
    S = as_matrix(S, nonnegative=True)
    m = S.shape[0]
    if mode == "nna":
        for i in range(m):
            ok = S[i] > 0
            if m > 1:
                ok &= np.delete(S, i, axis=0).max(axis=0) <= 1e-12
            if not np.any(ok):
                return False
        return True
    if mode == "facet":
        for i in range(m):
            onplane = S[:, S[i] < 1e-12]
            if onplane.shape[1] < m - 1:
                return False
            sv = np.linalg.svd(onplane, compute_uv=False)
            rank = int(np.sum(sv > 1e-9 * sv[0])) if sv.size and sv[0] > 0 else 0
            if rank < m - 1:
                return False
        return True
    raise ParameterError(f"unknown mode {mode!r}")


def gen_mixing(m: int, seed: int = 0) -> np.ndarray:
    """Random m x m mixing matrix: strictly positive entries, columns summing
    to 1, condition number <= 1e3 (resampled otherwise).

    Draws whose cone facets are nearly parallel are also resampled: the facet
    normals are the rows of A^-1, and when two of them have |inner product|
    >= 0.98 the standard coplanarity filter (delta = 0.99) cannot tell the
    facets apart, so no facet-based method can recover such a cone.
    """
    if m < 2:
        raise ParameterError("need m >= 2")
    rng = np.random.default_rng(seed)
    while True:
        A = rng.uniform(0.05, 1.0, size=(m, m))
        A /= A.sum(axis=0)
        if np.linalg.cond(A) > 1e3:
            continue
        N = np.linalg.inv(A)
        N /= np.linalg.norm(N, axis=1, keepdims=True)
        G = np.abs(N @ N.T)
        np.fill_diagonal(G, 0.0)
        if G.max() < 0.98:
            return A


def add_awgn(X, snr_db: float, seed: int = 0) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise at the requested SNR in dB.

    The per-entry variance is ||X||_F^2 / (size * 10^(snr_db/10)), so the
    expected noise power matches the signal power ratio.  ``snr_db = inf``
    returns the input unchanged.
    """
    X = as_matrix(X)
    if np.isinf(snr_db):
        return X.copy()
    power = float(np.sum(X * X))
    if power == 0.0:
        raise InputError("SNR is undefined for an all-zero signal")
    var = power / (X.size * 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return X + rng.normal(0.0, np.sqrt(var), size=X.shape)
