"""Core data types, CSV matrix serialization, and configuration records.

Conventions: mixtures are stored with observations in rows and samples in
columns; all arithmetic is double precision; CSV is the only on-disk matrix
format (no header unless the caller skips one explicitly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, MatrixFormatError, ParameterError

#: Keys accepted in a flat key=value configuration file.
CONFIG_KEYS = ("rho", "eps", "sigma", "delta", "lambda", "tau", "grid", "knn", "seed")
_INT_KEYS = ("grid", "knn", "seed")


def as_matrix(values, nonnegative: bool = False) -> np.ndarray:
    """Validate ``values`` as a dense 2-D float64 matrix and return a copy.

    With ``nonnegative=True`` any negative entry is rejected.
    """
    M = np.array(values, dtype=float, order="C")
    if M.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got ndim={M.ndim}")
    if M.size and not np.all(np.isfinite(M)):
        raise InputError("matrix entries must all be finite")
    if nonnegative and M.size and M.min() < 0:
        i, j = np.unravel_index(int(np.argmin(M)), M.shape)
        raise InputError(f"negative entry {M[i, j]!r} at ({i}, {j}) in nonnegative matrix")
    return M


def read_matrix_csv(path, header: bool = False) -> np.ndarray:
    """Read a comma-separated matrix; one row per line, dot decimal separator.

    Raises :class:`MatrixFormatError` naming the offending line for ragged
    rows, and the row/column position for non-numeric fields.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if header and lines:
        lines = lines[1:]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        return np.zeros((0, 0))
    rows = []
    ncols = len(lines[0].split(","))
    for lineno, line in enumerate(lines, start=1):
        fields = line.split(",")
        if len(fields) != ncols:
            raise MatrixFormatError(
                f"{path}: line {lineno}: expected {ncols} fields, found {len(fields)}"
            )
        row = []
        for colno, tok in enumerate(fields, start=1):
            try:
                row.append(float(tok))
            except ValueError:
                raise MatrixFormatError(
                    f"{path}: line {lineno}, field {colno}: not a number: {tok.strip()!r}"
                ) from None
        rows.append(row)
    return as_matrix(rows)


def write_matrix_csv(M, path) -> None:
    """Write a matrix as CSV with 17 significant digits (lossless round trip)."""
    M = as_matrix(M)
    with open(path, "w", encoding="utf-8") as fh:
        for row in M:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def read_config(path) -> dict:
    """Parse a flat ``key=value`` configuration file.

    Recognized keys: rho, eps, sigma, delta, lambda, tau, grid, knn, seed.
    Blank lines and ``#`` comments are ignored.
    """
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in CONFIG_KEYS:
                raise InputError(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                out[key] = int(val) if key in _INT_KEYS else float(val)
            except ValueError:
                raise InputError(f"{path}: line {lineno}: bad value {val!r} for {key}") from None
    return out


@dataclass(frozen=True)
class PointCloud:
    """Points in R^m plus provenance indices into the columns they came from.

    ``source_index`` holds the original column index of each point, or -1 for
    synthetic points (the appended origin, resampled grid points).
    """

    points: np.ndarray
    source_index: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        idx = np.asarray(self.source_index, dtype=int)
        if pts.ndim != 2:
            raise InputError("point cloud must be a 2-D array (n_points, dim)")
        if pts.size and not np.all(np.isfinite(pts)):
            raise InputError("point coordinates must be finite")
        if idx.shape != (pts.shape[0],):
            raise InputError("source_index must have one entry per point")
        real = idx[idx >= 0]
        if real.size != np.unique(real).size:
            raise InputError("source indices must be pairwise distinct")
        pts.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "source_index", idx)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FcaParams:
    """Thresholds of the separation pipeline.

    rho    -- minimum column L2 norm kept by preprocessing (> 0)
    eps    -- maximum point-to-plane distance for joining a facet group
    sigma  -- minimum distance to every facet vertex for joining a group
    delta  -- maximum |inner product| between two selected plane normals
    """

    rho: float = 1e-3
    eps: float = 1e-5
    sigma: float = 1e-5
    delta: float = 0.99

    def __post_init__(self):
        if not (self.rho > 0):
            raise ParameterError(f"rho must be > 0, got {self.rho}")
        for name in ("eps", "sigma", "delta"):
            v = getattr(self, name)
            if not (0 < v < 1):
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class SeparationResult:
    """Output bundle of a separation run.

    ``A_hat`` has L1-normalized nonnegative columns, ``S_hat`` is the
    nonnegative source estimate for every original column, and ``residual``
    is the Frobenius norm of ``X0 - A_hat @ S_hat`` where X0 is the
    zero-clamped input.
    """

    A_hat: np.ndarray
    S_hat: np.ndarray
    selected_plane_count: int
    group_cardinalities: tuple
    residual: float

    def __post_init__(self):
        A = as_matrix(self.A_hat, nonnegative=True)
        S = as_matrix(self.S_hat, nonnegative=True)
        sums = A.sum(axis=0)
        if A.size and not np.allclose(sums, 1.0, atol=1e-9):
            raise InputError("A_hat columns must each sum to 1")
        A.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "A_hat", A)
        object.__setattr__(self, "S_hat", S)
        object.__setattr__(self, "group_cardinalities", tuple(self.group_cardinalities))
