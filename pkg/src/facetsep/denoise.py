"""Point-cloud noise reduction.

Two families: local KNN smoothing (box or Gaussian weights) applied within a
facet group, and a total-variation pipeline for 3-mixture data: project the
cloud onto its 2-D chart on the plane x+y+z = 1, rasterize the distance
function to the points, minimize the ROF energy TV(u) + lambda/2 ||d - u||^2
by the dual projection fixed point, and resample the cloud as the sublevel
set {u <= tau}.  Smaller lambda denoises more strongly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import PointCloud
from .errors import (
    DenoiseTooAggressiveError,
    InputError,
    ParameterError,
    UnsupportedDimensionError,
)

#: Auto-picked ROF fidelity weight: lambda = LAMBDA_CELL_COEFF / h^2 for cell
#: size h.  The total-variation lift of a one-cell-wide trench scales like
#: 1/(lambda*h), and the level threshold like h, so this keeps noiseless
#: facet lines below the cut at any resolution while isolated speckle (whose
#: basin is lifted from all sides) rises above it.
LAMBDA_CELL_COEFF = 0.007
DEFAULT_GRID = 256
DEFAULT_MARGIN_FRACTION = 0.05


@dataclass(frozen=True)
class DenoiseSpec:
    """Noise-filter configuration.

    method      -- none | box | gauss | tv
    knn         -- neighborhood size for box/gauss (>= 1)
    gauss_width -- Gaussian kernel width; None picks the mean KNN radius
    lam         -- ROF fidelity weight; None picks LAMBDA_CELL_COEFF / h^2
    tau         -- level-set threshold; None picks 1.5 cell diagonals (tv)
    grid_n      -- raster cells per axis (tv)
    max_iters   -- dual iteration cap (tv)
    step        -- dual step size, must stay in (0, 0.25]
    anisotropic -- use the separable TV discretization instead of isotropic
    """

    method: str = "none"
    knn: int = 8
    gauss_width: float | None = None
    lam: float | None = None
    tau: float | None = None
    grid_n: int = DEFAULT_GRID
    max_iters: int = 300
    step: float = 0.25
    anisotropic: bool = False

    def __post_init__(self):
        if self.method not in ("none", "box", "gauss", "tv"):
            raise ParameterError(f"unknown denoise method {self.method!r}")
        if self.method in ("box", "gauss") and self.knn < 1:
            raise ParameterError("knn must be >= 1")
        if self.gauss_width is not None and self.gauss_width <= 0:
            raise ParameterError("gauss_width must be > 0")
        if self.method == "tv":
            if self.lam is not None and self.lam <= 0:
                raise ParameterError("lambda must be > 0")
            if self.tau is not None and self.tau <= 0:
                raise ParameterError("tau must be > 0")
            if self.grid_n < 8:
                raise ParameterError("grid_n must be >= 8")
        if not (0 < self.step <= 0.25):
            raise ParameterError("step must lie in (0, 0.25]")


@dataclass(frozen=True)
class ScalarField:
    """Nonnegative values sampled at the centers of a square grid."""

    values: np.ndarray
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InputError("field values must form a square grid")
        if not np.all(np.isfinite(v)):
            raise InputError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return (self.xmax - self.xmin) / self.grid_n

    def cell_centers(self):
        """(n, n, 2) array of cell-center coordinates; [i, j] is (x_j, y_i)."""
        n, h = self.grid_n, self.h
        xs = self.xmin + (np.arange(n) + 0.5) * h
        ys = self.ymin + (np.arange(n) + 0.5) * h
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


def knn_smooth(group, cloud: PointCloud, spec: DenoiseSpec) -> PointCloud:
    """Replace each group member by the (weighted) mean of its K nearest
    members, self included.  Returns the smoothed members as a cloud."""
    ids = list(group.member_ids)
    M = cloud.points[ids]
    k = len(ids)
    if spec.knn >= k:
        raise ParameterError(f"knn={spec.knn} must be smaller than the group size {k}")
    diff = M[:, None, :] - M[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    order = np.argsort(dist, axis=1, kind="stable")[:, : spec.knn]
    neigh = M[order]  # (k, knn, dim)
    if spec.method == "box":
        out = neigh.mean(axis=1)
    elif spec.method == "gauss":
        nd = np.take_along_axis(dist, order, axis=1)
        width = spec.gauss_width
        if width is None:
            width = max(float(nd[:, -1].mean()), 1e-300)
        w = np.exp(-(nd**2) / (2.0 * width * width))
        out = (w[:, :, None] * neigh).sum(axis=1) / w.sum(axis=1)[:, None]
    else:
        raise ParameterError(f"knn_smooth expects method box or gauss, got {spec.method!r}")
    return PointCloud(points=out, source_index=cloud.source_index[ids])


def distance_field(points2d, grid_n: int, margin: float) -> ScalarField:
    """Exact Euclidean distance to the point set at every cell center of a
    square grid covering the bounding box expanded by ``margin``."""
    P = np.asarray(points2d, dtype=float).reshape(-1, 2)
    if P.shape[0] == 0:
        raise InputError("distance field needs at least one point")
    if margin < 0:
        raise ParameterError("margin must be >= 0")
    xmin, ymin = P.min(axis=0) - margin
    xmax, ymax = P.max(axis=0) + margin
    # keep cells square: widen the shorter side symmetrically
    side = max(xmax - xmin, ymax - ymin, 1e-12)
    cx, cy = (xmin + xmax) / 2.0, (ymin + ymax) / 2.0
    xmin, xmax = cx - side / 2.0, cx + side / 2.0
    ymin, ymax = cy - side / 2.0, cy + side / 2.0

    h = side / grid_n
    xs = xmin + (np.arange(grid_n) + 0.5) * h
    ys = ymin + (np.arange(grid_n) + 0.5) * h
    values = np.empty((grid_n, grid_n))
    # row blocks keep the (rows x cols x points) distance tensor small
    block = max(1, int(4e6 // max(P.shape[0] * grid_n, 1)))
    dx2 = (xs[None, :, None] - P[:, 0][None, None, :]) ** 2
    for r0 in range(0, grid_n, block):
        r1 = min(r0 + block, grid_n)
        dy2 = (ys[r0:r1, None, None] - P[:, 1][None, None, :]) ** 2
        values[r0:r1] = np.sqrt(dx2 + dy2).min(axis=2)
    return ScalarField(values=values, xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax)


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px, py):
    # negative adjoint of _grad: <grad u, p> == -<u, div p>
    out = np.zeros_like(px)
    out[:, :-1] += px[:, :-1]
    out[:, 1:] -= px[:, :-1]
    out[:-1, :] += py[:-1, :]
    out[1:, :] -= py[:-1, :]
    return out


def rof_energy(u, d, lam: float, anisotropic: bool = False) -> float:
    """TV(u) + lam/2 ||d - u||^2 with forward-difference total variation."""
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    gx, gy = _grad(u)
    if anisotropic:
        tv = float(np.abs(gx).sum() + np.abs(gy).sum())
    else:
        tv = float(np.sqrt(gx * gx + gy * gy).sum())
    return tv + 0.5 * lam * float(((d - u) ** 2).sum())


def chambolle_rof(
    d: ScalarField,
    lam: float,
    max_iters: int = 300,
    step: float = 0.25,
    tol: float = 1e-6,
    anisotropic: bool = False,
    energy_trace: list | None = None,
) -> ScalarField:
    """Minimize the ROF energy by the dual projection fixed point.

    Iterates p <- (p + step * G) / (1 + step * |G|) with
    G = grad(div p - lam * d), and u = d - div(p) / lam.  Stops when the
    max-norm change of u falls below ``tol`` or after ``max_iters``.  Passing
    ``energy_trace`` records the primal energy after every iteration.
    """
    if lam <= 0:
        raise ParameterError("lambda must be > 0")
    if not (0 < step <= 0.25):
        raise ParameterError("step must lie in (0, 0.25]")
    dv = np.asarray(d.values, dtype=float)
    px = np.zeros_like(dv)
    py = np.zeros_like(dv)
    u = dv.copy()
    for _ in range(max_iters):
        gx, gy = _grad(_div(px, py) - lam * dv)
        if anisotropic:
            px = (px + step * gx) / (1.0 + step * np.abs(gx))
            py = (py + step * gy) / (1.0 + step * np.abs(gy))
        else:
            mag = np.sqrt(gx * gx + gy * gy)
            px = (px + step * gx) / (1.0 + step * mag)
            py = (py + step * gy) / (1.0 + step * mag)
        u_new = dv - _div(px, py) / lam
        change = float(np.abs(u_new - u).max())
        u = u_new
        if energy_trace is not None:
            energy_trace.append(rof_energy(u, dv, lam, anisotropic))
        if change < tol:
            break
    return ScalarField(values=u, xmin=d.xmin, xmax=d.xmax, ymin=d.ymin, ymax=d.ymax)


def extract_level_set(u: ScalarField, tau: float) -> np.ndarray:
    """Cell centers of the sublevel set {u <= tau} as a (k, 2) array.

    A grid function rarely attains a value exactly, so the sublevel reading
    stands in for the level curve; the result may be empty.
    """
    if tau <= 0:
        raise ParameterError("tau must be > 0")
    centers = u.cell_centers()
    mask = u.values <= tau
    return centers[mask]


def tv_pipeline(cloud: PointCloud, spec: DenoiseSpec):
    """TV pipeline returning (cleaned cloud, cell size, level threshold)."""
    if cloud.dim != 3:
        raise UnsupportedDimensionError(
            f"TV denoising operates on the 2-D chart of 3-dimensional clouds, got dim={cloud.dim}"
        )
    if len(cloud) == 0:
        raise InputError("cannot denoise an empty cloud")
    chart = cloud.points[:, :2]
    extent = float((chart.max(axis=0) - chart.min(axis=0)).max())
    margin = DEFAULT_MARGIN_FRACTION * max(extent, 1e-12)
    d = distance_field(chart, spec.grid_n, margin)
    lam = spec.lam if spec.lam is not None else LAMBDA_CELL_COEFF / d.h**2
    u = chambolle_rof(d, lam, spec.max_iters, spec.step, anisotropic=spec.anisotropic)
    tau = spec.tau if spec.tau is not None else 1.5 * d.h * math.sqrt(2.0)
    pts2 = extract_level_set(u, tau)
    if pts2.shape[0] == 0:
        raise DenoiseTooAggressiveError(
            f"level set u <= {tau:g} is empty (field minimum {float(u.values.min()):g}); "
            "increase tau or lambda"
        )
    z = 1.0 - pts2[:, 0] - pts2[:, 1]
    pts3 = np.column_stack([pts2, z])
    cleaned = PointCloud(points=pts3, source_index=np.full(len(pts3), -1))
    return cleaned, d.h, tau


def tv_denoise_cloud(cloud: PointCloud, spec: DenoiseSpec) -> PointCloud:
    """Full TV pipeline for a 3-dimensional cloud on the plane x+y+z = 1.

    The z coordinate is dropped (z = 1-x-y on the chart), the distance field
    is denoised, and the cloud is resampled from the sublevel set, losing
    provenance indices.
    """
    cleaned, _, _ = tv_pipeline(cloud, spec)
    return cleaned
