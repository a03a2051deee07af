"""The facet-identification pipeline.

Stages: clamp and filter the mixture columns, rescale them onto the plane
sum(x) = 1, build the convex hull with the origin prepended, group data
points to the nontrivial facets, optionally denoise the grouped points, fit a
through-origin hyperplane to each group, select the most populated pairwise
non-coplanar planes, intersect them into the mixing-matrix estimate, and
recover sources by nonnegative least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import denoise as _dn
from .datamodel import FcaParams, PointCloud, SeparationResult, as_matrix
from .errors import (
    AlgorithmError,
    AllColumnsFilteredError,
    DegenerateIntersectionError,
    InputError,
    InsufficientFacetsError,
    NonConicSolutionError,
    UnderdeterminedFacetError,
)
from .hull import MAX_DIM, Hull, classify_facets, quickhull
from .nnls import recover_sources


@dataclass
class Group:
    """Points attached to one nontrivial facet.

    ``member_ids`` index into the hull cloud (origin = index 0, never a
    member).  ``fitted_normal`` and ``fit_residual`` are filled in by the
    fitting stage.
    """

    facet_id: int
    member_ids: list
    fitted_normal: np.ndarray | None = None
    fit_residual: float | None = None


@dataclass(frozen=True)
class Hyperplane:
    """A unit normal through the origin, oriented toward the data centroid."""

    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise InputError("hyperplane normal must have unit length")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)


def preprocess(X, rho: float) -> PointCloud:
    """Clamp negatives to zero, drop columns with L2 norm below ``rho``, and
    rescale the survivors onto the plane sum(x) = 1.  Each point keeps its
    original column index."""
    X = as_matrix(X)
    if X.shape[0] < 2:
        raise InputError("need at least 2 mixture rows")
    X0 = np.maximum(X, 0.0)
    norms = np.linalg.norm(X0, axis=0)
    keep = np.where(norms >= rho)[0]
    if keep.size == 0:
        raise AllColumnsFilteredError(
            f"all {X.shape[1]} columns have norm < rho={rho:g}; try a smaller rho"
        )
    cols = X0[:, keep]
    pts = (cols / cols.sum(axis=0)).T
    return PointCloud(points=pts, source_index=keep)


def with_origin(cloud: PointCloud) -> PointCloud:
    """Prepend the origin (source index -1) as point 0 of the cloud."""
    pts = np.vstack([np.zeros((1, cloud.dim)), cloud.points])
    idx = np.concatenate([[-1], cloud.source_index])
    return PointCloud(points=pts, source_index=idx)


def group_points(cloud: PointCloud, h: Hull, eps: float, sigma: float) -> list:
    """One group per nontrivial facet: the facet's non-origin vertices plus
    every point within ``eps`` of its supporting plane and farther than
    ``sigma`` from every facet vertex.  Points may join several groups."""
    if eps <= 0 or sigma <= 0:
        raise InputError("eps and sigma must be > 0")
    if any(f.is_trivial is None for f in h.facets):
        raise InputError("hull facets are unclassified; run classify_facets first")
    P = cloud.points
    groups = []
    for fid, f in enumerate(h.facets):
        if f.is_trivial:
            continue
        vids = [v for v in f.vertex_ids if v != 0]
        plane_dist = np.abs(P @ f.outward_normal - f.offset)
        V = P[list(f.vertex_ids)]
        vert_dist = np.min(
            np.linalg.norm(P[:, None, :] - V[None, :, :], axis=2), axis=1
        )
        near = (plane_dist < eps) & (vert_dist > sigma)
        near[0] = False
        near[vids] = False
        members = vids + [int(j) for j in np.flatnonzero(near)]
        groups.append(Group(facet_id=fid, member_ids=members))
    return groups


def _fit_normal(M: np.ndarray):
    """Unit minimizer of sum((b.x)^2) over ||b|| = 1: the least right-singular
    direction of the stacked points.  Returns (normal, residual, ok)."""
    _, sv, Vt = np.linalg.svd(M, full_matrices=True)
    dim = M.shape[1]
    rank_needed = dim - 1
    sv_full = np.zeros(dim)
    sv_full[: sv.size] = sv
    ok = sv_full[rank_needed - 1] > 1e-9 * sv_full[0] if sv_full[0] > 0 else False
    normal = Vt[-1]
    residual = float(sv_full[-1] ** 2)
    return normal, residual, ok


def fit_hyperplane(g: Group, cloud: PointCloud) -> Hyperplane:
    """Fit the through-origin plane of a group by total least squares,
    oriented so the normal points toward the global data centroid."""
    m = cloud.dim
    if len(g.member_ids) < m - 1:
        raise UnderdeterminedFacetError(
            f"facet {g.facet_id}: {len(g.member_ids)} members, need >= {m - 1}"
        )
    M = cloud.points[g.member_ids]
    normal, _, ok = _fit_normal(M)
    if not ok:
        raise UnderdeterminedFacetError(
            f"facet {g.facet_id}: members span fewer than {m - 1} dimensions"
        )
    centroid = cloud.points.mean(axis=0)
    if normal @ centroid < 0:
        normal = -normal
    return Hyperplane(normal=normal)


def select_planes(groups: list, m: int, delta: float) -> list:
    """Greedy scan in decreasing cardinality (ties: smaller fit residual,
    then lower facet id); accept a plane iff its |inner product| with every
    accepted normal stays below ``delta``.  Stops at ``m`` accepted."""
    fitted = [g for g in groups if g.fitted_normal is not None]
    if len(fitted) < m:
        raise InsufficientFacetsError(
            f"only {len(fitted)} facet groups could be fitted, need {m}",
            accepted=len(fitted),
        )
    order = sorted(
        fitted, key=lambda g: (-len(g.member_ids), g.fit_residual, g.facet_id)
    )
    accepted = []
    for g in order:
        n = g.fitted_normal
        if all(abs(float(n @ h.normal)) < delta for h in accepted):
            accepted.append(Hyperplane(normal=n))
            if len(accepted) == m:
                return accepted
    raise InsufficientFacetsError(
        f"only {len(accepted)} planes passed the delta={delta:g} filter, need {m} "
        "(facet assumptions violated or thresholds mis-set)",
        accepted=len(accepted),
    )


#: Entries of the recovered vertices may fall slightly below zero from noise;
#: anything beyond this is treated as a genuinely non-conic solution.
CLAMP_TOL = 1e-6


def intersect_planes(planes: list) -> np.ndarray:
    """Intersect each set of m-1 plane normals into a cone edge, rescale it to
    the plane sum(x) = 1, and stack the edges as mixing-matrix columns."""
    m = len(planes)
    normals = np.array([h.normal for h in planes])
    if normals.shape[1] != m:
        raise InputError(f"need {normals.shape[1]} planes in R^{normals.shape[1]}, got {m}")
    A = np.zeros((m, m))
    for i in range(m):
        B = np.delete(normals, i, axis=0)
        _, sv, Vt = np.linalg.svd(B)
        if sv[-1] >= 1e-9 * sv[0]:
            # all m-1 singular values genuinely nonzero: 1-dim null space
            v = Vt[-1]
        else:
            raise DegenerateIntersectionError(
                f"planes excluding #{i} are numerically coplanar (null space dim > 1)"
            )
        total = float(v.sum())
        if abs(total) < 1e-12:
            raise DegenerateIntersectionError(
                f"edge {i} is parallel to the plane sum(x) = 1"
            )
        v = v / total
        low = v.min()
        if low < -CLAMP_TOL:
            raise NonConicSolutionError(
                f"edge {i} has entry {low:.3e} outside the nonnegative orthant"
            )
        v = np.maximum(v, 0.0)
        A[:, i] = v / v.sum()
    return A


def _run_steps(X, params: FcaParams, dspec):
    m = X.shape[0]
    step = "step 1 (preprocess)"
    try:
        cloud0 = preprocess(X, params.rho)
        step = "step 2 (convex hull)"
        cloud = with_origin(cloud0)
        h = classify_facets(quickhull(cloud), origin_id=0)
        step = "step 3 (grouping)"
        eps, sigma = params.eps, params.sigma
        groups = group_points(cloud, h, eps, sigma)

        if dspec is not None and dspec.method != "none":
            step = f"denoise ({dspec.method})"
            if dspec.method in ("box", "gauss"):
                cloud, groups = _smooth_groups(cloud, groups, dspec)
            else:
                cloud, h, groups, eps, sigma = _tv_regroup(cloud, groups, params, dspec)

        step = "step 4 (plane fitting/selection)"
        groups = _refine_groups(cloud, h, groups, eps, sigma)
        planes = select_planes(groups, m, params.delta)

        step = "step 5 (intersection)"
        A_hat = intersect_planes(planes)
    except AlgorithmError as e:
        e.step = step
        raise
    return A_hat, groups


_TRIM_ROUNDS = 2
_TRIM_MAD_FACTOR = 3.0

#: A two-cluster split of the signed distances must explain at least this
#: much of the variance (and each side must be substantial) before a group
#: is treated as a blend of two facets.
_SPLIT_GAIN = 0.15
_SPLIT_MIN_FRACTION = 0.25

#: Quality gate after refinement: a genuine facet's members hug its plane
#: (rms well below the tube half-width), while a plane cutting across two
#: facets fills its whole tube roughly uniformly, rms ~ 0.58 * eps.  Groups
#: above the gate are discarded rather than offered to selection.
_RMS_GATE = 0.45

#: Flatness gate (m >= 4 only): a facet's members span the full m-1 in-plane
#: dimensions, while consecutive samples of a smooth spectrum trace a curve
#: that stays near an (m-2)-dimensional subspace through the origin and can
#: fake an arbitrarily oriented hyperplane.  Groups whose (m-1)-th singular
#: value falls below this fraction of the largest are discarded.  In m = 3
#: the test would measure legitimate segment length (a 1-D arc spans the
#: same planes a facet segment does), so it stays off there; tight tubes
#: keep m = 3 arcs small enough to lose on cardinality.
_FLAT_GATE = 0.02


def _split_bimodal(s: np.ndarray) -> np.ndarray | None:
    """Detect a two-cluster structure in signed plane distances.

    Returns a keep-mask for the dominant cluster, or None when the values
    look unimodal.  A tube that straddles two facets of the cone holds two
    internally tight clusters that no symmetric trim can separate.
    """
    n = s.size
    if n < 8:
        return None
    order = np.argsort(s, kind="stable")
    ss = s[order]
    total = float(np.sum((ss - ss.mean()) ** 2))
    if total <= 0:
        return None
    # best split over sorted prefix/suffix, O(n) via cumulative sums
    csum = np.cumsum(ss)
    csq = np.cumsum(ss * ss)
    best_sse, best_k = math.inf, None
    lo = max(int(math.ceil(n * _SPLIT_MIN_FRACTION)), 2)
    for k in range(lo, n - lo + 1):
        left = csq[k - 1] - csum[k - 1] ** 2 / k
        right = (csq[-1] - csq[k - 1]) - (csum[-1] - csum[k - 1]) ** 2 / (n - k)
        sse = left + right
        if sse < best_sse:
            best_sse, best_k = sse, k
    if best_k is None or best_sse > _SPLIT_GAIN * total:
        return None
    keep = np.zeros(n, dtype=bool)
    half = order[:best_k] if best_k >= n - best_k else order[best_k:]
    keep[half] = True
    return keep


def _fit_group(g: Group, cloud: PointCloud) -> bool:
    """Fill the group's fitted normal and residual; False when rank-deficient.

    After the first total-least-squares fit the members are cleaned in two
    ways before refitting: a bimodal set of signed distances is cut down to
    its dominant cluster (a tube straddling two facets), then values outside
    a median +/- 3 MAD band are dropped (one-sided contamination by interior
    points).  Clean groups have zero spread and pass through untouched.
    """
    m = cloud.dim
    if len(g.member_ids) < m - 1:
        return False
    M = cloud.points[g.member_ids]
    normal, residual, ok = _fit_normal(M)
    if not ok:
        return False
    scale = float(np.abs(M).max())
    kept = M
    split = _split_bimodal(kept @ normal)
    if split is not None and split.sum() >= m - 1:
        cand, cand_resid, cand_ok = _fit_normal(kept[split])
        if cand_ok:
            kept = kept[split]
            normal, residual = cand, cand_resid
    for _ in range(_TRIM_ROUNDS):
        s = kept @ normal
        med = float(np.median(s))
        mad = float(np.median(np.abs(s - med)))
        band = max(_TRIM_MAD_FACTOR * mad, 1e-12 * scale)
        keep = np.abs(s - med) <= band
        if keep.all() or keep.sum() < max(m - 1, len(s) // 2):
            break
        cand, cand_resid, cand_ok = _fit_normal(kept[keep])
        if not cand_ok:
            break
        kept = kept[keep]
        normal, residual = cand, cand_resid
    if normal @ cloud.points.mean(axis=0) < 0:
        normal = -normal
    g.fitted_normal = normal
    g.fit_residual = residual
    return True


_REFINE_PASSES = 12

#: Tube annealing schedule: early passes use a widened tube so a badly
#: tilted seed plane can still reach its facet's point mass, later passes
#: run at eps itself so membership keeps the grouping contract.  The cap
#: keeps wide tubes from spanning the whole simplex at high noise, where a
#: tube that fat would drag every group onto one global blend plane.
_REFINE_WIDEN = (2.5, 1.6)
_REFINE_TUBE_CAP = 0.12

#: Neighborhood size for patch seeding.
_PATCH_K = 8


def _seed_normal(cloud, h, g, eps) -> np.ndarray | None:
    """Best starting plane for refining a group.

    A noisy hull facet is a sliver whose plane can point far away from the
    facet of the data cone it samples, so the tube around it finds nothing.
    Local patches (nearest neighbors of each facet vertex) give much better
    anchored planes; the candidate whose eps-tube holds the most points wins.
    For noiseless data the facet plane itself is exact and always wins.
    """
    P = cloud.points
    candidates = []
    if g.fitted_normal is not None:
        candidates.append(g.fitted_normal)
    k = min(max(2 * cloud.dim, _PATCH_K), len(P) - 2)
    for v in h.facets[g.facet_id].vertex_ids:
        if v == 0:
            continue
        d = np.linalg.norm(P - P[v], axis=1)
        d[0] = np.inf
        idx = np.argsort(d, kind="stable")[:k]
        normal, _, ok = _fit_normal(P[idx])
        if ok:
            candidates.append(normal)
    if not candidates:
        return None
    best, best_count = None, -1
    for n in candidates:
        count = int(np.count_nonzero(np.abs(P[1:] @ n) < eps))
        if count > best_count:
            best, best_count = n, count
    if best @ P.mean(axis=0) < 0:
        best = -best
    return best


def _refine_groups(cloud, h, groups, eps, sigma) -> list:
    """Fit each group, then iterate: re-collect the tube around the fitted
    plane and refit.

    Noise splits a facet of the data cone into many small hull facets whose
    tilted tubes each catch only part of the facet's points.  Re-anchoring
    the tube on the fitted plane lets every fragment converge to the full
    point set of its facet, after which the coplanarity filter in selection
    collapses the duplicates.  A noiseless group fits its plane exactly, so
    the re-collected tube reproduces the group and nothing changes.
    """
    P = cloud.points
    out = []
    for g in groups:
        if not _fit_group(g, cloud):
            continue
        # an exact fit needs no better anchor, and reseeding could trade it
        # for a denser spurious structure (e.g. a peak-shoulder arc)
        own_rms = math.sqrt(g.fit_residual / len(g.member_ids))
        if own_rms > 1e-9:
            seed = _seed_normal(cloud, h, g, eps)
            if seed is not None:
                g.fitted_normal = seed
        vids = sorted(v for v in h.facets[g.facet_id].vertex_ids if v != 0)
        V = P[vids]
        vert_dist = np.min(np.linalg.norm(P[:, None, :] - V[None, :, :], axis=2), axis=1)
        for t in range(_REFINE_PASSES):
            widen = _REFINE_WIDEN[t] if t < len(_REFINE_WIDEN) else 1.0
            tube = min(eps * widen, max(_REFINE_TUBE_CAP, eps))
            plane_dist = np.abs(P @ g.fitted_normal)
            near = (plane_dist < tube) & (vert_dist > sigma)
            near[0] = False
            members = sorted(set(int(i) for i in np.flatnonzero(near)) | set(vids))
            if members == g.member_ids and widen == 1.0:
                break
            cand = Group(facet_id=g.facet_id, member_ids=members)
            if not _fit_group(cand, cloud):
                break
            g = cand
        M = P[g.member_ids]
        s = M @ g.fitted_normal
        if math.sqrt(float(np.mean(s * s))) > _RMS_GATE * eps:
            continue
        sv = np.linalg.svd(M, compute_uv=False)
        if cloud.dim >= 4 and sv[cloud.dim - 2] < _FLAT_GATE * sv[0]:
            continue
        out.append(g)
    return out


def _smooth_groups(cloud, groups, dspec):
    """KNN-smooth each group's member coordinates in place (fitting only)."""
    pts = cloud.points.copy()
    for g in groups:
        if len(g.member_ids) <= dspec.knn:
            continue
        smoothed = _dn.knn_smooth(g, cloud, dspec)
        pts[g.member_ids] = smoothed.points
    # groups keep their ids; only coordinates move
    new_cloud = PointCloud(points=pts, source_index=cloud.source_index)
    return new_cloud, groups


def _tv_regroup(cloud, groups, params: FcaParams, dspec):
    """Replace the grouped points by their TV-cleaned resampling, then redo
    the hull and grouping on the cleaned cloud."""
    ids = sorted({j for g in groups for j in g.member_ids})
    sub = PointCloud(points=cloud.points[ids], source_index=np.arange(len(ids)))
    cleaned, cell, tau = _dn.tv_pipeline(sub, dspec)
    cloud2 = with_origin(cleaned)
    h2 = classify_facets(quickhull(cloud2), origin_id=0)
    # the cleaned bands are as wide as the original noise scatter (the level
    # set dilates each surviving point by tau), so the tube keeps the noise
    # scale, floored at a few raster cells for near-noiseless inputs
    eps2 = max(3.0 * cell, 1.6 * tau, 0.8 * params.eps)
    sigma2 = min(params.sigma, 0.5 * cell) if cell > 0 else params.sigma
    groups2 = group_points(cloud2, h2, eps2, sigma2)
    return cloud2, h2, groups2, eps2, sigma2


def run_fca(X, params: FcaParams, denoise=None) -> SeparationResult:
    """Run the full pipeline and recover sources for every original column.

    ``denoise`` is an optional :class:`facetsep.denoise.DenoiseSpec` applied
    after the grouping stage.  Errors carry the failing step in ``.step``.
    """
    X = as_matrix(X)
    m = X.shape[0]
    if m > MAX_DIM:
        raise InputError(f"at most {MAX_DIM} mixtures supported, got {m}")
    A_hat, groups = _run_steps(X, params, denoise)

    try:
        X0 = np.maximum(X, 0.0)
        S_hat = recover_sources(A_hat, X0)
    except AlgorithmError as e:
        e.step = "step 6 (source recovery)"
        raise
    residual = float(np.linalg.norm(X0 - A_hat @ S_hat))
    cards = sorted((len(g.member_ids) for g in groups), reverse=True)
    return SeparationResult(
        A_hat=A_hat,
        S_hat=np.maximum(S_hat, 0.0),
        selected_plane_count=m,
        group_cardinalities=tuple(cards),
        residual=residual,
    )
