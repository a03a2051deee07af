"""Convex hulls in R^m (m <= 6) via the quickhull incremental algorithm.

The implementation keeps every facet simplicial (exactly ``dim`` vertices).
Coplanar degeneracies, which are the normal case for conic data, are handled
with an interior tolerance: a point within ``1e-9 * scale`` of a facet plane
is treated as not outside, so it never becomes a vertex and never spawns a
sliver facet.  Such points are recollected later by the grouping stage, which
is why the hull itself does not merge coplanar simplices.

A facet is *nontrivial* when the origin is one of its vertices: those facets
bound the data cone.  The remaining facets cover the far boundary near the
plane sum(x) = 1 and are *trivial*.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datamodel import PointCloud
from .errors import DegenerateInputError, GeometryError, InputError

MAX_DIM = 6

#: Relative tolerance for "point lies on / inside a facet plane".
INSIDE_RTOL = 1e-9


@dataclass(frozen=True)
class Facet:
    """A simplicial hull facet: vertex ids, supporting plane, classification.

    The plane is {x : outward_normal . x = offset} with the outward normal
    pointing away from the hull interior.  ``is_trivial`` is None until
    :func:`classify_facets` has run.
    """

    vertex_ids: tuple
    outward_normal: np.ndarray
    offset: float
    is_trivial: bool | None = None


@dataclass(frozen=True)
class Hull:
    dim: int
    vertices: tuple
    facets: tuple


class _MutableFacet:
    """Construction-time facet record with neighbor links and outside set."""

    __slots__ = ("verts", "normal", "offset", "neighbors", "out_idx", "out_dist", "alive")

    def __init__(self, verts, normal, offset):
        self.verts = verts  # tuple of point ids, len == dim
        self.normal = normal
        self.offset = offset
        self.neighbors = [None] * len(verts)  # slot k: across ridge without verts[k]
        self.out_idx = np.empty(0, dtype=int)
        self.out_dist = np.empty(0)
        self.alive = True


def _plane_through(points: np.ndarray, interior: np.ndarray, scale: float):
    """Unit normal and offset of the hyperplane through ``points`` (d x d),
    oriented so the interior point lies strictly below."""
    base = points[0]
    rows = points[1:] - base
    _, sv, Vt = np.linalg.svd(rows)
    if sv.size == 0 or sv[-1] <= 1e-12 * max(sv[0], scale):
        raise GeometryError("degenerate facet: vertices are affinely dependent")
    normal = Vt[-1]
    offset = float(normal @ base)
    side = normal @ interior - offset
    if abs(side) <= 1e-12 * max(1.0, scale):
        raise GeometryError("cannot orient facet: interior point lies on its plane")
    if side > 0:
        normal, offset = -normal, -offset
    return normal, offset


def _initial_simplex(pts: np.ndarray, tol: float):
    """Greedily pick d+1 affinely independent points with large spread."""
    n, d = pts.shape
    ranges = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(ranges))
    i0 = int(np.argmin(pts[:, axis]))
    i1 = int(np.argmax(pts[:, axis]))
    if i0 == i1 or np.linalg.norm(pts[i1] - pts[i0]) <= tol:
        raise DegenerateInputError("all points coincide (affine rank 0)", affine_rank=0)
    chosen = [i0, i1]
    while len(chosen) < d + 1:
        base = pts[chosen[0]]
        B = (pts[chosen[1:]] - base).T  # d x k
        Q, _ = np.linalg.qr(B)
        diff = pts - base
        resid = diff - (diff @ Q) @ Q.T
        dist = np.linalg.norm(resid, axis=1)
        dist[chosen] = -1.0
        j = int(np.argmax(dist))
        if dist[j] <= tol:
            rank = len(chosen) - 1
            raise DegenerateInputError(
                f"points span only an affine subspace of dimension {rank} "
                f"(need {d} for a {d}-dimensional hull)",
                affine_rank=rank,
            )
        chosen.append(j)
    return chosen


def _partition(points: np.ndarray, cand_idx: np.ndarray, facets, tol: float):
    """First-fit assignment of candidate points to facet outside sets."""
    if cand_idx.size == 0 or not facets:
        return
    P = points[cand_idx]
    dists = np.array([P @ f.normal - f.offset for f in facets])  # F x N
    above = dists > tol
    has = above.any(axis=0)
    first = above.argmax(axis=0)
    for fi, f in enumerate(facets):
        mask = has & (first == fi)
        f.out_idx = cand_idx[mask]
        f.out_dist = dists[fi, mask]


def quickhull(cloud: PointCloud) -> Hull:
    """Convex hull of the cloud; simplicial facets, deterministic for a fixed
    input order.  Raises :class:`DegenerateInputError` when the points span
    fewer than ``dim`` affine dimensions."""
    pts = np.asarray(cloud.points, dtype=float)
    n, d = pts.shape
    if d < 2 or d > MAX_DIM:
        raise InputError(f"hull dimension must be in [2, {MAX_DIM}], got {d}")
    if n < d + 1:
        raise DegenerateInputError(
            f"need at least {d + 1} points, got {n}", affine_rank=min(n - 1, d)
        )
    scale = float(np.abs(pts).max())
    scale = max(scale, 1e-300)
    tol = INSIDE_RTOL * scale

    chosen = _initial_simplex(pts, tol)
    interior = pts[chosen].mean(axis=0)

    # the d+1 leave-one-out facets of the initial simplex
    facets = []
    for k in range(d + 1):
        verts = tuple(chosen[j] for j in range(d + 1) if j != k)
        normal, offset = _plane_through(pts[list(verts)], interior, scale)
        facets.append(_MutableFacet(verts, normal, offset))
    # ridge between leave-one-out facets a and b omits chosen[a] and chosen[b]
    for a in range(d + 1):
        for b in range(a + 1, d + 1):
            fa, fb = facets[a], facets[b]
            fa.neighbors[fa.verts.index(chosen[b])] = fb
            fb.neighbors[fb.verts.index(chosen[a])] = fa

    rest = np.array([i for i in range(n) if i not in set(chosen)], dtype=int)
    _partition(pts, rest, facets, tol)

    pending = [f for f in facets if f.out_idx.size]
    all_facets = list(facets)
    while pending:
        f = pending.pop()
        if not f.alive or f.out_idx.size == 0:
            continue
        apex = int(f.out_idx[np.argmax(f.out_dist)])

        # breadth-first search for the facets visible from the apex
        visible = [f]
        seen = {id(f)}
        horizon = []  # (ridge verts, surviving neighbor)
        queue = [f]
        while queue:
            g = queue.pop(0)
            for k, nb in enumerate(g.neighbors):
                ridge = tuple(v for i, v in enumerate(g.verts) if i != k)
                if nb is None:
                    raise GeometryError("hull adjacency corrupted")
                if id(nb) in seen:
                    continue
                if pts[apex] @ nb.normal - nb.offset > tol:
                    seen.add(id(nb))
                    visible.append(nb)
                    queue.append(nb)
                else:
                    horizon.append((ridge, nb))

        # build the cone of new facets from the horizon to the apex
        new_facets = []
        half_ridge = {}  # frozenset(sub-ridge + apex) -> (facet, slot)
        for ridge, nb in horizon:
            verts = ridge + (apex,)
            normal, offset = _plane_through(pts[list(verts)], interior, scale)
            nf = _MutableFacet(verts, normal, offset)
            nf.neighbors[len(verts) - 1] = nb
            # rewire the survivor: its slot across this ridge pointed at a
            # visible facet, now it points at nf
            slot = next(i for i, v in enumerate(nb.verts) if v not in ridge)
            nb.neighbors[slot] = nf
            for i, u in enumerate(ridge):
                key = frozenset(verts) - {u}
                if key in half_ridge:
                    of, oslot = half_ridge.pop(key)
                    nf.neighbors[i] = of
                    of.neighbors[oslot] = nf
                else:
                    half_ridge[key] = (nf, i)
            new_facets.append(nf)
        if half_ridge:
            raise GeometryError("open horizon: hull adjacency corrupted")

        orphans = np.unique(np.concatenate([g.out_idx for g in visible]))
        orphans = orphans[orphans != apex]
        for g in visible:
            g.alive = False
            g.out_idx = np.empty(0, dtype=int)
            g.out_dist = np.empty(0)
        _partition(pts, orphans, new_facets, tol)
        all_facets.extend(new_facets)
        pending.extend(nf for nf in new_facets if nf.out_idx.size)

    final = [g for g in all_facets if g.alive]
    # verify the hull invariant: every input point inside every facet plane
    worst = 0.0
    for g in final:
        worst = max(worst, float((pts @ g.normal - g.offset).max()))
    if worst > tol * 1.001:
        raise GeometryError(f"hull construction failed: point {worst:.3e} outside a facet")

    vertices = sorted({v for g in final for v in g.verts})
    facets_out = tuple(
        Facet(tuple(sorted(g.verts)), g.normal, g.offset) for g in final
    )
    return Hull(dim=d, vertices=tuple(vertices), facets=facets_out)


def classify_facets(h: Hull, origin_id: int) -> Hull:
    """Mark facets containing ``origin_id`` as nontrivial, all others trivial.

    The origin must be a hull vertex; if a rescaled data column pushed it
    inside the hull, the data is not conic and a :class:`GeometryError`
    is raised.
    """
    if origin_id not in h.vertices:
        raise GeometryError(
            "origin is not a hull vertex: data is not conic "
            "(some rescaled column has negative coordinates beyond tolerance)"
        )
    facets = tuple(
        replace(f, is_trivial=origin_id not in f.vertex_ids) for f in h.facets
    )
    nontrivial = sum(1 for f in facets if not f.is_trivial)
    if nontrivial < h.dim:
        raise GeometryError(
            f"only {nontrivial} nontrivial facets, expected at least {h.dim}"
        )
    return Hull(dim=h.dim, vertices=h.vertices, facets=facets)


def point_facet_distance(x, f: Facet) -> float:
    """Perpendicular distance from ``x`` to the facet's supporting hyperplane."""
    x = np.asarray(x, dtype=float)
    return float(abs(x @ f.outward_normal - f.offset))


def point_vertexset_distance(x, f: Facet, cloud: PointCloud) -> float:
    """Euclidean distance from ``x`` to the nearest vertex of the facet."""
    x = np.asarray(x, dtype=float)
    V = cloud.points[list(f.vertex_ids)]
    return float(np.min(np.linalg.norm(V - x, axis=1)))
