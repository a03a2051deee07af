import math

import numpy as np
import pytest

from facetsep.datamodel import PointCloud
from facetsep.denoise import (
    DenoiseSpec,
    chambolle_rof,
    distance_field,
    extract_level_set,
    knn_smooth,
    rof_energy,
    tv_denoise_cloud,
)
from facetsep.errors import (
    DenoiseTooAggressiveError,
    ParameterError,
    UnsupportedDimensionError,
)
from facetsep.fca import Group


def cloud_of(points):
    pts = np.asarray(points, dtype=float)
    return PointCloud(points=pts, source_index=np.arange(len(pts)))


def group_of(cloud):
    return Group(facet_id=0, member_ids=list(range(len(cloud))))


# ---------------------------------------------------------------- knn smooth

def test_knn_one_is_identity():
    rng = np.random.default_rng(1)
    c = cloud_of(rng.random((10, 3)))
    out = knn_smooth(group_of(c), c, DenoiseSpec(method="box", knn=1))
    assert np.allclose(out.points, c.points)


def test_box_smoothing_shrinks_perpendicular_spread():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 1, 60)
    pts = np.column_stack([t, np.zeros(60), np.zeros(60)])
    pts[:, 1] += 0.01 * rng.standard_normal(60)
    c = cloud_of(pts)
    out = knn_smooth(group_of(c), c, DenoiseSpec(method="box", knn=5))
    assert out.points[:, 1].std() < pts[:, 1].std()
    assert len(out) == len(c)


def test_box_preserves_centroid_when_knn_is_everything():
    rng = np.random.default_rng(3)
    c = cloud_of(rng.random((12, 3)))
    out = knn_smooth(group_of(c), c, DenoiseSpec(method="box", knn=11))
    # every output point averages most of the cloud; centroid barely moves
    assert np.linalg.norm(out.points.mean(axis=0) - c.points.mean(axis=0)) < 0.05


def test_gauss_wide_width_approaches_box():
    rng = np.random.default_rng(4)
    c = cloud_of(rng.random((15, 3)))
    box = knn_smooth(group_of(c), c, DenoiseSpec(method="box", knn=6))
    gauss = knn_smooth(
        group_of(c), c, DenoiseSpec(method="gauss", knn=6, gauss_width=1e6)
    )
    assert np.allclose(gauss.points, box.points, atol=1e-8)


def test_knn_too_large_rejected():
    c = cloud_of(np.random.default_rng(5).random((4, 3)))
    with pytest.raises(ParameterError):
        knn_smooth(group_of(c), c, DenoiseSpec(method="box", knn=4))


# ------------------------------------------------------------ distance field

def test_distance_field_single_point():
    d = distance_field(np.array([[0.0, 0.0]]), grid_n=32, margin=1.0)
    centers = d.cell_centers()
    expect = np.linalg.norm(centers, axis=2)
    assert np.all(np.abs(d.values - expect) <= 1e-12)


def test_distance_field_circle():
    theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    d = distance_field(pts, grid_n=64, margin=0.3)
    centers = d.cell_centers()
    expect = np.abs(np.linalg.norm(centers, axis=2) - 1.0)
    assert np.abs(d.values - expect).max() < 5e-3  # circle sampled discretely


def test_distance_field_zero_at_cloud_points():
    # bounding box [0,1]^2 at grid 2 puts cell centers at 0.25 and 0.75
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.25, 0.25]])
    d = distance_field(pts, grid_n=2, margin=0.0)
    assert d.values[0, 0] == 0.0


def test_distance_field_lipschitz():
    rng = np.random.default_rng(6)
    d = distance_field(rng.random((20, 2)), grid_n=48, margin=0.1)
    h = d.h
    dx = np.abs(np.diff(d.values, axis=1))
    dy = np.abs(np.diff(d.values, axis=0))
    assert dx.max() <= h + 1e-12
    assert dy.max() <= h + 1e-12


# ------------------------------------------------------------- chambolle ROF

def field_of(values):
    v = np.asarray(values, dtype=float)
    return distance_field(np.array([[0.5, 0.5]]), grid_n=v.shape[0], margin=0.5), v


def test_constant_field_is_exact_fixed_point():
    base, _ = field_of(np.zeros((16, 16)))
    const = type(base)(
        values=np.full((16, 16), 3.7), xmin=0, xmax=1, ymin=0, ymax=1
    )
    u = chambolle_rof(const, lam=5.0, max_iters=50)
    assert np.array_equal(u.values, const.values)


def test_huge_lambda_returns_input():
    rng = np.random.default_rng(7)
    d = distance_field(rng.random((15, 2)), grid_n=32, margin=0.1)
    u = chambolle_rof(d, lam=1e8, max_iters=60)
    assert np.abs(u.values - d.values).max() < 1e-4


def test_energy_monotone_nonincreasing():
    rng = np.random.default_rng(8)
    for trial in range(3):
        d = distance_field(rng.random((10, 2)), grid_n=64, margin=0.2)
        trace = []
        chambolle_rof(d, lam=30.0, max_iters=80, energy_trace=trace)
        arr = np.array(trace)
        assert np.all(np.diff(arr) <= 1e-10 * arr[0])


def test_energy_not_above_input_energy():
    rng = np.random.default_rng(9)
    d = distance_field(rng.random((12, 2)), grid_n=32, margin=0.2)
    u = chambolle_rof(d, lam=25.0, max_iters=200)
    assert rof_energy(u.values, d.values, 25.0) <= rof_energy(d.values, d.values, 25.0)


def primal_descent_oracle(d, lam, iters=60000, lr=2e-3, eps=1e-7):
    """Smoothed-TV gradient descent run to tight tolerance."""
    u = d.copy()
    for _ in range(iters):
        gx = np.zeros_like(u)
        gy = np.zeros_like(u)
        gx[:, :-1] = u[:, 1:] - u[:, :-1]
        gy[:-1, :] = u[1:, :] - u[:-1, :]
        mag = np.sqrt(gx * gx + gy * gy + eps * eps)
        px, py = gx / mag, gy / mag
        div = np.zeros_like(u)
        div[:, :-1] -= px[:, :-1]
        div[:, 1:] += px[:, :-1]
        div[:-1, :] -= py[:-1, :]
        div[1:, :] += py[:-1, :]
        grad = -div + lam * (u - d)
        u -= lr * grad
    return u


def test_energy_matches_primal_descent_oracle():
    rng = np.random.default_rng(10)
    d = distance_field(rng.random((8, 2)), grid_n=32, margin=0.2)
    lam = 40.0
    u = chambolle_rof(d, lam, max_iters=3000, tol=1e-12)
    ours = rof_energy(u.values, d.values, lam)
    oracle_u = primal_descent_oracle(d.values, lam)
    oracle = rof_energy(oracle_u, d.values, lam)
    assert ours <= oracle * 1.005


def test_anisotropic_variant_runs_and_descends():
    rng = np.random.default_rng(11)
    d = distance_field(rng.random((10, 2)), grid_n=24, margin=0.2)
    u = chambolle_rof(d, lam=20.0, max_iters=150, anisotropic=True)
    assert rof_energy(u.values, d.values, 20.0, anisotropic=True) <= rof_energy(
        d.values, d.values, 20.0, anisotropic=True
    )


# ----------------------------------------------------------------- level set

def test_level_set_of_segment_field():
    t = np.linspace(0.2, 0.8, 200)
    pts = np.column_stack([t, np.full_like(t, 0.5)])
    d = distance_field(pts, grid_n=64, margin=0.1)
    tau = 2.0 * d.h
    got = extract_level_set(d, tau)
    assert got.shape[0] > 0
    dist_to_line = np.abs(got[:, 1] - 0.5)
    assert dist_to_line.max() <= tau + d.h * math.sqrt(2.0)


def test_level_set_below_minimum_empty():
    rng = np.random.default_rng(12)
    d = distance_field(rng.random((5, 2)) + 5.0, grid_n=16, margin=0.0)
    shifted = type(d)(values=d.values + 1.0, xmin=d.xmin, xmax=d.xmax, ymin=d.ymin, ymax=d.ymax)
    assert extract_level_set(shifted, 0.5).shape[0] == 0


# ------------------------------------------------------------------ pipeline

def facet_line_cloud(n=400, seed=0, jitter=0.0):
    """Points on the two legs of the simplex triangle boundary."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.05, 0.95, n)
    pts = np.zeros((n, 3))
    half = n // 2
    pts[:half, 0] = t[:half]          # y = 0 edge: (x, 0, 1-x)
    pts[half:, 1] = t[half:]          # x = 0 edge: (0, y, 1-y)
    pts[:, 2] = 1.0 - pts[:, 0] - pts[:, 1]
    if jitter:
        pts[:, :2] += jitter * rng.standard_normal((n, 2))
        pts[:, 2] = 1.0 - pts[:, 0] - pts[:, 1]
    return PointCloud(points=pts, source_index=np.arange(n))


def test_tv_noiseless_points_stay_near_lines():
    cloud = facet_line_cloud()
    spec = DenoiseSpec(method="tv", grid_n=128)
    out = tv_denoise_cloud(cloud, spec)
    assert len(out) > 0
    assert np.all(out.source_index == -1)
    # every output point lies near one of the two input lines
    d_line = np.minimum(np.abs(out.points[:, 0]), np.abs(out.points[:, 1]))
    side = 1.1 / 128
    assert d_line.max() <= 3.0 * side * math.sqrt(2.0)


def test_tv_removes_isolated_noise_keeps_lines():
    cloud = facet_line_cloud(jitter=0.003)
    pts = np.vstack([cloud.points, [[0.5, 0.45, 0.05]]])  # isolated speckle
    noisy = PointCloud(points=pts, source_index=np.arange(len(pts)))
    out = tv_denoise_cloud(noisy, DenoiseSpec(method="tv", grid_n=128))
    d_speckle = np.linalg.norm(out.points[:, :2] - [0.5, 0.45], axis=1)
    assert d_speckle.min() > 0.02  # speckle basin lifted above the cut
    d_line = np.minimum(np.abs(out.points[:, 0]), np.abs(out.points[:, 1]))
    assert np.median(d_line) < 0.02  # lines survive


def test_tv_resolution_stability():
    cloud = facet_line_cloud()
    coarse = tv_denoise_cloud(cloud, DenoiseSpec(method="tv", grid_n=64))
    fine = tv_denoise_cloud(cloud, DenoiseSpec(method="tv", grid_n=128))
    cell_fine = 1.1 / 128
    # every fine point is near some coarse point
    D = np.linalg.norm(
        fine.points[:, None, :2] - coarse.points[None, :, :2], axis=2
    )
    assert D.min(axis=1).max() <= 2.5 * (1.1 / 64) + cell_fine


def test_tv_rejects_wrong_dimension():
    c = PointCloud(points=np.random.default_rng(0).random((10, 4)), source_index=np.arange(10))
    with pytest.raises(UnsupportedDimensionError):
        tv_denoise_cloud(c, DenoiseSpec(method="tv"))


def test_tv_empty_level_set_reported():
    cloud = facet_line_cloud(n=40)
    with pytest.raises(DenoiseTooAggressiveError):
        tv_denoise_cloud(cloud, DenoiseSpec(method="tv", grid_n=64, lam=0.05, tau=1e-9))


def test_spec_validation():
    with pytest.raises(ParameterError):
        DenoiseSpec(method="fancy")
    with pytest.raises(ParameterError):
        DenoiseSpec(method="box", knn=0)
    with pytest.raises(ParameterError):
        DenoiseSpec(method="tv", lam=-1.0)
    with pytest.raises(ParameterError):
        DenoiseSpec(method="tv", step=0.3)
