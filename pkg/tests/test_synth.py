import math

import numpy as np
import pytest

from facetsep.errors import InputError, ParameterError
from facetsep.metrics import realized_snr
from facetsep.synth import (
    SourceSpec,
    add_awgn,
    gen_mixing,
    gen_sources,
    verify_condition,
)


def test_spec_validation():
    with pytest.raises(ParameterError):
        SourceSpec(n_sources=3, n_samples=5, mode="facet")  # too few samples
    with pytest.raises(ParameterError):
        SourceSpec(n_sources=1, n_samples=30, mode="facet")
    with pytest.raises(ParameterError):
        SourceSpec(n_sources=3, n_samples=30, mode="bogus")


def test_nna_sources_have_standalone_columns():
    spec = SourceSpec(n_sources=3, n_samples=200, mode="nna", seed=5)
    S = gen_sources(spec)
    assert S.shape == (3, 200)
    assert S.min() >= 0
    # three columns forming an identity block up to scale
    for i in range(3):
        pure = [
            j
            for j in range(200)
            if S[i, j] > 0 and np.delete(S[:, j], i).max() == 0.0
        ]
        assert pure, f"no stand-alone column for source {i}"
    assert verify_condition(S, "nna")


def test_facet_sources_zero_patterns():
    spec = SourceSpec(n_sources=3, n_samples=300, mode="facet", seed=5)
    S = gen_sources(spec)
    assert S.min() >= 0
    # each coordinate plane holds two columns with the {1,2} pattern up to scale
    for i in range(3):
        onplane = S[:, S[i] < 1e-12]
        assert onplane.shape[1] >= 2
        others = [k for k in range(3) if k != i]
        ratios = sorted(
            round(onplane[others[0], j] / onplane[others[1], j], 6)
            for j in range(onplane.shape[1])
        )
        assert 0.5 in ratios and 2.0 in ratios
    assert verify_condition(S, "facet")
    # no condition column is a stand-alone peak
    assert not verify_condition(S, "nna")


def test_verify_condition_trivial_cases():
    assert verify_condition(np.eye(3), "nna")
    assert not verify_condition(np.ones((3, 9)), "facet")
    # the two-column-per-plane integer pattern block
    block = np.array(
        [
            [1, 2, 0, 0, 1, 2],
            [2, 1, 1, 2, 0, 0],
            [0, 0, 2, 1, 2, 1],
        ],
        dtype=float,
    )
    assert verify_condition(block, "facet")


def test_generator_satisfies_own_condition_100_draws():
    for seed in range(100):
        mode = "nna" if seed % 2 else "facet"
        m = 3 + (seed % 2)
        spec = SourceSpec(n_sources=m, n_samples=25 * m, mode=mode, seed=seed)
        assert verify_condition(gen_sources(spec), mode), (mode, seed)


def test_gen_mixing_properties():
    for seed in range(20):
        A = gen_mixing(3, seed=seed)
        assert A.min() > 0
        assert np.allclose(A.sum(axis=0), 1.0)
        assert np.linalg.cond(A) <= 1e3
        assert np.linalg.svd(A, compute_uv=False)[-1] > 0
    assert np.array_equal(gen_mixing(4, seed=9), gen_mixing(4, seed=9))


def test_awgn_realized_snr():
    spec = SourceSpec(n_sources=3, n_samples=100_000, mode="facet", seed=2)
    X = gen_mixing(3, seed=1) @ gen_sources(spec)
    Xn = add_awgn(X, 50.0, seed=3)
    snr = realized_snr(X, Xn)
    assert 49.5 <= snr <= 50.5


def test_awgn_infinite_snr_is_identity():
    X = np.ones((3, 10))
    assert np.array_equal(add_awgn(X, math.inf, seed=0), X)


def test_awgn_zero_signal_rejected():
    with pytest.raises(InputError):
        add_awgn(np.zeros((3, 10)), 20.0, seed=0)


def test_awgn_seeds_differ_and_noise_mean_small():
    X = np.full((100, 100), 5.0)
    n1 = add_awgn(X, 20.0, seed=1) - X
    n2 = add_awgn(X, 20.0, seed=2) - X
    assert not np.array_equal(n1, n2)
    sigma = np.sqrt(np.sum(X * X) / (X.size * 100.0))
    assert abs(n1.mean()) <= 3 * sigma / math.sqrt(X.size)
