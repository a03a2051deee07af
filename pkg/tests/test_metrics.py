import math

import numpy as np
import pytest

from facetsep.metrics import (
    ConditioningError,
    comon_index,
    match_columns,
    realized_snr,
)

# reference mixing matrices from a published three- and four-source
# separation benchmark, printed to four decimals
MIX3_TRUE = np.array(
    [
        [0.0769, 0.4615, 0.3571],
        [0.3846, 0.4615, 0.0714],
        [0.5385, 0.0769, 0.5714],
    ]
)
MIX3_EXACT = np.array(
    [
        [0.4615, 0.3571, 0.0769],
        [0.4615, 0.0714, 0.3846],
        [0.0769, 0.5714, 0.5385],
    ]
)
MIX3_NOISY = np.array(
    [
        [0.4615, 0.3571, 0.0769],
        [0.4565, 0.0729, 0.3700],
        [0.0823, 0.5765, 0.5106],
    ]
)
MIX4_TRUE = np.array(
    [
        [0.1923, 0.2500, 0.2632, 0.1000],
        [0.1923, 0.2500, 0.2105, 0.2000],
        [0.2692, 0.3750, 0.4211, 0.3000],
        [0.3462, 0.1250, 0.1053, 0.4000],
    ]
)
MIX4_EST = np.array(
    [
        [0.1000, 0.2500, 0.2632, 0.1923],
        [0.1997, 0.2500, 0.2107, 0.1922],
        [0.2992, 0.3749, 0.4211, 0.2694],
        [0.4011, 0.1252, 0.1057, 0.3456],
    ]
)

#: direct evaluation of the four-term formula on MIX3_TRUE vs MIX3_NOISY,
#: frozen as the reference scale for the 50 dB regression test
GOLDEN_COMON_50DB = 0.055101308443641056


def test_self_distance_zero():
    rng = np.random.default_rng(2)
    for _ in range(10):
        A = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        assert comon_index(A, A) <= 1e-12


def test_permutation_scale_equivalence():
    rng = np.random.default_rng(3)
    done = 0
    while done < 20:
        m = int(rng.integers(2, 6))
        A = rng.random((m, m)) + 0.5 * np.eye(m)
        if np.linalg.cond(A) > 50:  # keep the 1e-12 bound meaningful
            continue
        P = np.eye(m)[rng.permutation(m)]
        lam = np.diag(rng.uniform(0.2, 3.0, m))
        assert comon_index(A, A @ P @ lam) < 1e-12
        done += 1


def test_golden_constant_frozen():
    direct = comon_index(MIX3_TRUE, MIX3_NOISY)
    assert direct == pytest.approx(GOLDEN_COMON_50DB, rel=1e-12)


def test_identical_pair_has_zero_comon():
    assert comon_index(MIX3_TRUE, MIX3_EXACT) == pytest.approx(0.0, abs=1e-12)


def test_comon_invariances():
    rng = np.random.default_rng(5)
    A = rng.random((4, 4)) + np.eye(4)
    B = rng.random((4, 4)) + np.eye(4)
    base = comon_index(A, B)
    P = np.eye(4)[rng.permutation(4)]
    assert abs(comon_index(A @ P, B @ P) - base) < 1e-12
    scale = np.diag(rng.uniform(0.5, 2.0, 4))
    assert abs(comon_index(A @ scale, B) - base) < 1e-12
    assert abs(comon_index(A, B @ scale) - base) < 1e-12


def test_comon_rejects_singular():
    A = np.ones((3, 3))
    with pytest.raises(ConditioningError):
        comon_index(A, np.eye(3))


def test_match_columns_shuffle():
    rng = np.random.default_rng(7)
    A = rng.random((4, 4)) + 0.2
    perm = [2, 0, 3, 1]
    B = A[:, perm]
    rep = match_columns(A, B)
    assert rep.matched_permutation == tuple(perm)
    assert max(rep.per_column_error) < 1e-12


def test_match_columns_reference_exact():
    rep = match_columns(MIX3_TRUE, MIX3_EXACT)
    assert rep.matched_permutation == (1, 2, 0)
    assert max(rep.per_column_error) == pytest.approx(0.0, abs=1e-12)


def test_match_columns_reference_noisy_bound():
    rep = match_columns(MIX4_TRUE, MIX4_EST)
    assert max(rep.per_column_error) <= 5e-3
    # max per-entry deviation after matching stays within the same bound
    An = MIX4_TRUE / np.abs(MIX4_TRUE).sum(axis=0)
    Bn = MIX4_EST / np.abs(MIX4_EST).sum(axis=0)
    perm = rep.matched_permutation
    worst = max(np.abs(An[:, perm[j]] - Bn[:, j]).max() for j in range(4))
    assert worst <= 5e-3


def test_match_total_error_beats_identity_assignment():
    rng = np.random.default_rng(11)
    for _ in range(10):
        A = rng.random((4, 4)) + 0.2
        B = rng.random((4, 4)) + 0.2
        rep = match_columns(A, B)

        def l1n(M):
            return M / np.abs(M).sum(axis=0)

        An, Bn = l1n(A), l1n(B)
        identity_total = sum(
            np.linalg.norm(An[:, j] - Bn[:, j]) for j in range(4)
        )
        assert sum(rep.per_column_error) <= identity_total + 1e-12


def test_realized_snr_values():
    X = np.random.default_rng(13).random((5, 40)) + 0.5
    assert realized_snr(X, 2 * X) == pytest.approx(0.0)  # noise power == signal
    assert realized_snr(X, 1.1 * X) == pytest.approx(20.0)
    assert math.isinf(realized_snr(X, X))
