import numpy as np
import pytest

from facetsep.datamodel import (
    FcaParams,
    PointCloud,
    SeparationResult,
    as_matrix,
    read_config,
    read_matrix_csv,
    write_matrix_csv,
)
from facetsep.errors import InputError, MatrixFormatError, ParameterError


def test_read_simple_matrix(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3,4\n")
    M = read_matrix_csv(p)
    assert M.shape == (2, 2)
    assert np.array_equal(M, [[1, 2], [3, 4]])


def test_ragged_row_names_line(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(MatrixFormatError, match="line 2"):
        read_matrix_csv(p)


def test_bad_field_names_position(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(MatrixFormatError, match="line 2, field 2"):
        read_matrix_csv(p)


def test_header_skip(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n1,2\n")
    M = read_matrix_csv(p, header=True)
    assert M.shape == (1, 2)


def test_write_row(tmp_path):
    p = tmp_path / "m.csv"
    write_matrix_csv([[0.25, 0.5, 0.25]], p)
    assert p.read_text() == "0.25,0.5,0.25\n"


def test_write_empty_matrix(tmp_path):
    p = tmp_path / "m.csv"
    write_matrix_csv(np.zeros((0, 0)), p)
    assert p.read_text() == ""
    assert read_matrix_csv(p).shape == (0, 0)


def test_round_trip_identity(tmp_path):
    rng = np.random.default_rng(3)
    for trial in range(20):
        M = rng.standard_normal((rng.integers(1, 7), rng.integers(1, 7)))
        M *= 10.0 ** rng.integers(-12, 12)
        p = tmp_path / f"m{trial}.csv"
        write_matrix_csv(M, p)
        back = read_matrix_csv(p)
        assert np.all(np.abs(back - M) <= 1e-12 * np.maximum(1.0, np.abs(M)))


def test_reference_matrix_round_trip_exact(tmp_path):
    # values printed to four decimals round-trip exactly
    A = np.array(
        [
            [0.0769, 0.4615, 0.3571],
            [0.3846, 0.4615, 0.0714],
            [0.5385, 0.0769, 0.5714],
        ]
    )
    p = tmp_path / "a.csv"
    write_matrix_csv(A, p)
    assert np.array_equal(read_matrix_csv(p), A)


def test_nonnegative_tag_rejects_negative():
    with pytest.raises(InputError, match="negative entry"):
        as_matrix([[1.0, -0.5]], nonnegative=True)


def test_as_matrix_rejects_nonfinite():
    with pytest.raises(InputError):
        as_matrix([[np.nan, 1.0]])


def test_point_cloud_invariants():
    with pytest.raises(InputError):
        PointCloud(points=np.ones((2, 3)), source_index=np.array([4, 4]))
    c = PointCloud(points=np.ones((2, 3)), source_index=np.array([-1, 4]))
    assert c.dim == 3 and len(c) == 2


def test_fca_params_validation():
    FcaParams(rho=1.0, eps=0.5, sigma=0.5, delta=0.99)
    with pytest.raises(ParameterError):
        FcaParams(rho=0.0)
    with pytest.raises(ParameterError):
        FcaParams(rho=1.0, eps=1.5)
    with pytest.raises(ParameterError):
        FcaParams(rho=1.0, delta=0.0)


def test_separation_result_invariants():
    A = np.array([[0.6, 0.3], [0.4, 0.7]])
    S = np.abs(np.random.default_rng(0).standard_normal((2, 5)))
    r = SeparationResult(A, S, 2, (3, 2), 0.1)
    assert np.allclose(r.A_hat.sum(axis=0), 1.0)
    with pytest.raises(InputError):
        SeparationResult(A * 2, S, 2, (3, 2), 0.1)  # columns no longer sum to 1
    with pytest.raises(InputError):
        SeparationResult(A, -S, 2, (3, 2), 0.1)


def test_read_config(tmp_path):
    p = tmp_path / "cfg"
    p.write_text("rho = 5.0\n# comment\neps=1e-3\ngrid=128\nseed=9\n")
    cfg = read_config(p)
    assert cfg == {"rho": 5.0, "eps": 1e-3, "grid": 128, "seed": 9}
    p.write_text("bogus=1\n")
    with pytest.raises(InputError, match="unknown key"):
        read_config(p)
