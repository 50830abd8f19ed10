import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from symvi.linalg import (
    DimensionMismatch,
    NotPositiveDefinite,
    cholesky,
    is_lower_factor,
    log_det,
    symmetrize,
    tri_solve,
)


def _spd(entries, d):
    a = entries.reshape(d, d)
    return a @ a.T + d * np.eye(d)


spd_matrices = st.integers(1, 6).flatmap(
    lambda d: arrays(np.float64, (d * d,), elements=st.floats(-3, 3)).map(lambda e: _spd(e, d))
)


def test_cholesky_identity():
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))


def test_cholesky_diagonal():
    np.testing.assert_allclose(cholesky([[4.0, 0.0], [0.0, 9.0]]), [[2.0, 0.0], [0.0, 3.0]])


def test_cholesky_reconstructs_correlated():
    m = np.array([[1.0, 0.9], [0.9, 1.0]])
    l = cholesky(m)
    np.testing.assert_allclose(l @ l.T, m, atol=1e-12)
    assert is_lower_factor(l)


@pytest.mark.parametrize("m", [
    [[1.0, 2.0], [2.0, 1.0]],
    [[0.0, 0.0], [0.0, 1.0]],
    [[-1.0]],
])
def test_cholesky_rejects_indefinite(m):
    with pytest.raises(NotPositiveDefinite):
        cholesky(m)


def test_cholesky_rejects_asymmetric():
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 0.5], [0.4, 1.0]])


def test_symmetrize_tolerates_drift():
    m = np.array([[2.0, 0.5], [0.5 + 1e-15, 2.0]])
    s = symmetrize(m)
    assert np.array_equal(s, s.T)


def test_log_det_cases():
    assert log_det(np.eye(4)) == 0.0
    np.testing.assert_allclose(log_det(np.diag([2.0, 3.0])), np.log(36.0), rtol=1e-14)
    l = cholesky([[1.0, 0.9], [0.9, 1.0]])
    np.testing.assert_allclose(log_det(l), np.log(1.0 - 0.81), rtol=1e-12)


def test_tri_solve_cases():
    np.testing.assert_array_equal(tri_solve(np.eye(2), [1.0, 2.0]), [1.0, 2.0])
    np.testing.assert_allclose(tri_solve(np.diag([2.0, 4.0]), [2.0, 8.0]), [1.0, 2.0])
    rng = np.random.default_rng(3)
    l = np.tril(rng.normal(size=(3, 3)))
    np.fill_diagonal(l, np.abs(np.diag(l)) + 0.5)
    v = rng.normal(size=3)
    x = tri_solve(l, v)
    assert np.linalg.norm(l @ x - v) <= 1e-12 * np.linalg.norm(v)


def test_tri_solve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        tri_solve(np.eye(3), np.ones(2))


@settings(max_examples=60, deadline=None)
@given(spd_matrices)
def test_cholesky_reconstruction_property(m):
    l = cholesky(m)
    rel = np.linalg.norm(l @ l.T - m) / np.linalg.norm(m)
    assert rel <= 1e-10
    assert is_lower_factor(l)
    assert np.prod(np.diag(l)) > 0


def _cofactor_det(m):
    if m.shape == (1, 1):
        return m[0, 0]
    return sum((-1) ** j * m[0, j] * _cofactor_det(np.delete(m[1:], j, axis=1)) for j in range(m.shape[0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 3).flatmap(
    lambda d: arrays(np.float64, (d * d,), elements=st.floats(-3, 3)).map(lambda e: _spd(e, d))))
def test_log_det_matches_cofactor_expansion(m):
    np.testing.assert_allclose(log_det(cholesky(m)), np.log(_cofactor_det(m)), rtol=1e-10, atol=1e-10)
