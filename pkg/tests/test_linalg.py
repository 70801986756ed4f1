import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from ctrlrate import linalg


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_inverse_matches_identity(n):
    rng = np.random.default_rng(n)
    m = random_spd(rng, n)
    assert np.max(np.abs(m @ linalg.inverse(m) - np.eye(n))) < 1e-10


@pytest.mark.parametrize("seed", range(20))
def test_det_and_solve_agree_with_numpy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    m = rng.normal(size=(n, n))
    b = rng.normal(size=n)
    assert_allclose(linalg.det(m), np.linalg.det(m), rtol=1e-10, atol=1e-12)
    assert_allclose(linalg.solve(m, b), np.linalg.solve(m, b), rtol=1e-8, atol=1e-10)


def test_det_of_permuted_identity_has_sign():
    p = np.eye(3)[[1, 0, 2]]
    assert linalg.det(p) == -1.0


def test_singular_raises():
    m = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(linalg.SingularMatrixError):
        linalg.solve(m, np.ones(2))
    with pytest.raises(linalg.SingularMatrixError):
        linalg.inverse(m)
    assert linalg.det(m) == 0.0


def test_shape_checks():
    with pytest.raises(ValueError):
        linalg.det(np.ones((2, 3)))
    with pytest.raises(ValueError):
        linalg.det(np.eye(linalg.MAX_DIM + 1))


def test_solve_symmetric_rejects_asymmetric():
    with pytest.raises(ValueError):
        linalg.solve_symmetric(np.array([[2.0, 1.0], [0.0, 2.0]]), np.ones(2))
    m = random_spd(np.random.default_rng(3), 4)
    assert_allclose(linalg.solve_symmetric(m, np.ones(4)), np.linalg.solve(m, np.ones(4)))


def test_trace_prod():
    rng = np.random.default_rng(7)
    a, b, c = (rng.normal(size=(3, 3)) for _ in range(3))
    assert_allclose(linalg.trace_prod(a, b, c), np.trace(a @ b @ c))
    assert_allclose(linalg.trace_prod(a), np.trace(a))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, linalg.MAX_DIM).flatmap(
    lambda k: st.tuples(arrays(float, (k, k), elements=st.floats(-10, 10)),
                        arrays(float, k, elements=st.floats(-10, 10)))))
def test_property_solve_and_det_match_numpy(case):
    a, b = case
    a = a + 25.0 * np.eye(len(b))       # diagonally dominant, hence well conditioned
    assert_allclose(linalg.solve(a, b), np.linalg.solve(a, b), rtol=1e-10, atol=1e-12)
    assert_allclose(linalg.det(a), np.linalg.det(a), rtol=1e-10)
