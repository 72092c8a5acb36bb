import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cappronet import linalg
from cappronet.errors import ShapeError, SingularityError
from oracles import gauss_jordan_inverse, naive_matmul


def test_matmul_identity_and_permutation():
    a = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(linalg.matmul(np.eye(3), a), a)
    out = linalg.matmul([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(out, [[2, 1], [4, 3]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.standard_normal((5, 3)), rng.standard_normal((3, 2))
    np.testing.assert_allclose(linalg.matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_small_helpers():
    assert linalg.norm2([3, 4]) == 5.0
    assert linalg.dot([1, 0], [0, 1]) == 0.0
    assert linalg.norm2([0.0, 0.0]) == 0.0
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(linalg.transpose(linalg.transpose(a)), a)
    np.testing.assert_array_equal(linalg.matvec(a, [1, 1, 1]), [3, 12])
    assert linalg.frobenius_norm(np.eye(4)) == 2.0
    with pytest.raises(ShapeError):
        linalg.dot([1, 2], [1, 2, 3])
    with pytest.raises(ShapeError):
        linalg.matvec(a, [1, 2])


@pytest.mark.parametrize("g, expected", [
    (4 * np.eye(2), 0.25 * np.eye(2)),
    (np.diag([2.0, 8.0]), np.diag([0.5, 0.125])),
])
def test_sym_inverse_trivial(g, expected):
    np.testing.assert_allclose(linalg.sym_inverse(g, 0.0), expected, rtol=1e-15)


def test_sym_inverse_matches_gauss_jordan(rng):
    w = rng.standard_normal((64, 4))
    g = w.T @ w
    np.testing.assert_allclose(linalg.sym_inverse(g), gauss_jordan_inverse(g), rtol=0, atol=1e-9)


def test_sym_inverse_with_eps(rng):
    w = rng.standard_normal((10, 3))
    g = w.T @ w
    inv = linalg.sym_inverse(g, 0.5)
    assert np.linalg.norm(inv @ (g + 0.5 * np.eye(3)) - np.eye(3)) <= 1e-8 * 3


def test_sym_inverse_errors():
    with pytest.raises(ShapeError):
        linalg.sym_inverse(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        linalg.sym_inverse(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(SingularityError):
        linalg.sym_inverse(np.ones((2, 2)))


def test_regularized_inverse_retries_only_on_failure(rng):
    w = rng.standard_normal((8, 2))
    inv, used = linalg.regularized_inverse(w.T @ w)
    assert used == 0.0
    w[:, 1] = w[:, 0]
    inv, used = linalg.regularized_inverse(w.T @ w, 1e-7)
    assert used == 1e-7
    assert np.all(np.isfinite(inv))
    with pytest.raises(SingularityError):
        linalg.regularized_inverse(w.T @ w, 0.0)


@pytest.mark.parametrize("g, expected", [
    (4 * np.eye(2), 0.5 * np.eye(2)),
    (np.diag([4.0, 16.0]), np.diag([0.5, 0.25])),
])
def test_sym_inv_sqrt_trivial(g, expected):
    np.testing.assert_allclose(linalg.sym_inv_sqrt(g), expected, rtol=1e-14)


def test_sym_inv_sqrt_random_spd(rng):
    a = rng.standard_normal((4, 4))
    g = a @ a.T + 0.5 * np.eye(4)
    s = linalg.sym_inv_sqrt(g)
    np.testing.assert_allclose(s, s.T, atol=0)
    assert np.linalg.norm(s @ s @ g - np.eye(4)) <= 1e-8
    assert np.linalg.norm(s @ s - linalg.sym_inverse(g)) <= 1e-8


def test_sym_inv_sqrt_rejects_indefinite():
    with pytest.raises(SingularityError):
        linalg.sym_inv_sqrt(np.diag([1.0, -1.0]))


def _well_conditioned(seed, n):
    r = np.random.default_rng(seed)
    q, _ = np.linalg.qr(r.standard_normal((n, n)))
    return (q * r.uniform(1.0, 1e3, n)) @ q.T


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_inverse_and_root_properties(seed, n):
    g = _well_conditioned(seed, n)
    inv = linalg.sym_inverse(g)
    assert np.linalg.norm(inv @ g - np.eye(n)) <= 1e-8
    s = linalg.sym_inv_sqrt(g)
    assert np.linalg.norm(s @ s - inv) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matmul_associative(seed):
    r = np.random.default_rng(seed)
    a, b, c = r.standard_normal((4, 5)), r.standard_normal((5, 3)), r.standard_normal((3, 6))
    left = linalg.matmul(linalg.matmul(a, b), c)
    right = linalg.matmul(a, linalg.matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-10 * np.linalg.norm(left)


def test_deterministic(rng):
    w = rng.standard_normal((16, 4))
    g = w.T @ w
    assert np.array_equal(linalg.sym_inverse(g), linalg.sym_inverse(g))
    assert np.array_equal(linalg.sym_inv_sqrt(g), linalg.sym_inv_sqrt(g))
