import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermognn.errors import ConfigurationError, NumericError
from thermognn.linalg import (RngStream, elementwise, glorot_init, matmul, relu, rng_normal,
                              square, tanh)


def test_matmul_cases():
    a = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(matmul(np.eye(3), a), a)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2], [3, 4]]), np.array([[0.0], [1]])),
                                  [[2.0], [4.0]])
    np.testing.assert_array_equal(matmul(a, np.zeros((3, 2))), np.zeros((3, 2)))


def test_matmul_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative():
    s = RngStream(4)
    for _ in range(20):
        a, b, c = (s.normal(5, 5) for _ in range(3))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-12 * np.max(np.abs(left))


def test_transpose_involution_and_purity():
    a = RngStream(1).normal(3, 4)
    before = a.copy()
    assert np.array_equal(a.T.T, a)
    tanh(a), square(a), matmul(a, a.T)
    assert np.array_equal(a, before)


def test_elementwise_maps():
    np.testing.assert_array_equal(square(np.array([[-2.0, 3.0]])), [[4.0, 9.0]])
    np.testing.assert_array_equal(tanh(np.zeros((2, 2))), np.zeros((2, 2)))
    np.testing.assert_array_equal(relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])


def test_elementwise_rejects_non_finite():
    with pytest.raises(NumericError, match="conv3"):
        elementwise(np.array([[0.0]]), np.log, context="conv3")


def test_rng_determinism_and_scaling():
    a = rng_normal(RngStream(7), 4, 5, 1.0)
    b = rng_normal(RngStream(7), 4, 5, 1.0)
    assert np.array_equal(a, b)
    half = rng_normal(RngStream(7), 4, 5, 0.5)
    assert np.array_equal(half, a * 0.5)


def test_rng_statistics():
    x = rng_normal(RngStream(123), 1, 100_000, 1.0)
    assert 0.99 <= x.std() <= 1.01
    assert abs(x.mean()) < 0.01


def test_rng_children_independent_of_call_order():
    root = RngStream(9)
    a = root.child(3).normal(2, 2)
    root.child(1).normal(5, 5)
    assert np.array_equal(a, RngStream(9).child(3).normal(2, 2))
    assert not np.array_equal(a, root.child(4).normal(2, 2))


def test_rng_rejects_bad_std():
    with pytest.raises(ConfigurationError):
        rng_normal(RngStream(0), 1, 1, 0.0)


def test_glorot_bounds():
    w = glorot_init(3, 3, RngStream(0))
    assert np.all(np.abs(w) <= 1.0)
    big = glorot_init(64, 64, RngStream(1))
    assert np.abs(big).max() <= np.sqrt(6 / 128)
    assert np.array_equal(big, glorot_init(64, 64, RngStream(1)))
    with pytest.raises(ConfigurationError):
        glorot_init(0, 3, RngStream(0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_glorot_in_range_property(seed, fi, fo):
    w = glorot_init(fi, fo, RngStream(seed))
    assert w.shape == (fi, fo)
    assert np.all(np.abs(w) <= np.sqrt(6 / (fi + fo)))
