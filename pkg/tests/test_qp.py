import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgc.qp import EmptyBoxError, NotPositiveDefiniteError, box_least_squares, box_qp
from oracles import kkt_enumeration


def _random_qp(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n + 2, n))
    H = A.T @ A + 1e-3 * np.eye(n)
    g = rng.normal(size=n) * 3
    lo = -rng.uniform(0.1, 2.0, n)
    hi = rng.uniform(0.1, 2.0, n)
    return H, g, lo, hi


@given(st.integers(0, 10_000), st.integers(1, 7))
@settings(max_examples=80, deadline=None)
def test_matches_enumeration(seed, n):
    H, g, lo, hi = _random_qp(seed, n)
    res = box_qp(H, g, lo, hi)
    np.testing.assert_allclose(res.x, kkt_enumeration(H, g, lo, hi), atol=1e-8)


@given(st.integers(0, 10_000), st.integers(1, 7))
@settings(max_examples=80, deadline=None)
def test_kkt_conditions(seed, n):
    H, g, lo, hi = _random_qp(seed, n)
    res = box_qp(H, g, lo, hi)
    x = res.x
    assert np.all(x >= lo) and np.all(x <= hi)
    grad = H @ x + g
    scale = 1 + np.abs(g).max()
    for i in range(n):
        if i in res.at_lower:
            assert grad[i] >= -1e-9 * scale
        elif i in res.at_upper:
            assert grad[i] <= 1e-9 * scale
        else:
            assert abs(grad[i]) <= 1e-9 * scale


def test_interior_solution_is_unconstrained_minimum():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([-1.0, 0.3])
    res = box_qp(H, g, [-10, -10], [10, 10])
    np.testing.assert_allclose(res.x, np.linalg.solve(H, -g), atol=1e-12)
    assert res.at_lower == [] and res.at_upper == []


def test_clamps_to_bound():
    res = box_qp(np.eye(2), np.array([-5.0, 0.0]), [-1, -1], [1, 1])
    np.testing.assert_allclose(res.x, [1.0, 0.0])
    assert res.at_upper == [0]


def test_degenerate_box_rejected():
    with pytest.raises(EmptyBoxError):
        box_qp(np.eye(2), np.zeros(2), [0.0, 1.0], [1.0, 1.0])


def test_singular_hessian_rejected():
    H = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        box_qp(H, np.zeros(2), [-1, -1], [1, 1])
    with pytest.raises(NotPositiveDefiniteError):
        box_least_squares(np.array([[1.0, 1.0]]), np.ones(1), [-1, -1], [1, 1])


def test_deterministic():
    H, g, lo, hi = _random_qp(5, 6)
    a, b = box_qp(H, g, lo, hi), box_qp(H, g, lo, hi)
    np.testing.assert_array_equal(a.x, b.x)


def test_least_squares_form_keeps_accuracy_when_poorly_conditioned():
    # Hessian condition ~1e12: normal equations would lose most digits
    rng = np.random.default_rng(2)
    M = np.vstack([rng.normal(size=(5, 6)), 1e-6 * np.eye(6)])
    d = np.concatenate([rng.normal(size=5), np.zeros(6)])
    res = box_least_squares(M, d, -np.full(6, 1e3), np.full(6, 1e3))
    ref = np.linalg.lstsq(M, d, rcond=None)[0]
    np.testing.assert_allclose(res.x, ref, atol=1e-9)
