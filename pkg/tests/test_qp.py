import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from fbm_orthant.qp import QPError, certified_subsets, qp_oracle, solve_qp


def test_identity_both_active():
    s = solve_qp(np.eye(2), [1.0, 1.0])
    assert s.I == (0, 1)
    assert np.allclose(s.b_tilde, [1, 1]) and np.allclose(s.w, [1, 1])
    assert s.value == pytest.approx(2.0)


def test_negative_coordinate_inactive():
    s = solve_qp(np.eye(2), [1.0, -1.0])
    assert s.I == (0,)
    assert np.allclose(s.b_tilde, [1, 0]) and np.allclose(s.w, [1, 0])
    assert s.value == pytest.approx(1.0)


def test_correlated_single_active():
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    s = solve_qp(S, [1.0, 0.2])
    assert s.I == (0,)
    assert np.allclose(s.b_tilde, [1.0, 0.5])
    assert s.value == pytest.approx(1.0)
    assert qp_oracle(S, [1.0, 0.2]) == pytest.approx(1.0, rel=1e-8)


def test_degenerate_rhs_rejected():
    with pytest.raises(QPError):
        solve_qp(np.eye(2), [-1.0, 0.0])


def test_shape_mismatch():
    with pytest.raises(QPError):
        solve_qp(np.eye(3), [1.0, 1.0])


@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_solution_invariants(d, seed):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, d)
    b = rng.normal(size=d)
    b[rng.integers(d)] = abs(b[0]) + 0.1
    s = solve_qp(S, b)
    I, Ic = list(s.I), list(s.complement)
    assert np.array_equal(s.b_tilde[I], b[I])
    assert np.all(s.w[I] > 0)
    assert np.all(s.w[Ic] == 0)
    assert np.all(s.b_tilde[Ic] >= b[Ic] - 1e-9)
    assert np.allclose(S @ s.w, s.b_tilde, atol=1e-9)
    assert s.value == pytest.approx(float(s.b_tilde @ np.linalg.solve(S, s.b_tilde)), rel=1e-10)
    assert certified_subsets(S, b) == [s.I]


@given(st.integers(2, 4), st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_scaling(d, seed, c):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, d)
    b = np.abs(rng.normal(size=d)) * rng.choice([-1, 1], size=d)
    b[0] = abs(b[0]) + 0.1
    s1, s2 = solve_qp(S, b), solve_qp(S, c * b)
    assert s1.I == s2.I
    assert s2.value == pytest.approx(c * c * s1.value, rel=1e-9)
