import decimal
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from parflow import recurrence
from parflow.expflow import (
    Increment,
    affine_flow_product,
    affine_step,
    exp_lowrank,
    exp_rank1,
    expm_taylor,
    flow_product,
    increments_from_inputs,
    phi1,
    phi1_matrix,
)
from parflow.tensor import ShapeError, rel_frobenius

from helpers import random_inputs, random_state
from oracles import expm_series, loglog_slope


@pytest.mark.parametrize(
    "x, expected",
    [(0.0, 1.0), (1.0, math.e - 1.0), (math.log(2.0), 1.0 / math.log(2.0))],
)
def test_phi1_values(x, expected):
    assert abs(phi1(x) - expected) <= 1e-14 * abs(expected)


@pytest.mark.parametrize("x", [1e-12, -3e-9, 5e-5, -9.99e-5, 1e-4, 2e-4, -0.3, 4.0, -20.0])
def test_phi1_near_zero_relative_error(x):
    with decimal.localcontext() as ctx:
        ctx.prec = 50
        xd = decimal.Decimal(x)
        ref = float((xd.exp() - 1) / xd)
    assert abs(phi1(x) - ref) <= 1e-14 * abs(ref)


def test_expm_taylor_matches_scipy(rng):
    for n in (1, 3, 8, 16):
        M = rng.standard_normal((n, n)) * 1.5
        assert rel_frobenius(expm_taylor(M), scipy.linalg.expm(M)) <= 1e-12


@given(st.integers(1, 6), st.integers(0, 2**31), st.floats(0.01, 4.0))
def test_phi1_matrix_matches_augmented_expm(n, seed, scale):
    Z = np.random.default_rng(seed).standard_normal((n, n)) * scale / np.sqrt(n)
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = Z
    aug[:n, n:] = np.eye(n)
    ref = scipy.linalg.expm(aug)[:n, n:]
    assert rel_frobenius(phi1_matrix(Z), ref) <= 1e-12


def test_phi1_matrix_singular_argument():
    Z = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(phi1_matrix(Z), [[1.0, 0.5], [0.0, 1.0]], atol=1e-16)


def test_exp_rank1_nilpotent_exact():
    a = np.array([1.0, 2.0, 0.0, -1.0])
    b = np.array([2.0, -1.0, 5.0, 0.0])
    assert b @ a == 0.0
    np.testing.assert_array_equal(exp_rank1(a, b), np.eye(4) + np.outer(a, b))


def test_exp_rank1_diagonal():
    e1 = np.array([1.0, 0.0])
    np.testing.assert_allclose(exp_rank1(e1, e1), np.diag([math.e, 1.0]), rtol=1e-15)


def test_exp_rank1_matches_series(rng):
    a, b = rng.standard_normal((2, 6)) / 2
    np.testing.assert_allclose(exp_rank1(a, b), expm_series(np.outer(a, b)), rtol=0, atol=1e-13)


def test_exp_lowrank_zero_factor(rng):
    B = rng.standard_normal((5, 2))
    np.testing.assert_array_equal(exp_lowrank(np.zeros((5, 2)), B), np.eye(5))


def test_exp_lowrank_rank1_consistent(rng):
    a, b = rng.standard_normal((2, 7))
    assert rel_frobenius(exp_lowrank(a[:, None], b[:, None]), exp_rank1(a, b)) <= 1e-14


def test_exp_lowrank_matches_dense(rng):
    A, B = rng.standard_normal((2, 8, 3)) / np.sqrt(8)
    assert rel_frobenius(exp_lowrank(A, B), expm_taylor(A @ B.T)) <= 1e-12


def test_exp_lowrank_singular_core():
    # B^T A singular (here zero): exp(AB^T) = Id + AB^T
    A = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert not (B.T @ A).any()
    np.testing.assert_allclose(exp_lowrank(A, B), np.eye(3) + A @ B.T, atol=1e-16)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
def test_determinant_identity(d, R, seed):
    R = min(R, d)
    A, B = np.random.default_rng(seed).standard_normal((2, d, R)) / np.sqrt(d)
    det = np.linalg.det(exp_lowrank(A, B))
    ref = math.exp(np.trace(B.T @ A))
    assert abs(det - ref) <= 1e-10 * ref


def test_exp_lowrank_shape_mismatch():
    with pytest.raises(ShapeError):
        exp_lowrank(np.zeros((3, 2)), np.zeros((3, 1)))


def test_flow_product_empty():
    np.testing.assert_array_equal(flow_product([], d=3), np.eye(3))
    with pytest.raises(ValueError):
        flow_product([])


def test_flow_product_nilpotent_single_increment():
    a = np.array([[1.0], [0.0]])
    b = np.array([[0.0], [1.0]])
    inc = [Increment(a, b)]
    expected = np.eye(2) + a @ b.T
    np.testing.assert_array_equal(flow_product(inc, "exact"), expected)
    np.testing.assert_array_equal(flow_product(inc, "euler"), expected)


def test_flow_product_order(rng):
    incs = [Increment(*rng.standard_normal((2, 3, 1))) for _ in range(3)]
    expected = np.eye(3)
    for inc in incs:
        expected = expected @ scipy.linalg.expm(inc.dense())
    assert rel_frobenius(flow_product(incs, "exact"), expected) <= 1e-12


def test_euler_flow_reproduces_homogeneous_recurrence(rng):
    inp = random_inputs(rng, 20, 2, 5).homogeneous()
    S0 = random_state(rng, 5)
    P = flow_product(increments_from_inputs(inp), "euler")
    np.testing.assert_allclose(S0 @ P, recurrence.run(S0, inp), rtol=0, atol=1e-11)


def test_tree_product_close_to_sequential(rng):
    incs = increments_from_inputs(random_inputs(rng, 13, 2, 4))
    assert rel_frobenius(flow_product(incs, tree=True), flow_product(incs)) <= 1e-13


def test_flow_product_dimension_mismatch(rng):
    incs = [Increment(np.zeros((3, 1)), np.zeros((3, 1))), Increment(np.zeros((2, 1)), np.zeros((2, 1)))]
    with pytest.raises(ShapeError):
        flow_product(incs)


def test_flow_product_unknown_mode(rng):
    with pytest.raises(ValueError):
        flow_product([Increment(np.zeros((2, 1)), np.zeros((2, 1)))], mode="rk4")


def test_euler_exact_gap_is_second_order(rng):
    base = random_inputs(rng, 16, 2, 6)
    eps = [2.0**-n for n in range(2, 9)]
    gaps = []
    for e in eps:
        incs = [Increment(e * inc.A, inc.B) for inc in increments_from_inputs(base)]
        gaps.append(np.linalg.norm(flow_product(incs, "exact") - flow_product(incs, "euler")))
    assert loglog_slope(eps, gaps) >= 1.9


def test_affine_step_euler_is_recurrence_step(rng):
    A, At, B = rng.standard_normal((3, 4, 2))
    S = rng.standard_normal((4, 4))
    np.testing.assert_allclose(affine_step(A, At, B, "euler").apply(S), recurrence.step(S, A, At, B), atol=1e-13)


def test_affine_step_exact_solves_constant_cde(rng):
    # dS = S dw + dxi with constant generators over a unit step
    A, At, B = rng.standard_normal((3, 3, 2)) / 2
    S = rng.standard_normal((3, 3))
    aug = np.zeros((6, 6))
    aug[:3, :3] = A @ B.T
    aug[3:, :3] = At @ B.T
    E = scipy.linalg.expm(aug)
    expected = S @ E[:3, :3] + E[3:, :3]
    np.testing.assert_allclose(affine_step(A, At, B, "exact").apply(S), expected, atol=1e-12)


def test_affine_flow_product_euler_matches_recurrence(rng):
    inp = random_inputs(rng, 25, 3, 4)
    S0 = random_state(rng, 4)
    assert rel_frobenius(affine_flow_product(inp, "euler").apply(S0), recurrence.run(S0, inp)) <= 1e-12
