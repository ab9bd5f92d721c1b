import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genres.canon import (Applied, ExprFunction, ZeroFunction, build_C, build_H, build_Q, build_W,
                          canonical_residual, check_identities, herm, lift_F, lift_solution,
                          quasi_derivatives, random_smooth_function, wf_branch)
from genres.expr import DiffExpression, LambdaFamily, WeightExpression, eval_coefficient
from genres.problems import random_family

SL = DiffExpression(1, 2, p=["0", "1"])
W0 = WeightExpression(1, 0, p=["1"])


@pytest.mark.parametrize("L, expected", [
    (DiffExpression(1, 2, p=["0", "1"]), [[0, 1j], [-1j, 0]]),
    (DiffExpression(1, 1, q=["1"], s=["1"]), [[1]]),
    (DiffExpression(1, 3, p=["0", "1"], q=["0", "1"], s=["0", "1"]), [[0, 1j, 0], [-1j, 0, 0], [0, 0, 1]]),
])
def test_build_Q(L, expected):
    np.testing.assert_allclose(build_Q(L), expected)


def test_build_H_second_order_with_potential():
    L = DiffExpression(1, 2, p=["3", "1"])
    np.testing.assert_allclose(build_H(L, 0.2), [[-3, 0], [0, 1]])


def test_build_H_first_order_is_minus_p0():
    # with the -H convention of the canonical equation the order-one block is -p0
    L = DiffExpression(1, 1, p=["7"], q=["1"], s=["1"])
    np.testing.assert_allclose(build_H(L, 0.0), [[-7]])


def test_build_H_fourth_order_blocks():
    H = build_H(DiffExpression(1, 4, p=["0", "0", "1"]), 0.5)
    np.testing.assert_allclose(H[:2, :2], 0)
    np.testing.assert_allclose(H[:2, 2:], [[0, 0], [1, 0]])
    np.testing.assert_allclose(H[2:, :2], [[0, 1], [0, 0]])
    np.testing.assert_allclose(H[2:, 2:], np.diag([0, 1]))


@pytest.mark.parametrize("p1, q1, expected", [
    ("1", "0", [[1, 0], [0, 1]]),
    ("1", "2", [[1, 0], [-1j, 1]]),
    ("5", "0", [[1, 0], [0, 5]]),
])
def test_build_C(p1, q1, expected):
    L = DiffExpression(1, 2, p=["0", p1], q=[q1], s=[q1])
    np.testing.assert_allclose(build_C(L, 0.4), expected)


@pytest.mark.parametrize("L, m, expected", [
    (SL, W0, np.diag([1, 0])),
    (DiffExpression(1, 1, q=["1"], s=["1"]), W0, [[1]]),
    (SL, WeightExpression(1, 2, p=["0", "1"], q=["0"]), np.diag([0, 1])),
])
def test_build_W(L, m, expected):
    np.testing.assert_allclose(build_W(L, m, 0.3), expected, atol=1e-15)


def test_quasi_derivatives_of_square():
    q = quasi_derivatives(SL, ExprFunction(["t^2"]), 1.0, 0.0)
    np.testing.assert_allclose(q[:, 0], [1, 2, -2])


def test_quasi_derivative_first_order():
    q = quasi_derivatives(DiffExpression(1, 1, q=["1"], s=["1"]), ExprFunction(["1"]), 0.3, 0.0)
    assert q[0, 0] == pytest.approx(-0.5j)


def test_quasi_derivative_with_drift():
    L = DiffExpression(1, 2, p=["0", "1"], q=["2"], s=["2"])
    q = quasi_derivatives(L, ExprFunction(["exp(t)"]), 0.0, 0.0)
    assert q[1, 0] == pytest.approx(1 - 1j)


def test_top_quasi_derivative_is_the_expression():
    # -(y')' + cos(t) y for a Sturm-Liouville expression with potential
    L = DiffExpression(1, 2, p=["cos(t)", "1"])
    y = ExprFunction(["sin(2*t) + t^3"])
    t = np.linspace(0, 1, 9)
    q = quasi_derivatives(L, y, t, 0.0)
    direct = 4 * np.sin(2 * t) - 6 * t + np.cos(t) * (np.sin(2 * t) + t ** 3)
    np.testing.assert_allclose(q[2, :, 0], direct, atol=1e-13)


def test_low_quasi_derivatives_are_classical(rng):
    fam = random_family(2, 4, rng)
    f = random_smooth_function(2, rng)
    t = np.linspace(0, 1, 5)
    q = quasi_derivatives(fam.l_lam, f, t, 1j)
    np.testing.assert_allclose(q[:2], f.jet(t, 1), atol=1e-14)


def test_lift_F_branches():
    f = ExprFunction(["t"])
    np.testing.assert_allclose(lift_F(f, SL, W0, 0.7), [0.7, 0])
    np.testing.assert_allclose(lift_F(f, DiffExpression(1, 1, q=["1"], s=["1"]), W0, 0.7), [0.7])
    m2 = WeightExpression(1, 2, p=["0", "1"], q=["0"])
    np.testing.assert_allclose(lift_F(f, SL, m2, 0.7), [0.7, 1])


def test_lift_solution_branches():
    y = ExprFunction(["sin(t)"])
    x = lift_solution(y, ZeroFunction(1), SL, W0, 0.4)
    np.testing.assert_allclose(x, [np.sin(0.4), np.cos(0.4)])
    r1 = DiffExpression(1, 1, q=["1"], s=["1"])
    np.testing.assert_allclose(lift_solution(y, ZeroFunction(1), r1, W0, 0.4), [np.sin(0.4)])
    m2 = WeightExpression(1, 2, p=["0", "1"], q=["0"])
    x = lift_solution(ZeroFunction(1), ExprFunction(["t"]), SL, m2, 0.4)
    np.testing.assert_allclose(x, [0, -1])


@pytest.mark.parametrize("r", [1, 2, 3, 4])
@pytest.mark.parametrize("d", [1, 2])
def test_identities(r, d):
    rng = np.random.default_rng(100 + 10 * r + d)
    fam = random_family(d, r, rng)
    ts = rng.uniform(0, 1, 10)
    lams = rng.normal(size=5) + 1j * rng.uniform(0.2, 2, 5)
    res = check_identities(fam, ts, lams, rng).residuals
    assert res["imH_vs_W"] <= 1e-10
    assert res["W_imL_plus_imH"] <= 1e-10
    assert res["padding"] <= 1e-10
    assert res["branch_vs_product"] <= 1e-12
    assert res["null_components"] <= 1e-12


def test_sturm_liouville_weight_equals_imaginary_part():
    fam = LambdaFamily(SL, W0)
    H = build_H(fam.l_lam, 0.3, 1j)
    np.testing.assert_allclose((H - herm(H)) / 2j, build_W(fam.l_lam, W0, 0.3, 1j), atol=1e-12)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_hamiltonian_conjugation_symmetry(r):
    fam = random_family(2, r, np.random.default_rng(r))
    t = np.linspace(0, 1, 6)
    lam = 0.7 + 1.3j
    np.testing.assert_allclose(herm(build_H(fam.l_lam, t, lam)), build_H(fam.l_lam, t, lam.conjugate()),
                               atol=1e-13)


@pytest.mark.parametrize("r", [2, 4, 6])
@pytest.mark.parametrize("d", [1, 2])
def test_C_block_pattern(r, d):
    fam = random_family(d, r, np.random.default_rng(7))
    t = 0.35
    C = build_C(fam.l_lam, t, 1j)
    n = r // 2
    k = n * d
    np.testing.assert_array_equal(C[:k, :k], np.eye(k))
    np.testing.assert_array_equal(C[:k, k:], 0)
    pn = eval_coefficient(fam, "p", n, t, 1j)
    C22 = C[k:, k:]
    for i in range(n):
        blk = C22[i * d:(i + 1) * d, i * d:(i + 1) * d]
        sign = 1 if np.allclose(blk, pn) else -1
        np.testing.assert_allclose(blk, sign * pn, atol=1e-14)
        np.testing.assert_array_equal(C22[(i + 1) * d:, i * d:(i + 1) * d], 0)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
@pytest.mark.parametrize("d", [1, 2])
def test_manufactured_solution_solves_canonical_system(r, d):
    rng = np.random.default_rng(r + 7 * d)
    base = random_family(d, r, rng).base
    eye = [["1" if i == j else "0" for j in range(d)] for i in range(d)]
    fam = LambdaFamily(base, WeightExpression(d, 0, p=[eye]))
    lam = 0.3 + 1j
    y = random_smooth_function(d, rng)
    f = Applied(fam.l_lam, y, lam)  # l_lam[y] = m[f] with m = I
    t = np.linspace(0, 1, 11)
    X = lift_solution(y, f, fam.l_lam, fam.weight, t, lam, deriv=1)
    rhs = wf_branch(f, fam.l_lam, fam.weight, t, lam)
    assert np.max(np.abs(canonical_residual(fam.l_lam, X[0], X[1], rhs, t, lam))) <= 1e-12
    np.testing.assert_allclose(X[0][:, :d], y.jet(t, 0)[0], atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 2), st.integers(0, 10 ** 6))
def test_null_components_do_not_matter(r, d, seed):
    rng = np.random.default_rng(seed)
    fam = random_family(d, r, rng)
    res = check_identities(fam, rng.uniform(0, 1, 3), [0.2 + 1j], rng, n_functions=1).residuals
    assert res["null_components"] <= 1e-12
