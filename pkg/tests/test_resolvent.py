import numpy as np
import pytest

from conftest import green_sl
from genres.canon import Applied, ExprFunction, ZeroFunction, random_smooth_function
from genres.charop import BoundaryPair, CharacteristicOperator
from genres.expr import DiffExpression, LambdaFamily, WeightExpression
from genres.forms import Grid
from genres.problems import first_order_family, null_weight_family, random_family, sturm_liouville
from genres.resolvent import (Resolvent, apply_resolvent, green_residual, green_residual_spectral,
                              lift_rhs, property_suite, residuals_ode_bc, straus_split)
from genres.solve import CanonicalSystem

SINE = ExprFunction(["sin(t)"])
F0 = ExprFunction(["cos(t) + i*sin(t)"])


def test_lift_rhs_order_zero(sl_family):
    grid = Grid(0.0, 1.0, 16)
    phi = lift_rhs(ExprFunction(["t^2"]), sl_family, grid, 1j)
    np.testing.assert_allclose(phi[:, 0], grid.nodes ** 2)
    np.testing.assert_array_equal(phi[:, 1], 0)
    np.testing.assert_array_equal(lift_rhs(ZeroFunction(1), sl_family, grid, 1j), 0)


@pytest.mark.parametrize("r, s", [(2, 2), (4, 2), (4, 4), (3, 2)])
def test_lift_rhs_matches_product(r, s):
    rng = np.random.default_rng(r + s)
    fam = random_family(2, r, rng, s=s)
    _, gap = lift_rhs(random_smooth_function(2, rng), fam, Grid(0.0, 1.0, 16), 0.2 + 1j, check=True)
    assert gap <= 1e-12


def test_zero_data_gives_zero(sl_setup):
    R = sl_setup[4]
    res = R.apply(ZeroFunction(1), 1j)
    assert np.all(res.y1 == 0)
    rep = residuals_ode_bc(res, R.family, sl_setup[2], R.grid)
    assert rep.ode == 0 and rep.boundary == 0


@pytest.mark.parametrize("lam", [1j, 0.5 + 0.5j, -1 + 2j])
def test_sturm_liouville_green_oracle(sl_setup, lam):
    R = sl_setup[4]
    res = R.apply(SINE, lam)
    ts = R.grid.nodes[::40]
    ref = green_sl(lam, np.sin, ts)
    assert np.max(np.abs(res.y1[::40, 0] - ref)) <= 1e-6 * np.max(np.abs(ref))
    np.testing.assert_allclose(res.y1[:, 0], np.sin(R.grid.nodes) / (1 - lam), atol=1e-9)


def test_first_component_of_vector(sl_setup):
    res = sl_setup[4].apply(SINE, 1j)
    np.testing.assert_array_equal(res.y1, res.xvec[:, :1])


def test_quasi_periodic_closed_form():
    # i y' - lam y = cos t with y(2 pi) = exp(i theta) y(0)
    theta, lam = np.pi / 3, 0.4 + 0.7j
    fam = first_order_family()
    sys = CanonicalSystem(fam, 0.0, 2 * np.pi)
    grid = Grid(0.0, 2 * np.pi, 2000)
    bp = BoundaryPair(np.eye(1), np.exp(1j * theta) * np.eye(1))
    R = Resolvent(sys, grid, CharacteristicOperator.from_pair(bp, sys, grid))
    y = R.apply(ExprFunction(["cos(t)"]), lam).y1[:, 0]
    t = grid.nodes
    A, B = lam / (1 - lam ** 2), -1j / (1 - lam ** 2)
    c = A * (np.exp(1j * theta) - 1) / (np.exp(-2j * np.pi * lam) - np.exp(1j * theta))
    exact = A * np.cos(t) + B * np.sin(t) + c * np.exp(-1j * lam * t)
    assert np.max(np.abs(y - exact)) <= 1e-8 * np.max(np.abs(exact))


def test_dirichlet_boundary_values(sl_setup):
    R = sl_setup[4]
    res = R.apply(ExprFunction(["t^2 + 1"]), 0.5 + 0.5j)
    assert abs(res.y1[0, 0]) <= 1e-7 and abs(res.y1[-1, 0]) <= 1e-7
    rep = residuals_ode_bc(res, R.family, sl_setup[2], R.grid)
    assert rep.boundary <= 1e-9 and rep.ode <= 1e-6


def test_corrupted_operator_breaks_boundary_conditions(sl_setup):
    sys, grid, bp, Mop, _ = sl_setup
    R = Resolvent(sys, grid, Mop.perturbed(0.1 * np.eye(2)))
    res = R.apply(SINE, 1j)
    assert residuals_ode_bc(res, R.family, bp, grid).boundary > 1e-3


def test_kernel_jump(sl_setup):
    k = sl_setup[4].kernel(1j)
    for idx in (0, 100, 400):
        np.testing.assert_allclose(k.jump(idx), k.iGinv, atol=1e-9)


def test_property_suite_self_adjoint(sl_setup):
    R = sl_setup[4]
    fs = [SINE, ExprFunction(["t*(3-t)"])]
    rep = property_suite(R, fs, [1j, 0.5 + 0.5j])
    assert rep.adjointness <= 1e-7
    assert rep.nevanlinna_gap <= 1e-7
    assert rep.norm_slack >= -1e-8
    assert rep.holomorphy <= 1e-7
    assert rep.weighted <= 1e-8


def test_property_suite_zero(sl_setup):
    rep = property_suite(sl_setup[4], [ZeroFunction(1)], [1j])
    assert rep.adjointness == 0 and rep.nevanlinna_gap == 0 and rep.holomorphy == 0


@pytest.mark.parametrize("r", [2, 4])
def test_property_suite_random_problem(r):
    fam = random_family(1, r, np.random.default_rng(r))
    sys = CanonicalSystem(fam, 0.0, 1.0)
    grid = Grid(0.0, 1.0, 400)
    R = Resolvent(sys, grid, CharacteristicOperator.from_pair(BoundaryPair.dirichlet(r // 2), sys, grid))
    rep = property_suite(R, [ExprFunction(["exp(t)"]), ExprFunction(["sin(3*t) + i*t"])], [1j, -0.5 + 2j])
    assert rep.adjointness <= 1e-7
    assert rep.nevanlinna <= 1e-8
    assert rep.norm_slack >= -1e-8
    assert rep.holomorphy <= 1e-7


def _identity_weight(d):
    return WeightExpression(d, 0, p=[[["1" if i == j else "0" for j in range(d)] for i in range(d)]])


def test_green_formula_symmetric():
    L = DiffExpression(1, 2, p=["cos(t)", "1 + t^2"])
    m = _identity_weight(1)
    y = ExprFunction(["sin(2*t) + i*t^2"])
    f = Applied(L, y)  # L[y] = m[f]
    diff, scale = green_residual(L, L, m, m, y, f, y, f, Grid(0.0, 1.0, 400))
    assert abs(diff) <= 1e-8 * scale


@pytest.mark.parametrize("r", [1, 2, 3, 4])
@pytest.mark.parametrize("d", [1, 2])
def test_green_formula_general(r, d):
    rng = np.random.default_rng(r + 10 * d)
    l1 = random_family(d, r, rng, symmetric=False).base
    l2 = random_family(d, r, rng, symmetric=False).base
    m = _identity_weight(d)
    y1, y2 = random_smooth_function(d, rng), random_smooth_function(d, rng)
    diff, scale = green_residual(l1, l2, m, m, y1, Applied(l1, y1), y2, Applied(l2, y2),
                                 Grid(0.0, 1.0, 400), 0.0)
    assert abs(diff) <= 1e-7 * scale


def test_green_formula_detects_wrong_data():
    L = DiffExpression(1, 2, p=["0", "1"])
    m = _identity_weight(1)
    y = ExprFunction(["exp(t)"])
    diff, scale = green_residual(L, L, m, m, y, y, y, Applied(L, y), Grid(0.0, 1.0, 100))
    assert abs(diff) > 1e-3 * scale


def test_green_formula_with_vanishing_ends():
    L = DiffExpression(1, 2, p=["0", "1"])
    m = WeightExpression(1, 0, p=["1"])
    bump = ExprFunction(["sin(t)^4"])
    f = Applied(L, bump)
    diff, scale = green_residual(L, L, m, m, bump, f, bump, f, Grid(0.0, np.pi, 400))
    assert abs(diff) <= 1e-9 * scale


@pytest.mark.parametrize("lams", [(0.0, 0.0), (1j, 0.5 - 2j), (2 + 1j, 2 + 1j)])
def test_spectral_green_formula(lams):
    fam = sturm_liouville("cos(t)")
    y1, y2 = ExprFunction(["sin(2*t) + t"]), ExprFunction(["exp(i*t) + t^2"])
    diff, scale = green_residual_spectral(fam, y1, y2, *lams, Grid(0.0, 1.0, 400))
    assert abs(diff) <= 1e-7 * scale


@pytest.mark.parametrize("lam", [1j, -1 + 2j])
def test_split_form_matches_direct(sl_setup, lam):
    R = sl_setup[4]
    y = R.apply(SINE, lam).y1
    np.testing.assert_allclose(straus_split(R, SINE, lam), y, atol=1e-8)
    assert np.all(straus_split(R, ZeroFunction(1), lam) == 0)


def test_null_function_has_zero_lifted_data():
    fam = null_weight_family()
    phi = lift_rhs(F0, fam, Grid(0.0, np.pi, 200), 1j)
    assert np.max(np.abs(phi)) <= 1e-12


@pytest.mark.parametrize("pair", [BoundaryPair.dirichlet(1), BoundaryPair.swapped(1)])
def test_null_function_resolves_to_zero(pair):
    fam = null_weight_family()
    sys = CanonicalSystem(fam, 0.0, np.pi)
    grid = Grid(0.0, np.pi, 200)
    R = Resolvent(sys, grid, CharacteristicOperator.from_pair(pair, sys, grid))
    assert np.max(np.abs(R.apply(F0, 1j).y1)) <= 1e-12


def test_null_weight_dichotomy():
    fam = null_weight_family()
    sys = CanonicalSystem(fam, 0.0, np.pi)
    grid = Grid(0.0, np.pi, 1000)
    g = ExprFunction(["t*(cos(t) + i*sin(t))"])
    norms = []
    for pair in (BoundaryPair.swapped(1), BoundaryPair.dirichlet(1)):
        R = Resolvent(sys, grid, CharacteristicOperator.from_pair(pair, sys, grid))
        res = R.apply(g, 1j)
        yd = R.derivs(res)
        norms.append(np.sqrt(max(R.inner(yd, yd).real, 0.0)))
    assert norms[0] > 1e-6
    assert norms[1] <= 1e-7


def test_restriction_to_subinterval(sl_family):
    a, b = np.pi / 4, 3 * np.pi / 4
    sys = CanonicalSystem(sl_family, a, b)
    grid = Grid(a, b, 400)
    R = Resolvent(sys, grid, CharacteristicOperator.from_pair(BoundaryPair.dirichlet(1), sys, grid))
    rep = property_suite(R, [SINE, ExprFunction(["t^2"])], [1j, 0.5 + 0.5j])
    assert rep.adjointness <= 1e-7 and rep.nevanlinna_gap <= 1e-7
    assert rep.norm_slack >= -1e-8 and rep.holomorphy <= 1e-7


def test_quadrature_convergence(sl_family):
    lam = 0.5 + 0.5j
    sys = CanonicalSystem(sl_family, 0.0, np.pi)
    f = ExprFunction(["t*(3-t)"])
    ts = np.linspace(0.0, np.pi, 9)
    ref = green_sl(lam, lambda s: s * (3 - s), ts)
    errs = []
    for N in (16, 32, 64):
        grid = Grid(0.0, np.pi, N)
        R = Resolvent(sys, grid, CharacteristicOperator.from_pair(BoundaryPair.dirichlet(1), sys, grid), 1)
        y = R.apply(f, lam).y1[:: N // 8, 0]
        errs.append(np.max(np.abs(y - ref)))
    assert errs[0] > errs[1] > errs[2]
