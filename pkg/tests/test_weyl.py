import numpy as np
import pytest

from genres.canon import ExprFunction, ZeroFunction
from genres.charop import (BoundaryPair, CharacteristicOperator, bump_trials, char_projection,
                           separation_check, verify_characteristic)
from genres.forms import Grid
from genres.problems import random_family, sturm_liouville
from genres.resolvent import Resolvent
from genres.solve import CanonicalSystem, integrate_fundamental
from genres.weyl import (NevanlinnaPair, WeylError, complement_from_pair, factor_projection,
                         herglotz_check, projection_from_pair, right_weyl_function, split_resolvent,
                         weyl_gram, weyl_solutions)

RIGHT_DIRICHLET = np.array([[1.0, 0.0]])  # y(b) = 0
LEFT_DIRICHLET = NevanlinnaPair(np.zeros((1, 1)), np.eye(1))  # x(a) in span col(0, 1)
LAMS = [1j, 0.5 + 0.5j, -1 + 2j]


@pytest.fixture(scope="module")
def sl():
    sys = CanonicalSystem(sturm_liouville(), 0.0, np.pi)
    grid = Grid(0.0, np.pi, 1000)
    return sys, grid


def _m(sys, grid, lam, Gamma=RIGHT_DIRICHLET):
    return right_weyl_function(integrate_fundamental(sys, lam, grid), Gamma)


@pytest.mark.parametrize("lam", LAMS)
def test_dirichlet_weyl_function(sl, lam):
    k = np.sqrt(lam)
    assert abs(_m(*sl, lam)[0, 0] - (-k / np.tan(k * np.pi))) <= 1e-8


@pytest.mark.parametrize("lam", LAMS)
def test_factor_matches_endpoint_weyl_function(sl, lam):
    sys, grid = sl
    Mop = CharacteristicOperator.from_pair(BoundaryPair.dirichlet(1), sys, grid)
    P, _ = char_projection(Mop(lam), sys.G)
    fr = factor_projection(P)
    np.testing.assert_allclose(fr.m, _m(sys, grid, lam), atol=1e-8)
    assert fr.residual_range <= 1e-9 and fr.residual_complement <= 1e-9
    # the rebuilt projection from the left data and m agrees with the pair route
    np.testing.assert_allclose(projection_from_pair(LEFT_DIRICHLET, fr.m, lam), P, atol=1e-8)
    np.testing.assert_allclose(complement_from_pair(LEFT_DIRICHLET, fr.m, lam), np.eye(2) - P, atol=1e-8)


def test_factor_is_basis_independent(sl):
    sys, grid = sl
    Mop = CharacteristicOperator.from_pair(BoundaryPair.dirichlet(1), sys, grid)
    P, _ = char_projection(Mop(1j), sys.G)
    a = factor_projection(P).m
    b = factor_projection(P, order=np.array([1, 0])).m
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_trivial_factorisations():
    fr = factor_projection(np.diag([1.0, 0.0]))
    assert fr.m[0, 0] == 0
    with pytest.raises(WeylError):
        factor_projection(np.diag([0.0, 1.0]))
    with pytest.raises(WeylError):
        factor_projection(0.5 * np.eye(2))


@pytest.mark.parametrize("lam", LAMS)
def test_random_projection_round_trip(lam):
    rng = np.random.default_rng(3)
    k = 2
    a = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    b = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    m = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    pair = NevanlinnaPair(a, b)
    P = projection_from_pair(pair, m, lam)
    assert separation_check(P)[0] <= 1e-9
    fr = factor_projection(P)
    np.testing.assert_allclose(fr.m, m, atol=1e-9)
    assert max(fr.residual_range, fr.residual_complement) <= 1e-9


def test_left_dirichlet_gives_weyl_function(sl):
    sys, grid = sl
    fs = integrate_fundamental(sys, 1j, grid)
    m = right_weyl_function(fs, RIGHT_DIRICHLET)
    wd = weyl_solutions(LEFT_DIRICHLET, fs, m)
    np.testing.assert_allclose(wd.mab, m, atol=1e-14)
    np.testing.assert_allclose(wd.K, np.eye(1))
    np.testing.assert_allclose(wd.U, fs.X @ np.array([[0.0], [1.0]]))


def test_left_neumann_gives_negative_inverse(sl):
    sys, grid = sl
    fs = integrate_fundamental(sys, 1j, grid)
    m = right_weyl_function(fs, RIGHT_DIRICHLET)
    wd = weyl_solutions(NevanlinnaPair(np.eye(1), np.zeros((1, 1))), fs, m)
    np.testing.assert_allclose(wd.mab, -np.linalg.inv(m), atol=1e-12)


def test_weyl_solution_satisfies_right_condition(sl):
    sys, grid = sl
    fs = integrate_fundamental(sys, 0.5 + 0.5j, grid)
    wd = weyl_solutions(LEFT_DIRICHLET, fs, right_weyl_function(fs, RIGHT_DIRICHLET))
    assert np.max(np.abs(RIGHT_DIRICHLET @ wd.V[-1])) <= 1e-12


def _robin(theta):
    return NevanlinnaPair(np.array([[np.cos(theta)]]), np.array([[np.sin(theta)]]))


@pytest.mark.parametrize("pair", [LEFT_DIRICHLET, _robin(0.7)])
def test_herglotz_and_gram_bound(sl, pair):
    sys, grid = sl
    R = Resolvent(sys, grid, lambda lam: np.zeros((2, 2)))
    wds = {}
    for lam in LAMS:
        for z in (lam, lam.conjugate()):
            fs = integrate_fundamental(sys, z, grid)
            wds[z] = weyl_solutions(pair, fs, right_weyl_function(fs, RIGHT_DIRICHLET))
    rep = herglotz_check(lambda z: wds[z].mab, LAMS, lambda z: weyl_gram(R, wds[z]))
    assert rep.positivity > 0
    assert rep.symmetry <= 1e-9
    assert rep.vnorm_gap <= 1e-8
    assert rep.passed(1e-8)


def test_zero_direction_is_trivial():
    rep = herglotz_check(lambda z: np.zeros((1, 1)), [1j])
    assert rep.positivity == 0 and rep.passed()


def _split_setup(sys, grid, pair, lam):
    out = []
    for z in (lam, lam.conjugate()):
        fs = integrate_fundamental(sys, z, grid)
        out.append(weyl_solutions(pair, fs, right_weyl_function(fs, RIGHT_DIRICHLET)))
    return out


@pytest.mark.parametrize("lam", LAMS)
def test_split_resolvent_matches_direct(sl, lam):
    sys, grid = sl
    R = Resolvent(sys, grid, CharacteristicOperator.from_pair(BoundaryPair.dirichlet(1), sys, grid))
    f = ExprFunction(["sin(t)"])
    wd, wdc = _split_setup(sys, grid, LEFT_DIRICHLET, lam)
    np.testing.assert_allclose(split_resolvent(R, wd, wdc, f), R.apply(f, lam).y1, atol=1e-8)
    assert np.all(split_resolvent(R, wd, wdc, ZeroFunction(1)) == 0)


def test_self_adjoint_robin_pair_matches_boundary_pair_route(sl):
    sys, grid = sl
    th = 0.7
    c, s = np.cos(th), np.sin(th)
    bp = BoundaryPair(np.array([[c, 0.0], [s, 0.0]]), np.array([[0.0, 0.0], [0.0, 1.0]]), "separated")
    R = Resolvent(sys, grid, CharacteristicOperator.from_pair(bp, sys, grid))
    f = ExprFunction(["t*(3-t)"])
    lam = 0.5 + 0.5j
    wd, wdc = _split_setup(sys, grid, _robin(th), lam)
    np.testing.assert_allclose(split_resolvent(R, wd, wdc, f), R.apply(f, lam).y1, atol=1e-7)


def test_rebuilt_operator_certifies(sl):
    sys, grid = sl
    pair = _robin(0.7)

    def proj(lam):
        return projection_from_pair(pair, _m(sys, grid, lam), lam)

    Mop = CharacteristicOperator.from_projection(proj, sys.G)
    trials = bump_trials(grid, 2, 3, np.random.default_rng(0))
    cert = verify_characteristic(Mop, sys, grid, trials, [1j, 0.5 + 0.5j], separated=True)
    assert cert.passed


def test_dissipative_pair_gives_strict_flux(sl):
    sys, grid = sl
    # a = 1, b = i: Im(a* b) / Im lam > 0 in the upper half-plane
    pair = NevanlinnaPair(np.eye(1), 1j * np.eye(1))
    assert pair.dissipation(1j) < 0

    def proj(lam):
        return projection_from_pair(pair, _m(sys, grid, lam), lam)

    Mop = CharacteristicOperator.from_projection(proj, sys.G)
    trials = bump_trials(grid, 2, 3, np.random.default_rng(0))
    cert = verify_characteristic(Mop, sys, grid, trials, [1j], contour=False)
    assert cert.flux[1j] < -1e-6
    # the same constant pair in the lower half-plane is accumulative and the flux changes sign
    assert pair.dissipation(-1j) > 0
    assert verify_characteristic(Mop, sys, grid, trials, [-1j], contour=False).flux[-1j] > 1e-6


def test_fourth_order_separated_round_trip():
    fam = random_family(1, 4, np.random.default_rng(5))
    sys = CanonicalSystem(fam, 0.0, 1.0)
    grid = Grid(0.0, 1.0, 400)
    Mop = CharacteristicOperator.from_pair(BoundaryPair.dirichlet(2), sys, grid)
    for lam in (1j, -0.5 + 1j):
        P, _ = char_projection(Mop(lam), sys.G)
        assert separation_check(P)[0] <= 1e-9
        fr = factor_projection(P)
        assert max(fr.residual_range, fr.residual_complement) <= 1e-9
