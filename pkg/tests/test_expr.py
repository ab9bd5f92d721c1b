import numpy as np
import pytest

from genres.expr import (DiffExpression, LambdaFamily, Padded, WeightExpression, eval_coefficient,
                         form_matrix, validate_family)
from genres.problems import first_order_family, random_family, sturm_liouville

TS = np.linspace(0.0, 1.0, 21)
LAMS = [1j, 2 + 0.5j, -1 - 1j, 0.3 + 2j]


def test_sturm_liouville_coefficients():
    fam = sturm_liouville()
    np.testing.assert_allclose(eval_coefficient(fam, "p", 0, 0.3, 1j), [[-1j]])
    np.testing.assert_allclose(eval_coefficient(fam, "p", 1, 0.7, 2 - 1j), [[1.0]])


def test_first_order_coefficient():
    np.testing.assert_allclose(eval_coefficient(first_order_family(), "q", 1, 0.1, 1j), [[1.0]])


def test_sturm_liouville_validates_exactly():
    rep = validate_family(sturm_liouville(), TS, LAMS)
    assert rep.passed
    assert rep.residuals["symmetry"] == 0.0


def test_herglotz_term_enters_with_minus_sign():
    # l_lam = -D^2 - lam + 1/(lam - 5); -1/(lam - 5) is a Herglotz function
    nev = DiffExpression(1, 2, p=["-1/(lam-5)", "0"])
    fam = LambdaFamily(DiffExpression(1, 2, p=["0", "1"]), WeightExpression(1, 0, p=["1"]), nev)
    np.testing.assert_allclose(eval_coefficient(fam, "p", 0, 0.0, 1j), [[-1j + 1 / (1j - 5)]])
    rep = validate_family(fam, TS, LAMS)
    assert rep.passed
    assert rep.residuals["dissipation"] <= 0.0


def test_weight_exceeding_imaginary_part_fails():
    # l_lam = -D^2 - lam while the declared weight is 2
    fam = LambdaFamily(DiffExpression(1, 2, p=["0", "1"]), WeightExpression(1, 0, p=["2"]),
                       DiffExpression(1, 2, p=["-lam", "0"]))
    rep = validate_family(fam, TS, [1j])
    assert not rep.passed
    assert rep.residuals["domination_gap"] == pytest.approx(-1.0)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
@pytest.mark.parametrize("d", [1, 2])
def test_random_families_validate(r, d):
    fam = random_family(d, r, np.random.default_rng(10 * r + d))
    assert validate_family(fam, TS, LAMS).passed


def test_weight_order_bound():
    with pytest.raises(ValueError):
        LambdaFamily(DiffExpression(1, 1, q=["1"], s=["1"]), WeightExpression(1, 2, p=["1", "1"]))


def test_nev_must_have_even_order():
    with pytest.raises(ValueError):
        LambdaFamily(DiffExpression(1, 4, p=["0", "0", "1"]), WeightExpression(1, 0, p=["1"]),
                     DiffExpression(1, 3, p=["0", "1"], q=["0", "1"], s=["0", "1"]))


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_adjoint_is_involutive(r):
    fam = random_family(2, r, np.random.default_rng(r), symmetric=False)
    L = fam.base
    a = L.coefficients(TS, 0.4 + 1j, 1)
    b = L.adjoint().adjoint().coefficients(TS, 0.4 + 1j, 1)
    for kind in ("p", "q", "s"):
        for j in range(5):
            try:
                x = a.get(kind, j)
            except (KeyError, IndexError, ValueError):
                continue
            np.testing.assert_allclose(b.get(kind, j), x, atol=1e-14)


def test_form_matrix_of_weight_is_psd():
    fam = random_family(2, 4, np.random.default_rng(3))
    F = form_matrix(fam.weight, TS, 0.0, 2)
    F = 0.5 * (F + np.conj(np.swapaxes(F, -1, -2)))
    assert np.min(np.linalg.eigvalsh(F)) >= -1e-12


def test_padding_keeps_coefficients():
    L = sturm_liouville().base
    P = Padded(L, 4)
    assert P.r == 4
    np.testing.assert_allclose(P.coefficients(TS, 0.0).get("p", 1), L.coefficients(TS, 0.0).get("p", 1))
