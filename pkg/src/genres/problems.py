"""Built-in problem families and random generators used by tests and configs."""
from __future__ import annotations

import numpy as np

from .coeff import Add, Const, Func, ImagUnit, MatrixExpr, Mul, Neg, ScalarExpr, Sub, Var, Div, Pow
from .expr import DiffExpression, LambdaFamily, WeightExpression

__all__ = [
    "conj_expr", "random_scalar", "random_matrix", "random_hermitian",
    "random_family", "sturm_liouville", "first_order_family", "fourth_order_family",
    "null_weight_family",
]


def conj_expr(e: ScalarExpr) -> ScalarExpr:
    """Complex conjugate of a lam-free expression (t is real)."""
    if e.depends_on("lam"):
        raise ValueError("conjugation is only defined for lam-free expressions")
    if isinstance(e, Const):
        return Const(complex(e.value).conjugate() if complex(e.value).imag else e.value)
    if isinstance(e, ImagUnit):
        return Neg(ImagUnit())
    if isinstance(e, Var):
        return e
    if isinstance(e, Neg):
        return Neg(conj_expr(e.a))
    if isinstance(e, (Add, Sub, Mul, Div)):
        return type(e)(conj_expr(e.a), conj_expr(e.b))
    if isinstance(e, Pow):
        return Pow(conj_expr(e.a), e.n)
    if isinstance(e, Func):
        return Func(e.name, conj_expr(e.a))
    raise TypeError(f"unsupported node {e!r}")


def _herm_expr(m: MatrixExpr) -> MatrixExpr:
    rows, cols = m.shape
    return MatrixExpr(tuple(tuple(conj_expr(m.entries[j][i]) for j in range(rows)) for i in range(cols)))


def random_scalar(rng: np.random.Generator, amp: float = 0.3, real: bool = False) -> ScalarExpr:
    """Smooth random scalar a + b sin(w t + c) with complex (or real) amplitudes."""
    def num():
        return complex(rng.normal() * amp, 0.0 if real else rng.normal() * amp)
    w, c = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0, np.pi))
    return Add(Const(num()), Mul(Const(num()), Func("sin", Add(Mul(Const(w), Var("t")), Const(c)))))


def random_matrix(d: int, rng: np.random.Generator, amp: float = 0.3, shift: float = 0.0) -> MatrixExpr:
    rows = []
    for i in range(d):
        row = []
        for j in range(d):
            e = random_scalar(rng, amp)
            if i == j and shift:
                e = Add(Const(shift), e)
            row.append(e)
        rows.append(tuple(row))
    return MatrixExpr(tuple(rows))


def random_hermitian(d: int, rng: np.random.Generator, amp: float = 0.3, shift: float = 0.0) -> MatrixExpr:
    a = random_matrix(d, rng, amp)
    ah = _herm_expr(a)
    rows = []
    for i in range(d):
        row = []
        for j in range(d):
            e = Mul(Const(0.5), Add(a.entries[i][j], ah.entries[i][j]))
            if i == j and shift:
                e = Add(Const(shift), e)
            row.append(e)
        rows.append(tuple(row))
    return MatrixExpr(tuple(rows))


def random_family(d: int, r: int, rng: np.random.Generator, s: int | None = None,
                  symmetric: bool = True, amp: float = 0.3) -> LambdaFamily:
    """Random family l - lam m with smooth coefficients and a definite weight.

    With ``symmetric`` the base expression is formally symmetric, so the
    family satisfies the conjugation symmetry of the coefficients.  The weight
    is diagonally dominant, hence positive semidefinite as a form.
    """
    n = r // 2
    s = 2 * n if s is None else s
    p, q, sv = [], [], []
    for j in range(n + 1):
        lead = (j == n and r % 2 == 0)
        shift = 2.0 if lead else 0.0
        p.append(random_hermitian(d, rng, amp, shift) if symmetric else random_matrix(d, rng, amp, shift))
    for j in range(1, (r + 1) // 2 + 1):
        lead = (r % 2 == 1 and j == n + 1)
        qj = random_matrix(d, rng, amp, 1.5 if lead else 0.0)
        q.append(qj)
        sv.append(_herm_expr(qj) if symmetric or lead else random_matrix(d, rng, amp))
    base = DiffExpression(d, r, p=p, q=q, s=sv)
    half = s // 2
    pt, qt = [], []
    for j in range(half + 1):
        pt.append(random_hermitian(d, rng, 0.1, 1.0 + 0.5 * j))
    for j in range(1, half + 1):
        qt.append(random_matrix(d, rng, 0.1))
    weight = WeightExpression(d, s, p=pt, q=qt)
    return LambdaFamily(base, weight)


# --------------------------------------------------------------------------
# the named problems of the test corpus
# --------------------------------------------------------------------------

def sturm_liouville(potential: str = "0") -> LambdaFamily:
    """-y'' + V y - lam y with weight 1 (d = 1, r = 2, s = 0)."""
    base = DiffExpression(1, 2, p=[potential, "1"])
    return LambdaFamily(base, WeightExpression(1, 0, p=["1"]))


def first_order_family() -> LambdaFamily:
    """l_lam = i D - lam on C (q_1 = s_1 = 1, weight 1)."""
    base = DiffExpression(1, 1, q=["1"], s=["1"])
    return LambdaFamily(base, WeightExpression(1, 0, p=["1"]))


def fourth_order_family() -> LambdaFamily:
    """y'''' - lam y (d = 1, r = 4, s = 0)."""
    base = DiffExpression(1, 4, p=["0", "0", "1"])
    return LambdaFamily(base, WeightExpression(1, 0, p=["1"]))


def null_weight_family() -> LambdaFamily:
    """-y'' - lam m[y] with the degenerate weight |f' - i f|^2 (p~1 = 1, q~1 = 2, p~0 = 1)."""
    base = DiffExpression(1, 2, p=["0", "1"])
    weight = WeightExpression(1, 2, p=["1", "1"], q=["2"])
    return LambdaFamily(base, weight)
