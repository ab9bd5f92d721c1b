"""Reduction of ``l[y] = m[f]`` to a first-order canonical system.

Conventions
-----------
For ``r = 2n`` the canonical vector is

    (y, y', ..., y^(n-1), y^[2n-1], ..., y^[n])

and for ``r = 2n+1`` the entry ``-i y^(n)`` is appended.  The system reads

    (i/2) ((Q x)' + S x') - H x = W F.

All builders are vectorised: pass an array of ``t`` and get arrays of shape
``(T, D, D)`` back (a scalar ``t`` gives ``(D, D)``).

Linear differential operators ``sum_j A_j(t) D^j`` are stored as coefficient
jets with shape ``(J, K+1, T, d, d)`` (see :mod:`genres.expr`), which makes
products, ``D`` and adjoints exact up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .coeff import Const, Func, MatrixExpr, Mul, Add, Var, ScalarExpr
from .expr import (Coefficients, Expression, LambdaFamily, Padded, WeightExpression,
                   imag_part)

__all__ = [
    "SmoothFunction", "ExprFunction", "ZeroFunction", "Applied", "random_smooth_function",
    "QuasiDerivativeTable", "quasi_derivatives", "build_Q", "build_S", "build_dQ",
    "build_H", "build_C", "build_W", "lift_F", "lift_solution", "wf_branch",
    "canonical_residual", "check_identities", "IdentityReport", "herm", "sys_dim",
]


def herm(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def sys_dim(e: Expression) -> int:
    return e.r * e.d


def _tarr(t):
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    return t_arr, np.ndim(t) == 0


def _out(arr, scalar):
    return arr[0] if scalar else arr


# --------------------------------------------------------------------------
# smooth functions
# --------------------------------------------------------------------------

class SmoothFunction:
    """A C^infinity vector function R -> C^d given through its derivative jets."""

    d: int

    def jet(self, t, k: int) -> np.ndarray:
        """Derivatives 0..k at the points ``t``: shape (k+1, T, d)."""
        raise NotImplementedError

    def __call__(self, t) -> np.ndarray:
        t_arr, scalar = _tarr(t)
        return _out(self.jet(t_arr, 0)[0], scalar)


class ExprFunction(SmoothFunction):
    """Vector function with components in the coefficient language (t only)."""

    def __init__(self, components, d: int | None = None):
        if isinstance(components, MatrixExpr):
            m = components
        else:
            if isinstance(components, (str, ScalarExpr, int, float, complex)):
                components = [components]
            m = MatrixExpr.build([[c] for c in components])
        if m.shape[1] != 1:
            raise ValueError("a smooth function is a column")
        if m.depends_on("lam"):
            raise ValueError("smooth functions must not depend on lam")
        self.expr = m
        self.d = m.shape[0]
        if d is not None and d != self.d:
            raise ValueError("dimension mismatch")
        self._chain = [m]

    def jet(self, t, k):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        while len(self._chain) <= k:
            self._chain.append(self._chain[-1].diff_t())
        return np.stack([c.evaluate(t)[..., 0] for c in self._chain[: k + 1]])

    def __repr__(self):
        return f"ExprFunction({[r[0] for r in self.expr.to_source()]})"


class ZeroFunction(SmoothFunction):
    def __init__(self, d: int):
        self.d = d

    def jet(self, t, k):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.zeros((k + 1, t.size, self.d), dtype=complex)


class Applied(SmoothFunction):
    """``L[f]`` as a smooth function (L evaluated at a fixed lambda)."""

    def __init__(self, L: Expression, f: SmoothFunction, lam=0.0):
        self.L, self.f, self.lam, self.d = L, f, complex(lam), f.d

    def jet(self, t, k):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tab = QuasiDerivativeTable(self.L, t, self.lam, extra=k)
        fj = self.f.jet(t, self.L.r + k)
        op = tab.ops[self.L.r]
        out = [_op_apply(op, fj)]
        for _ in range(k):
            op = _op_D(op)
            out.append(_op_apply(op, fj))
        return np.stack(out)


def random_smooth_function(d: int, rng: np.random.Generator, terms: int = 3,
                           freq: float = 2.0) -> ExprFunction:
    """Random trigonometric/exponential combination, exactly differentiable."""
    comps = []
    for _ in range(d):
        e: ScalarExpr | None = None
        for _ in range(terms):
            c = complex(rng.normal(), rng.normal())
            w = float(rng.uniform(-freq, freq))
            ph = float(rng.uniform(0, np.pi))
            kind = rng.choice(["sin", "cos", "exp"])
            arg = Add(Mul(Const(w), Var("t")), Const(ph)) if kind != "exp" else Mul(Const(w / 2), Var("t"))
            term = Mul(Const(c), Func(str(kind), arg))
            e = term if e is None else Add(e, term)
        comps.append(e)
    return ExprFunction(comps)


# --------------------------------------------------------------------------
# jet algebra for differential operators
# --------------------------------------------------------------------------

def _leibniz(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Jets of the matrix product a @ b; inputs (K+1, T, d, d)."""
    K = min(a.shape[0], b.shape[0]) - 1
    out = np.zeros((K + 1,) + np.broadcast_shapes(a.shape[1:-2], b.shape[1:-2])
                   + (a.shape[-2], b.shape[-1]), dtype=complex)
    for k in range(K + 1):
        for i in range(k + 1):
            out[k] += comb(k, i) * (a[i] @ b[k - i])
    return out


def _op_zero(J, K, T, d):
    return np.zeros((J, K + 1, T, d, d), dtype=complex)


def _op_basis(j, J, K, T, d):
    A = _op_zero(J, K, T, d)
    A[j, 0] = np.eye(d)
    return A


def _op_D(A):
    """D o (sum_j A_j D^j) = sum_j (A_j' D^j + A_j D^{j+1})."""
    J, K1 = A.shape[:2]
    if K1 < 2:
        raise ValueError("jet depth exhausted")
    out = A[:, 1:].copy()
    out[1:] += A[:-1, :-1]
    if np.any(A[-1, 0] != 0):
        raise ValueError("operator order overflow")
    return out


def _op_lmul(c, A):
    """c(t) o A with c given as jets (K+1, T, d, d)."""
    K = min(c.shape[0], A.shape[1]) - 1
    return np.stack([_leibniz(c[: K + 1], A[j, : K + 1]) for j in range(A.shape[0])])


def _trunc(A, K):
    return A[:, : K + 1]


def _op_add(*ops):
    K = min(o.shape[1] for o in ops) - 1
    out = _trunc(ops[0], K).copy()
    for o in ops[1:]:
        out += _trunc(o, K)
    return out


def _op_apply(A, fder):
    """Value of (sum_j A_j D^j) f, with ``fder`` of shape (>=J, T, d)."""
    J = A.shape[0]
    acc = np.zeros(fder.shape[1:], dtype=complex)
    for j in range(min(J, fder.shape[0])):
        if np.any(A[j, 0]):
            acc += np.einsum("tab,tb->ta", A[j, 0], fder[j])
    for j in range(fder.shape[0], J):
        if np.any(A[j, 0]):
            raise ValueError("not enough derivatives of f supplied")
    return acc


class QuasiDerivativeTable:
    """Quasi-derivatives f^[k](t|L), k = 0..r, as operators on classical derivatives.

    ``ops[k]`` has shape (r+extra+2, extra+1, T, d, d); entry ``[j, i]`` is the i-th
    t-derivative of the coefficient multiplying f^(j).
    """

    def __init__(self, L: Expression, t, lam, extra: int = 0, order: int | None = None):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r = L.r if order is None else order
        self.r, self.d, self.T = r, L.d, t.size
        n = r // 2
        depth = (r + 1) // 2 + extra
        co = L.coefficients(t, lam, depth)
        J, d, T = r + 2 + extra, L.d, t.size
        ops: list = [None] * (r + 1)
        for j in range(n):
            ops[j] = _op_basis(j, J, depth, T, d)
        if r == 0:
            ops[0] = _op_lmul(co.jet("p", 0), _op_basis(0, J, depth, T, d))
        elif r % 2 == 0:
            ops[n] = _op_add(_op_lmul(co.jet("p", n), _op_basis(n, J, depth, T, d)),
                             _op_lmul(-0.5j * co.jet("q", n), _op_basis(n - 1, J, depth, T, d)))
        else:
            ops[n] = _op_lmul(-0.5j * co.jet("q", n + 1), _op_basis(n, J, depth, T, d))
        for j in range((r - 1) // 2, -1, -1):
            if r == 0:
                break
            prev = ops[r - j - 1]
            terms = [-_op_D(prev), _op_lmul(co.jet("p", j), _op_basis(j, J, depth, T, d)),
                     _op_lmul(0.5j * co.jet("s", j + 1), _op_basis(j + 1, J, depth, T, d))]
            if j >= 1:
                terms.append(_op_lmul(-0.5j * co.jet("q", j), _op_basis(j - 1, J, depth, T, d)))
            ops[r - j] = _op_add(*terms)
        self.ops = [_trunc(o, extra) for o in ops]
        self.extra = extra

    def values(self, fder: np.ndarray, k: int, deriv: int = 0) -> np.ndarray:
        """``(f^[k])^(deriv)`` at the table's points; ``fder`` are classical derivatives."""
        op = self.ops[k]
        for _ in range(deriv):  # noqa: B007
            op = _op_D(op)
        return _op_apply(op, fder)


def quasi_derivatives(L: Expression, f: SmoothFunction, t, lam) -> np.ndarray:
    """Values f^[k](t|L) for k = 0..r; shape (r+1, T, d) (or (r+1, d) for scalar t)."""
    t_arr, scalar = _tarr(t)
    tab = QuasiDerivativeTable(L, t_arr, lam)
    fd = f.jet(t_arr, L.r + 1)
    vals = np.stack([tab.values(fd, k) for k in range(L.r + 1)])
    return vals[:, 0] if scalar else vals


# --------------------------------------------------------------------------
# block matrices
# --------------------------------------------------------------------------

def _set(M, i, j, d, val):
    M[:, i * d:(i + 1) * d, j * d:(j + 1) * d] = val


def _add(M, i, j, d, val):
    M[:, i * d:(i + 1) * d, j * d:(j + 1) * d] += val


def _Jblock(n, d):
    D = 2 * n * d
    Q = np.zeros((D, D), dtype=complex)
    Q[: n * d, n * d:] = 1j * np.eye(n * d)
    Q[n * d:, : n * d] = -1j * np.eye(n * d)
    return Q


def _QS(L: Expression, t, lam, kind: str, deriv: int = 0):
    t_arr, scalar = _tarr(t)
    r, d = L.r, L.d
    n = r // 2
    D = r * d
    out = np.zeros((t_arr.size, D, D), dtype=complex)
    if deriv == 0 and n > 0:
        out[:, : 2 * n * d, : 2 * n * d] = _Jblock(n, d)
    if r % 2 == 1:
        co = L.coefficients(t_arr, lam, deriv)
        out[:, 2 * n * d:, 2 * n * d:] = co.get(kind, n + 1, deriv)
    return _out(out, scalar)


def build_Q(L: Expression, t=0.0, lam=0.0) -> np.ndarray:
    """Q(t, L): J/i for even order, J/i (+) q_{n+1} for odd order."""
    return _QS(L, t, lam, "q")


def build_S(L: Expression, t=0.0, lam=0.0) -> np.ndarray:
    return _QS(L, t, lam, "s")


def build_dQ(L: Expression, t=0.0, lam=0.0) -> np.ndarray:
    """Q'(t, L), from the exact derivative of q_{n+1}."""
    return _QS(L, t, lam, "q", deriv=1)


def _inv(a):
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError("singular leading coefficient") from err


def build_H(L: Expression, t, lam=0.0) -> np.ndarray:
    """H(t, L) assembled block by block."""
    t_arr, scalar = _tarr(t)
    r, d, T = L.r, L.d, t_arr.size
    n = r // 2
    co = L.coefficients(t_arr, lam, 0)
    p, q, s = (lambda j: co.get("p", j)), (lambda j: co.get("q", j)), (lambda j: co.get("s", j))
    H = np.zeros((T, r * d, r * d), dtype=complex)
    I = np.eye(d)
    if r == 1:
        H[:] = -p(0)
        return _out(H, scalar)
    for j in range(1, n):
        _set(H, j, j - 1, d, 0.5j * q(j))
        _set(H, j - 1, j, d, -0.5j * s(j))
    if r % 2 == 0:
        pinv = _inv(p(n))
        for j in range(n - 1):
            _set(H, j, j, d, -p(j))
        _set(H, n - 1, n - 1, d, 0.25 * s(n) @ pinv @ q(n) - p(n - 1))
        for j in range(1, n):
            _set(H, j, n + j - 1, d, I)
            _set(H, n + j - 1, j, d, I)
        _set(H, n - 1, 2 * n - 1, d, -0.5j * s(n) @ pinv)
        _set(H, 2 * n - 1, n - 1, d, 0.5j * pinv @ q(n))
        _set(H, 2 * n - 1, 2 * n - 1, d, pinv)
    else:
        for j in range(n):
            _set(H, j, j, d, -p(j))
        for j in range(2, n + 1):
            _set(H, j - 1, n + j - 2, d, I)
            _set(H, n + j - 2, j - 1, d, I)
        _set(H, n - 1, 2 * n, d, 0.5 * s(n))
        _set(H, 2 * n, n - 1, d, 0.5 * q(n))
        _set(H, 2 * n, 2 * n - 1, d, -1j * I)
        _set(H, 2 * n - 1, 2 * n, d, 1j * I)
        _set(H, 2 * n, 2 * n, d, -p(n))
    return _out(H, scalar)


def _slot(k: int, n: int) -> int:
    """Position of derivative / quasi-derivative k in the even-order layout."""
    return k if k < n else n + (2 * n - 1 - k)


def build_C(L: Expression, t, lam=0.0) -> np.ndarray:
    """C(t, L): classical derivatives -> quasi-derivatives (even order only)."""
    if L.r % 2:
        raise ValueError("C is defined for even order only")
    t_arr, scalar = _tarr(t)
    r, d = L.r, L.d
    n = r // 2
    tab = QuasiDerivativeTable(L, t_arr, lam)
    C = np.zeros((t_arr.size, r * d, r * d), dtype=complex)
    for k in range(r):
        A = tab.ops[k]
        for j in range(A.shape[0]):
            if not np.any(A[j, 0]):
                continue
            if j >= r:
                raise ValueError("quasi-derivative exceeds the classical layout")
            _set(C, _slot(k, n), _slot(j, n), d, A[j, 0])
    return _out(C, scalar)


def _weight_blocks(mco: Coefficients, r: int, d: int, T: int) -> np.ndarray:
    """The middle factor of W (even r) or W itself (odd r)."""
    n = r // 2
    pt, qt, st = (lambda j: mco.get("p", j)), (lambda j: mco.get("q", j)), (lambda j: mco.get("s", j))
    Mb = np.zeros((T, r * d, r * d), dtype=complex)
    if r == 1:
        Mb[:] = pt(0)
        return Mb
    for j in range(n):
        _set(Mb, j, j, d, pt(j))
    for j in range(1, n):
        _set(Mb, j, j - 1, d, -0.5j * qt(j))
        _set(Mb, j - 1, j, d, 0.5j * st(j))
    if r % 2 == 0:
        _set(Mb, n - 1, 2 * n - 1, d, 0.5j * st(n))
        _set(Mb, 2 * n - 1, n - 1, d, -0.5j * qt(n))
        _set(Mb, 2 * n - 1, 2 * n - 1, d, pt(n))
    else:
        _set(Mb, n - 1, 2 * n, d, -0.5 * st(n))
        _set(Mb, 2 * n, n - 1, d, -0.5 * qt(n))
        _set(Mb, 2 * n, 2 * n, d, pt(n))
    return Mb


def build_W(L: Expression, m: Expression, t, lam=0.0) -> np.ndarray:
    """W(t, L, m).  ``m`` may be any expression whose order does not exceed 2*floor(r/2)."""
    t_arr, scalar = _tarr(t)
    r, d = L.r, L.d
    mco = m.coefficients(t_arr, lam, 0)
    Mb = _weight_blocks(mco, r, d, t_arr.size)
    if r % 2 == 1:
        return _out(Mb, scalar)
    Cinv = np.linalg.inv(build_C(L, t_arr, lam))
    return _out(herm(Cinv) @ Mb @ Cinv, scalar)


# --------------------------------------------------------------------------
# lift maps
# --------------------------------------------------------------------------

def _weight_order(m: Expression) -> int:
    return m.s if isinstance(m, WeightExpression) else m.r - (m.r % 2)


def lift_F(f: SmoothFunction, L: Expression, m: Expression, t, lam=0.0) -> np.ndarray:
    """F(t, L, m): the right-hand side data in canonical coordinates."""
    t_arr, scalar = _tarr(t)
    r, d = L.r, L.d
    n = r // 2
    s = _weight_order(m)
    fd = f.jet(t_arr, max(r, s) + 1)
    F = np.zeros((t_arr.size, r * d), dtype=complex)
    if r == 1:
        F[:] = fd[0]
    elif s < 2 * n:
        for j in range(s // 2 + 1):
            F[:, j * d:(j + 1) * d] = fd[j]
    elif r % 2 == 1:
        for j in range(n):
            F[:, j * d:(j + 1) * d] = fd[j]
        F[:, 2 * n * d:] = -1j * fd[n]
    else:
        tab = QuasiDerivativeTable(L, t_arr, lam)
        for j in range(n):
            F[:, j * d:(j + 1) * d] = fd[j]
        for j in range(1, n + 1):
            F[:, (n + j - 1) * d:(n + j) * d] = tab.values(fd, r - j)
    return _out(F, scalar)


def _m_part(f, m, t_arr, n, extra=0):
    """f^[s-j](t|m) for j = 1..n (zero where s - j < s/2); list of (extra+1, T, d) jets."""
    s = _weight_order(m)
    d = m.d
    out = [np.zeros((extra + 1, t_arr.size, d), dtype=complex) for _ in range(n)]
    if s == 0:
        return out
    tab = QuasiDerivativeTable(m, t_arr, 0.0, extra=extra, order=s)
    fd = f.jet(t_arr, s + extra + 1)
    for j in range(1, n + 1):
        k = s - j
        if k >= s // 2:
            out[j - 1] = np.stack([tab.values(fd, k, i) for i in range(extra + 1)])
    return out


def lift_solution(y: SmoothFunction, f: SmoothFunction, L: Expression, m: Expression,
                  t, lam=0.0, deriv: int = 0) -> np.ndarray:
    """The canonical vector built from a solution ``y`` of ``L[y] = m[f]``.

    With ``deriv > 0`` the t-derivatives are returned as well, stacked on a
    leading axis of length ``deriv + 1``.
    """
    t_arr, scalar = _tarr(t)
    r, d = L.r, L.d
    n = r // 2
    T = t_arr.size
    yd = y.jet(t_arr, r + deriv + 1)
    X = np.zeros((deriv + 1, T, r * d), dtype=complex)
    if r == 1:
        X[:, :, :] = yd[: deriv + 1]
    else:
        tab = QuasiDerivativeTable(L, t_arr, lam, extra=deriv)
        mp = _m_part(f, m, t_arr, n, extra=deriv)
        for i in range(deriv + 1):
            for j in range(n):
                X[i, :, j * d:(j + 1) * d] = yd[j + i]
            for j in range(1, n + 1):
                X[i, :, (n + j - 1) * d:(n + j) * d] = tab.values(yd, r - j, i) - mp[j - 1][i]
            if r % 2 == 1:
                X[i, :, 2 * n * d:] = -1j * yd[n + i]
    out = X[0] if deriv == 0 else X
    if scalar:
        return out[0] if deriv == 0 else out[:, 0]
    return out


def wf_branch(f: SmoothFunction, L: Expression, m: Expression, t, lam=0.0) -> np.ndarray:
    """W(t, L*, m) F(t, L*, m) by the branch formulas (no C inversion)."""
    t_arr, scalar = _tarr(t)
    r, d = L.r, L.d
    n = r // 2
    s = _weight_order(m)
    T = t_arr.size
    out = np.zeros((T, r * d), dtype=complex)
    if s == 0:
        mco = m.coefficients(t_arr, lam, 0)
        out[:, :d] = np.einsum("tab,tb->ta", mco.get("p", 0), f.jet(t_arr, 0)[0])
        return _out(out, scalar)
    tab = QuasiDerivativeTable(m, t_arr, lam, extra=1, order=s)
    fd = f.jet(t_arr, s + 2)
    for j in range(s // 2):
        out[:, j * d:(j + 1) * d] = tab.values(fd, s - j) + tab.values(fd, s - j - 1, 1)
    top = tab.values(fd, s // 2)
    if s < 2 * n:
        out[:, (s // 2) * d:(s // 2 + 1) * d] = top
    elif r % 2 == 1:
        out[:, 2 * n * d:] = -1j * top
    else:
        v = np.zeros((T, r * d), dtype=complex)
        v[:, (2 * n - 1) * d:] = top
        out += np.einsum("tab,tb->ta", build_H(L, t_arr, lam), v)
    return _out(out, scalar)


def canonical_residual(L: Expression, x: np.ndarray, dx: np.ndarray, rhs: np.ndarray, t, lam=0.0):
    """Pointwise (i/2)((Q x)' + S x') - H x - rhs for sampled x, x'."""
    t_arr, _ = _tarr(t)
    Q, S, dQ = build_Q(L, t_arr, lam), build_S(L, t_arr, lam), build_dQ(L, t_arr, lam)
    H = build_H(L, t_arr, lam)
    mv = lambda A, v: np.einsum("tab,tb->ta", A, v)  # noqa: E731
    return 0.5j * (mv(dQ, x) + mv(Q, dx) + mv(S, dx)) - mv(H, x) - rhs


# --------------------------------------------------------------------------
# identity checks
# --------------------------------------------------------------------------

@dataclass
class IdentityReport:
    residuals: dict = field(default_factory=dict)

    def update(self, name, value):
        self.residuals[name] = max(self.residuals.get(name, 0.0), float(value))


def _maxnorm(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def check_identities(fam: LambdaFamily, ts, lams, rng: np.random.Generator | None = None,
                     n_functions: int = 2) -> IdentityReport:
    """Residuals of the structural identities over sampled (t, lambda).

    ``imH_vs_W`` : |Im H(l_lam) - W(l_lam, -Im l_lam)|
    ``W_imL_plus_imH`` : |W(l_lam, Im l_lam) + Im H(l_lam)|
    ``padding`` : quasi-derivatives after formally raising the order
    ``branch_vs_product`` : W F by branch formulas vs the matrix product
    ``null_components`` : W F with random data in the null components of F
    """
    rng = np.random.default_rng(0) if rng is None else rng
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    rep = IdentityReport()
    L = fam.l_lam
    imL = imag_part(L)
    r, d = fam.r, fam.d
    n = r // 2
    for lam in lams:
        lam = complex(lam)
        H = build_H(L, ts, lam)
        imH = (H - herm(H)) / 2j
        rep.update("imH_vs_W", _maxnorm(imH - build_W(L, imL.scaled(-1.0), ts, lam)))
        rep.update("W_imL_plus_imH", _maxnorm(build_W(L, imL, ts, lam) + imH))
        # order padding: quasi-derivatives of the padded expression
        padded = Padded(L, r + 2)
        for _ in range(n_functions):
            f = random_smooth_function(d, rng)
            fd = f.jet(ts, r + 4)
            base = QuasiDerivativeTable(L, ts, lam)
            big = QuasiDerivativeTable(padded, ts, lam)
            res = 0.0
            for j in range(0, (r + 1) // 2 + 1):
                res = max(res, _maxnorm(big.values(fd, r + 2 - j) - base.values(fd, r - j)))
            for j in range((r + 1) // 2 + 1, (r + 2) // 2 + 1):
                res = max(res, _maxnorm(big.values(fd, r + 2 - j)))
            rep.update("padding", res)
            # W F: branch formula against product, and null-component freedom
            Ladj = L.adjoint()
            Wm = build_W(Ladj, fam.weight, ts, lam)
            F = lift_F(f, Ladj, fam.weight, ts, lam)
            prod = np.einsum("tab,tb->ta", Wm, F)
            branch = wf_branch(f, L, fam.weight, ts, lam)
            scale = max(1.0, _maxnorm(prod))
            rep.update("branch_vs_product", _maxnorm(prod - branch) / scale)
            mask = _null_mask(r, d, n, fam.s)
            noise = (rng.normal(size=F.shape) + 1j * rng.normal(size=F.shape)) * mask
            prod2 = np.einsum("tab,tb->ta", Wm, F + noise)
            rep.update("null_components", _maxnorm(prod2 - prod) / scale)
    return rep


def _null_mask(r, d, n, s):
    """Components of F that are structurally zero in the lifted right-hand side."""
    mask = np.zeros(r * d)
    if r == 1:
        return mask
    if s < 2 * n:
        mask[(s // 2 + 1) * d:] = 1.0
    elif r % 2 == 1:
        mask[n * d: 2 * n * d] = 1.0
    return mask
