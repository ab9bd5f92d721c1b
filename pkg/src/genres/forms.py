"""Dirichlet forms, the weighted semi-inner product and null-vector detection.

The pairing convention is ``(u, v) = v^H u``, linear in the first slot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canon import (SmoothFunction, build_W, herm, lift_F, lift_solution)
from .expr import Expression, LambdaFamily, WeightExpression, form_matrix, imag_part

__all__ = [
    "Grid", "form_density", "density_from_derivs", "form_integral", "null_check",
    "NullCheck", "relation_checks", "derivative_stack",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [a, b] with an even number of cells and Simpson weights."""

    a: float
    b: float
    N: int

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise ValueError("N must be even and at least 8")
        if not self.b > self.a:
            raise ValueError("need a < b")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.N + 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(self.N + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * self.h / 3.0

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Simpson rule along the first axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def index(self, t: float) -> int:
        k = (t - self.a) / self.h
        kr = int(round(k))
        if abs(k - kr) > 1e-9 or not 0 <= kr <= self.N:
            raise ValueError(f"{t} is not a grid node")
        return kr

    def sub(self, alpha: float, beta: float) -> "Grid":
        """The part of the grid between two nodes (cell count must be even)."""
        i, j = self.index(alpha), self.index(beta)
        return Grid(self.nodes[i], self.nodes[j], j - i)


def derivative_stack(f: SmoothFunction, t, k: int) -> np.ndarray:
    """Derivatives 0..k of f at t, shape (k+1, T, d)."""
    return f.jet(np.atleast_1d(np.asarray(t, dtype=float)), k)


def _top(L: Expression) -> int:
    return (L.r + 1) // 2


def density_from_derivs(L: Expression, fd: np.ndarray, gd: np.ndarray, t, lam=0.0) -> np.ndarray:
    """L{f, g} from derivative stacks (missing high derivatives count as zero)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    top = _top(L)
    d = L.d
    M = form_matrix(L, t, lam, top)

    def vec(xd):
        v = np.zeros((t.size, (top + 1) * d), dtype=complex)
        k = min(top + 1, xd.shape[0])
        v[:, : k * d] = np.moveaxis(xd[:k], 0, 1).reshape(t.size, k * d)
        return v

    return np.einsum("ta,tab,tb->t", np.conj(vec(gd)), M, vec(fd))


def form_density(L: Expression, f: SmoothFunction, g: SmoothFunction, t, lam=0.0):
    """Pointwise Dirichlet density L{f, g}."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    top = _top(L)
    val = density_from_derivs(L, f.jet(t_arr, top), g.jet(t_arr, top), t_arr, lam)
    return complex(val[0]) if np.ndim(t) == 0 else val


def form_integral(L: Expression, f: SmoothFunction, g: SmoothFunction, grid: Grid, lam=0.0) -> complex:
    """L[f, g] by composite Simpson quadrature."""
    return complex(grid.integrate(form_density(L, f, g, grid.nodes, lam)))


@dataclass
class NullCheck:
    is_null: bool
    form_value: float
    pointwise: float
    scale: float


def null_check(m: WeightExpression, f: SmoothFunction, grid: Grid, tol: float = 1e-10) -> NullCheck:
    """Decide whether ``m[f, f]`` vanishes, with the pointwise cross-check.

    The pointwise residual is the size of the form matrix of ``m`` applied to
    col(f, ..., f^(s/2)); it vanishes exactly for null functions.
    """
    t = grid.nodes
    half = m.s // 2
    fd = f.jet(t, half)
    scale = max(1.0, float(np.real(grid.integrate(np.sum(np.abs(fd) ** 2, axis=(0, 2))))))
    val = float(np.real(form_integral(m, f, f, grid)))
    M = form_matrix(m, t, 0.0, half)
    v = np.moveaxis(fd, 0, 1).reshape(t.size, -1)
    pw = float(np.max(np.abs(np.einsum("tab,tb->ta", M, v)), initial=0.0))
    return NullCheck(val <= tol * scale, val, pw, scale)


def relation_checks(fam: LambdaFamily, f1: SmoothFunction, f2: SmoothFunction, y: SmoothFunction,
                    t, lam) -> dict:
    """Pointwise residuals of the three form relations for ``l = l_lam`` and ``m``.

    ``weight_form``: (W(l, m) F1, F2) - m{f1, f2}
    ``imag_balance``: (W(l, -Im l) Y, Y) - Im (W(l*, m*) Y, F(l*)) + (Im l){y, y} + Im m*{y, f1}
    ``skew_balance``: m{y, f2} - m{f1, y} against the two weighted pairings
    Each is returned as the maximum absolute value over ``t``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    L, m = fam.l_lam, fam.weight
    Ls = L.adjoint()
    ms = m.adjoint()
    imL = imag_part(L)
    ip = lambda u, v: np.einsum("ta,ta->t", u, np.conj(v))  # noqa: E731
    mv = lambda A, v: np.einsum("tab,tb->ta", A, v)  # noqa: E731
    top = max(_top(L), _top(m))
    dens = lambda E, a, b: density_from_derivs(E, a.jet(t, top), b.jet(t, top), t, lam)  # noqa: E731

    W = build_W(L, m, t, lam)
    F1, F2 = lift_F(f1, L, m, t, lam), lift_F(f2, L, m, t, lam)
    r34 = ip(mv(W, F1), F2) - dens(m, f1, f2)

    Y = lift_solution(y, f1, L, m, t, lam)
    Wn = build_W(L, imL.scaled(-1.0), t, lam)
    Wss = build_W(Ls, ms, t, lam)
    F1s = lift_F(f1, Ls, m, t, lam)
    lhs35 = ip(mv(Wn, Y), Y) - np.imag(ip(mv(Wss, Y), F1s))
    rhs35 = -dens(imL, y, y) - np.imag(dens(ms, y, f1))
    r35 = lhs35 - rhs35

    Y1 = lift_solution(y, f1, L, m, t, lam)
    Y2 = lift_solution(y, f2, Ls, ms, t, lam)
    W1 = build_W(Ls, m, t, lam)
    lhs36 = dens(m, y, f2) - dens(m, f1, y)
    rhs36 = ip(mv(W, Y1), F2) - ip(mv(W1, F1s), Y2)
    r36 = lhs36 - rhs36
    return {"weight_form": float(np.max(np.abs(r34))),
            "imag_balance": float(np.max(np.abs(r35))),
            "skew_balance": float(np.max(np.abs(r36)))}
