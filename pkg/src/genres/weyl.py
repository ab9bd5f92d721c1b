"""Separated boundary conditions: Nevanlinna pairs, Weyl functions and the split resolvent."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import qr

from .canon import herm
from .charop import _as_evaluator
from .forms import Grid, density_from_derivs
from .resolvent import Resolvent, solution_derivatives, weight_densities
from .solve import FundamentalSolution, cumulative_integral

__all__ = [
    "NevanlinnaPair", "WeylError", "right_weyl_function", "projection_from_pair",
    "complement_from_pair", "FactorResult", "factor_projection", "WeylData", "weyl_solutions",
    "split_resolvent", "HerglotzReport", "herglotz_check",
]


class WeylError(ArithmeticError):
    """A Weyl-type quantity is not defined at this lam."""


class NevanlinnaPair:
    """Left boundary data {-a(lam), b(lam)}: x(a) ranges over col(a, b) h.

    ``a`` and ``b`` are constant arrays, MatrixExpr of ``lam`` or callables.
    """

    def __init__(self, a, b):
        self._a, self._b = _as_evaluator(a), _as_evaluator(b)

    def a(self, lam) -> np.ndarray:
        return self._a(complex(lam))

    def b(self, lam) -> np.ndarray:
        return self._b(complex(lam))

    def hats(self, lam):
        """a^*(conj lam), b^*(conj lam)."""
        lc = complex(lam).conjugate()
        return herm(self.a(lc)), herm(self.b(lc))

    def K(self, lam) -> np.ndarray:
        ah, bh = self.hats(lam)
        return ah @ self.a(lam) + bh @ self.b(lam)

    def dissipation(self, lam) -> float:
        """Largest eigenvalue of Im lam * i(a^* b - b^* a) at lam, <= 0 for a Nevanlinna pair.

        Equivalently Im(a^* b) / Im lam >= 0; this is the sign for which the
        left boundary flux of the resolvent is nonpositive.
        """
        lam = complex(lam)
        a, b = self.a(lam), self.b(lam)
        F = 1j * (herm(a) @ b - herm(b) @ a)
        F = lam.imag * 0.5 * (F + herm(F))
        return float(np.max(np.linalg.eigvalsh(F)))


def right_weyl_function(fs: FundamentalSolution, Gamma: np.ndarray) -> np.ndarray:
    """m(lam) such that X(t) col(I, m) satisfies Gamma x(b) = 0 (fs anchored at a)."""
    if fs.anchor_index != 0:
        raise ValueError("the fundamental solution must be anchored at the left endpoint")
    Xb = fs.X[-1]
    k = Xb.shape[0] // 2
    A = Gamma @ Xb[:, k:]
    if np.linalg.cond(A) > 1e12:
        raise WeylError(f"right condition does not determine m at lam={fs.lam}")
    return -np.linalg.solve(A, Gamma @ Xb[:, :k])


def projection_from_pair(pair: NevanlinnaPair, m: np.ndarray, lam) -> np.ndarray:
    """P = col(I, m)(b^ - a^ m)^{-1}(b^, -a^) with a^ = a^*(conj lam), b^ = b^*(conj lam)."""
    ah, bh = pair.hats(lam)
    k = m.shape[0]
    mid = bh - ah @ m
    if np.linalg.cond(mid) > 1e12:
        raise WeylError(f"b^ - a^ m is singular at lam={lam}")
    return np.vstack([np.eye(k), m]) @ np.linalg.solve(mid, np.hstack([bh, -ah]))


def complement_from_pair(pair: NevanlinnaPair, m: np.ndarray, lam) -> np.ndarray:
    """I - P = col(a, b)(b - m a)^{-1}(-m, I)."""
    a, b = pair.a(lam), pair.b(lam)
    k = m.shape[0]
    return np.vstack([a, b]) @ np.linalg.solve(b - m @ a, np.hstack([-m, np.eye(k)]))


@dataclass
class FactorResult:
    m: np.ndarray
    ab: np.ndarray
    rows: np.ndarray
    residual_range: float
    residual_complement: float


def _range_basis(A: np.ndarray, k: int, order: np.ndarray | None = None) -> np.ndarray:
    if order is not None:
        A = A[:, order]
    Q, _, _ = qr(A, pivoting=True)
    return Q[:, :k]


def factor_projection(P: np.ndarray, tol: float = 1e-9, order: np.ndarray | None = None) -> FactorResult:
    """Weyl function m = B2 B1^{-1} from ran P, and col(a, b) from ker P.

    ``order`` permutes P's columns before the pivoted QR (the result must not
    depend on it).
    """
    D = P.shape[0]
    if D % 2:
        raise ValueError("separated data need an even dimension")
    k = D // 2
    res = float(np.linalg.norm(P @ P - P, 2))
    if res > tol * max(1.0, float(np.linalg.norm(P, 2))):
        raise WeylError(f"P is not a projection (||P^2 - P|| = {res:.3e})")
    B = _range_basis(P, k, order)
    B1, B2 = B[:k], B[k:]
    if np.linalg.cond(B1) > 1e12:
        raise WeylError("Weyl function not extractable: range of P is not a graph")
    m = B2 @ np.linalg.inv(B1)
    I = np.eye(D)
    ab = _range_basis(I - P, k, order)
    rows = P[:k]
    r64 = float(np.linalg.norm(np.vstack([np.eye(k), m]) @ rows - P, 2))
    a, b = ab[:k], ab[k:]
    comp = ab @ np.linalg.solve(b - m @ a, np.hstack([-m, np.eye(k)]))
    r65 = float(np.linalg.norm(comp - (I - P), 2))
    return FactorResult(m, ab, rows, r64, r65)


@dataclass
class WeylData:
    lam: complex
    U: np.ndarray
    V: np.ndarray
    K: np.ndarray
    mab: np.ndarray
    m: np.ndarray


def weyl_solutions(pair: NevanlinnaPair, fs: FundamentalSolution, m: np.ndarray) -> WeylData:
    """U = X col(a, b), V = X col(b, -a) K^{-1} + U m_ab."""
    lam = fs.lam
    a, b = pair.a(lam), pair.b(lam)
    ah, bh = pair.hats(lam)
    K = pair.K(lam)
    if np.linalg.cond(K) > 1e12:
        raise WeylError(f"K is singular at lam={lam}")
    den = bh - ah @ m
    if np.linalg.cond(den) > 1e12:
        raise WeylError(f"b^ - a^ m is singular at lam={lam}")
    mab = np.linalg.solve(K, (ah + bh @ m) @ np.linalg.inv(den))
    U = fs.X @ np.vstack([a, b])
    V = fs.X @ (np.vstack([b, -a]) @ np.linalg.inv(K)) + U @ mab
    return WeylData(lam, U, V, K, mab, m)


def split_resolvent(R: Resolvent, wd: WeylData, wdc: WeylData, f) -> np.ndarray:
    """y1(t) = sum_j v_j(t) int_a^t (u_j^(k)(s, conj lam))^* m_k[f] + u_j(t) int_t^b (v_j^(k))^* m_k[f].

    ``wdc`` holds the Weyl-type solutions at conj lam.
    """
    fam = R.family
    t = R.grid.nodes
    half = fam.weight.s // 2
    L = fam.l_lam
    lc = wdc.lam
    uc = solution_derivatives(L, fam.weight, wdc.U, t, lc, half)
    vc = solution_derivatives(L, fam.weight, wdc.V, t, lc, half)
    dens = weight_densities(fam.weight, f, t)
    gu = np.einsum("ktaj,kta->tj", np.conj(uc), dens)
    gv = np.einsum("ktaj,kta->tj", np.conj(vc), dens)
    cu = cumulative_integral(gu, R.grid.h)
    cv = cumulative_integral(gv, R.grid.h)
    d = fam.d
    u, v = wd.U[:, :d, :], wd.V[:, :d, :]
    return (np.einsum("taj,tj->ta", v, cu)
            + np.einsum("taj,tj->ta", u, cv[-1][None, :] - cv))


@dataclass
class HerglotzReport:
    positivity: float
    symmetry: float
    vnorm_gap: float

    def passed(self, tol: float = 1e-9) -> bool:
        return self.positivity >= -tol and self.symmetry <= tol and self.vnorm_gap <= tol


def herglotz_check(mab: Callable[[complex], np.ndarray], lams,
                   vnorm: Callable[[complex], np.ndarray] | None = None) -> HerglotzReport:
    """Smallest eigenvalue of Im m_ab / Im lam, symmetry m_ab(lam) = m_ab^*(conj lam).

    ``vnorm(lam)`` returns the Gram matrix int V^* W V (m-norm of the Weyl
    solutions); its excess over Im m_ab / Im lam is reported as ``vnorm_gap``.
    """
    pos, sym, gap = np.inf, 0.0, -np.inf
    for lam in lams:
        lam = complex(lam)
        M = mab(lam)
        im = (M - herm(M)) / (2j * lam.imag)
        pos = min(pos, float(np.min(np.linalg.eigvalsh(0.5 * (im + herm(im))))))
        Mc = mab(lam.conjugate())
        sym = max(sym, float(np.max(np.abs(M - herm(Mc)))) / max(1.0, float(np.max(np.abs(M)))))
        if vnorm is not None:
            Gm = vnorm(lam)
            diff = Gm - 0.5 * (im + herm(im))
            gap = max(gap, float(np.max(np.linalg.eigvalsh(0.5 * (diff + herm(diff))))))
    return HerglotzReport(pos, sym, gap if vnorm is not None else 0.0)


def weyl_gram(R: Resolvent, wd: WeylData) -> np.ndarray:
    """int m{V h_j, V h_i} over the grid, the m-Gram matrix of the Weyl solutions."""
    fam = R.family
    t = R.grid.nodes
    half = fam.weight.s // 2
    vd = solution_derivatives(fam.l_lam, fam.weight, wd.V, t, wd.lam, half)
    c = vd.shape[-1]
    out = np.zeros((c, c), dtype=complex)
    for i in range(c):
        for j in range(c):
            out[i, j] = R.grid.integrate(density_from_derivs(fam.weight, vd[..., j], vd[..., i], t))
    return out


__all__.append("weyl_gram")
