"""Fundamental solutions of the canonical system and derived Gram data."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from .canon import build_dQ, build_H, build_Q, build_S, build_W, herm
from .expr import LambdaFamily, imag_part
from .forms import Grid

__all__ = [
    "CanonicalSystem", "FundamentalSolution", "integrate_fundamental", "lagrange_residual",
    "LagrangeReport", "DeltaData", "delta_matrix", "definiteness_check", "Definiteness",
    "null_space_angle", "cumulative_integral",
]


class CanonicalSystem:
    """Canonical system data of ``l_lam[y] = m[f]`` on [a, b].

    ``ReQ`` is taken as (Q + S)/2, which is the Hermitian part of Q whenever
    the leading odd coefficients satisfy s_{n+1} = q_{n+1}^*.
    """

    def __init__(self, family: LambdaFamily, a: float, b: float, t0: float | None = None):
        self.family = family
        self.L = family.l_lam
        self.m = family.weight
        self.a, self.b = float(a), float(b)
        self.t0 = self.a if t0 is None else float(t0)
        if not self.a <= self.t0 <= self.b:
            raise ValueError("anchor outside the interval")
        self.D = family.r * family.d
        self.G = self.ReQ(self.t0)
        self._imL_scaled = imag_part(self.L, lambda lam: -1.0 / complex(lam).imag)

    # evaluators -------------------------------------------------------------
    def Q(self, t, lam=0.0):
        return build_Q(self.L, t, lam)

    def S(self, t, lam=0.0):
        return build_S(self.L, t, lam)

    def dQ(self, t, lam=0.0):
        return build_dQ(self.L, t, lam)

    def ReQ(self, t, lam=0.0):
        return 0.5 * (self.Q(t, lam) + self.S(t, lam))

    def H(self, t, lam):
        return build_H(self.L, t, lam)

    def W(self, t, lam):
        """W(t, l_lam, m)."""
        return build_W(self.L, self.m, t, lam)

    def nevweight(self, t, lam):
        """W(t, l_lam, -Im l_lam / Im lam), equal to Im H / Im lam."""
        return build_W(self.L, self._imL_scaled, t, lam)

    def generator(self, t, lam):
        """A(t) with x' = A x for the homogeneous system."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        R = self.ReQ(t, lam)
        rhs = -1j * self.H(t, lam) - 0.5 * self.dQ(t, lam)
        try:
            return np.linalg.solve(R, rhs)
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError("Re Q(t) is singular on the grid") from err


@dataclass
class FundamentalSolution:
    lam: complex
    grid: Grid
    t0: float
    X: np.ndarray
    Xinv: np.ndarray
    substeps: int
    meta: dict = field(default_factory=dict)

    @property
    def anchor_index(self) -> int:
        return self.grid.index(self.t0)


def _rk4_propagators(A0, Am, A1, h):
    """One classical RK4 step of the linear flow as a matrix, batched over steps."""
    I = np.eye(A0.shape[-1])
    k1 = A0
    k2 = Am @ (I + 0.5 * h * k1)
    k3 = Am @ (I + 0.5 * h * k2)
    k4 = A1 @ (I + h * k3)
    return I + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_fundamental(sys: CanonicalSystem, lam, grid: Grid, substeps: int = 4) -> FundamentalSolution:
    """X_lam on the grid nodes with X_lam(t0) = I (fixed-step RK4, ``substeps`` per cell)."""
    lam = complex(lam)
    if abs(grid.a - sys.a) > 1e-12 or abs(grid.b - sys.b) > 1e-12:
        raise ValueError("grid does not match the system interval")
    K = int(substeps)
    M = grid.N * K
    h = (grid.b - grid.a) / M
    tf = grid.a + 0.5 * h * np.arange(2 * M + 1)
    A = sys.generator(tf, lam)
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("non-finite coefficients on the grid")
    A0, Am, A1 = A[0:-1:2], A[1::2], A[2::2]
    fwd = _rk4_propagators(A0, Am, A1, h)
    bwd = _rk4_propagators(A1, Am, A0, -h)
    i0 = grid.index(sys.t0) * K
    D = sys.D
    Xf = np.empty((M + 1, D, D), dtype=complex)
    Xf[i0] = np.eye(D)
    for k in range(i0, M):
        Xf[k + 1] = fwd[k] @ Xf[k]
    for k in range(i0 - 1, -1, -1):
        Xf[k] = bwd[k] @ Xf[k + 1]
    X = Xf[::K].copy()
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("integration produced non-finite values")
    Xinv = np.linalg.inv(X)
    return FundamentalSolution(lam, grid, sys.t0, X, Xinv, K, {"steps": M, "h": h})


@dataclass
class LagrangeReport:
    residual: float
    relative: float
    monotone_max_eig: float
    shortcut_gap: float


def lagrange_residual(sys: CanonicalSystem, fs: FundamentalSolution, fs_conj: FundamentalSolution) -> LagrangeReport:
    """max_t |X_{conj lam}^*(t) ReQ(t) X_lam(t) - G| and the monotonicity check at a.

    ``shortcut_gap`` compares X_{conj lam}^* with G X_lam^{-1} ReQ^{-1}.
    """
    if fs.grid != fs_conj.grid:
        raise ValueError("grids differ")
    t = fs.grid.nodes
    R = sys.ReQ(t)
    prod = herm(fs_conj.X) @ R @ fs.X
    res = float(np.max(np.linalg.norm(prod - sys.G, ord=2, axis=(-2, -1))))
    gnorm = float(np.linalg.norm(sys.G, 2))
    Xa = fs.X[0]
    mono = fs.lam.imag * (herm(Xa) @ R[0] @ Xa - sys.G)
    mono = 0.5 * (mono + herm(mono))
    short = sys.G @ fs.Xinv @ np.linalg.inv(R)
    gap = float(np.max(np.abs(short - herm(fs_conj.X))))
    return LagrangeReport(res, res / gnorm, float(np.max(np.linalg.eigvalsh(mono))), gap)


def cumulative_integral(values: np.ndarray, h: float) -> np.ndarray:
    """Running integral from the first node, fourth-order accurate.

    Interior cells use the cubic through the four surrounding nodes; the
    first and last cells use one-sided cubics.  Works along axis 0.
    """
    g = np.asarray(values)
    n = g.shape[0] - 1
    if n < 3:
        raise ValueError("need at least four nodes")
    cell = np.empty((n,) + g.shape[1:], dtype=np.result_type(g, float))
    cell[1:n - 1] = (-g[0:n - 2] + 13 * g[1:n - 1] + 13 * g[2:n] - g[3:n + 1]) * (h / 24.0)
    cell[0] = (9 * g[0] + 19 * g[1] - 5 * g[2] + g[3]) * (h / 24.0)
    cell[n - 1] = (9 * g[n] + 19 * g[n - 1] - 5 * g[n - 2] + g[n - 3]) * (h / 24.0)
    out = np.zeros_like(g, dtype=cell.dtype)
    out[1:] = np.cumsum(cell, axis=0)
    return out


@dataclass
class DeltaData:
    Delta: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    null_basis: np.ndarray
    P: np.ndarray
    eps: float


def delta_matrix(sys: CanonicalSystem, fs: FundamentalSolution, which: str = "weight",
                 alpha: float | None = None, beta: float | None = None,
                 rel_null: float = 1e-8) -> DeltaData:
    """Gram matrix int X^* W X over [alpha, beta] and its null-space split.

    ``which`` selects W(t, l_lam, m) ("weight") or Im H / Im lam ("nevanlinna").
    """
    grid = fs.grid
    alpha = grid.a if alpha is None else alpha
    beta = grid.b if beta is None else beta
    i, j = grid.index(alpha), grid.index(beta)
    sub = Grid(grid.nodes[i], grid.nodes[j], j - i)
    t = sub.nodes
    W = sys.W(t, fs.lam) if which == "weight" else sys.nevweight(t, fs.lam)
    X = fs.X[i:j + 1]
    Delta = sub.integrate(herm(X) @ W @ X)
    Delta = 0.5 * (Delta + herm(Delta))
    w, V = np.linalg.eigh(Delta)
    scale = float(np.max(np.abs(w), initial=0.0))
    eps = rel_null * scale if scale > 0 else 0.0
    rng = w > eps
    P = V[:, rng] @ herm(V[:, rng])
    return DeltaData(Delta, w, V, V[:, ~rng], P, eps)


@dataclass
class Definiteness:
    delta: float | None
    strict: bool
    trivial: bool


def definiteness_check(dd: DeltaData) -> Definiteness:
    """Smallest eigenvalue of Delta on ran P; ``strict`` when P = I and delta > 0."""
    D = dd.Delta.shape[0]
    rank = D - dd.null_basis.shape[1]
    if rank == 0:
        return Definiteness(None, False, True)
    w = np.linalg.eigvalsh(herm(dd.eigvecs[:, dd.eigvals > dd.eps]) @ dd.Delta @ dd.eigvecs[:, dd.eigvals > dd.eps])
    delta = float(np.min(w))
    return Definiteness(delta, bool(rank == D and delta > 0), False)


def null_space_angle(d1: DeltaData, d2: DeltaData) -> float:
    """Largest principal angle between the two null spaces (0 if both trivial)."""
    if d1.null_basis.shape[1] != d2.null_basis.shape[1]:
        return float(np.pi / 2)
    if d1.null_basis.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(d1.null_basis, d2.null_basis)))
