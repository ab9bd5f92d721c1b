"""Characteristic operators: boundary pairs, M(lam), projections and certificates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .canon import build_W, herm
from .coeff import MatrixExpr
from .forms import Grid
from .solve import CanonicalSystem, FundamentalSolution, cumulative_integral, integrate_fundamental

__all__ = [
    "BoundaryPair", "PairReport", "validate_pair", "PairNotResolvable", "char_op_from_pair",
    "char_projection", "separation_check", "CharacteristicOperator", "Certificate",
    "verify_characteristic", "inertia", "contour_residual", "bump_trials",
]

log = logging.getLogger(__name__)

MatrixFn = Callable[[complex], np.ndarray]


class PairNotResolvable(ArithmeticError):
    """The difference matrix X^{-1}(a) M - X^{-1}(b) N is singular at lam."""


def _as_evaluator(m) -> MatrixFn:
    if callable(m) and not isinstance(m, MatrixExpr):
        return lambda lam: np.asarray(m(lam), dtype=complex)
    if isinstance(m, MatrixExpr):
        return lambda lam: m.evaluate(0.0, lam)
    arr = np.atleast_2d(np.asarray(m, dtype=complex))
    return lambda lam: arr


@dataclass
class BoundaryPair:
    """Boundary data x(a) = M_lam h, x(b) = N_lam h.

    ``M`` and ``N`` may be constant arrays, :class:`MatrixExpr` in ``lam`` or
    callables of ``lam``.
    """

    M: object
    N: object
    kind: str = "coupled"

    def __post_init__(self):
        if self.kind not in ("coupled", "separated"):
            raise ValueError(f"unknown pair kind {self.kind!r}")
        self._M = _as_evaluator(self.M)
        self._N = _as_evaluator(self.N)

    def at(self, lam) -> tuple[np.ndarray, np.ndarray]:
        return self._M(complex(lam)), self._N(complex(lam))

    @classmethod
    def dirichlet(cls, n: int, d: int = 1) -> "BoundaryPair":
        """y^(j)(a) = y^(j)(b) = 0 for j < n: the second pair of the null-vector example."""
        k = n * d
        Z, I = np.zeros((k, k)), np.eye(k)
        return cls(np.block([[Z, Z], [I, Z]]), np.block([[Z, Z], [Z, I]]), "separated")

    @classmethod
    def swapped(cls, n: int, d: int = 1) -> "BoundaryPair":
        """The first pair of the null-vector example: quasi-derivative blocks vanish."""
        k = n * d
        Z, I = np.zeros((k, k)), np.eye(k)
        return cls(np.block([[I, Z], [Z, Z]]), np.block([[Z, I], [Z, Z]]), "separated")


def inertia(A: np.ndarray, tol: float = 1e-10) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of a Hermitian matrix."""
    w = np.linalg.eigvalsh(0.5 * (A + herm(A)))
    eps = tol * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    return int(np.sum(w > eps)), int(np.sum(w < -eps)), int(np.sum(np.abs(w) <= eps))


@dataclass
class PairReport:
    flux: float
    sigma_min: float
    dissipation: float
    rank: int
    kappa_plus: int
    G_inertia: tuple
    tol: float

    @property
    def injective(self) -> bool:
        return self.sigma_min > self.tol

    @property
    def dissipative(self) -> bool:
        return self.dissipation <= self.tol

    @property
    def maximal(self) -> bool:
        return self.rank == self.kappa_plus

    @property
    def balanced(self) -> bool:
        return self.G_inertia[0] == self.G_inertia[1]

    @property
    def passed(self) -> bool:
        return self.flux <= self.tol and self.injective and self.dissipative and self.maximal

    def as_dict(self) -> dict:
        return {"flux": self.flux, "sigma_min": self.sigma_min, "dissipation": self.dissipation,
                "rank": self.rank, "kappa_plus": self.kappa_plus,
                "G_plus": self.G_inertia[0], "G_minus": self.G_inertia[1]}


def validate_pair(bp: BoundaryPair, sys: CanonicalSystem, lam, tol: float = 1e-9) -> PairReport:
    """Flux balance, joint injectivity, dissipativity, maximality and inertia of G."""
    lam = complex(lam)
    if lam.imag == 0:
        raise ValueError("validate_pair needs a nonreal lam")
    M, N = bp.at(lam)
    Ra, Rb = sys.ReQ(sys.a, lam), sys.ReQ(sys.b, lam)
    A, B = herm(M) @ Ra @ M, herm(N) @ Rb @ N
    flux = float(np.linalg.norm(A - B, 2))
    stacked = np.vstack([M, N])
    sv = np.linalg.svd(stacked, compute_uv=False)
    diss = lam.imag * (B - A)
    diss = float(np.max(np.linalg.eigvalsh(0.5 * (diss + herm(diss)))))
    rank = int(np.sum(sv > tol * max(1.0, sv[0])))
    D = sys.D
    Qm = np.zeros((2 * D, 2 * D), dtype=complex)
    Qm[:D, :D], Qm[D:, D:] = lam.imag * Ra, -lam.imag * Rb
    kp = inertia(Qm)[0]
    return PairReport(flux, float(sv[-1]), diss, rank, kp, inertia(sys.G), tol)


def char_op_from_pair(bp: BoundaryPair, fs: FundamentalSolution, G: np.ndarray,
                      cond_limit: float = 1e12) -> np.ndarray:
    """M(lam) = -1/2 (A + B)(A - B)^{-1} (iG)^{-1}, A = X^{-1}(a) M_lam, B = X^{-1}(b) N_lam."""
    M, N = bp.at(fs.lam)
    A = fs.Xinv[0] @ M
    B = fs.Xinv[-1] @ N
    diff = A - B
    cond = float(np.linalg.cond(diff))
    log.debug("difference matrix condition number %.3e at lam=%s", cond, fs.lam)
    if not np.isfinite(cond) or cond > cond_limit:
        raise PairNotResolvable(f"pair not resolvable at lam={fs.lam} (cond={cond:.3e})")
    iG = 1j * G
    return -0.5 * (A + B) @ np.linalg.inv(diff) @ np.linalg.inv(iG)


def char_projection(M: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P = iMG + I/2 and M rebuilt from P as (P - I/2)(iG)^{-1}."""
    I = np.eye(M.shape[0])
    P = 1j * M @ G + 0.5 * I
    return P, (P - 0.5 * I) @ np.linalg.inv(1j * G)


def separation_check(P: np.ndarray, tol: float = 1e-9) -> tuple[float, bool]:
    """||P^2 - P||, and whether P is a projection at ``tol``."""
    res = float(np.linalg.norm(P @ P - P, 2))
    return res, res <= tol


class CharacteristicOperator:
    """lam -> M(lam) with a record of where it came from.

    ``from_pair`` integrates the fundamental solution at every requested lam
    (cached), so the evaluator can be used for contour checks.
    """

    def __init__(self, func: MatrixFn, provenance: str = "user", G: np.ndarray | None = None):
        self._func = func
        self.provenance = provenance
        self.G = G
        self.certificate = None
        self._cache: dict = {}

    def __call__(self, lam) -> np.ndarray:
        lam = complex(lam)
        if lam not in self._cache:
            self._cache[lam] = np.asarray(self._func(lam), dtype=complex)
        return self._cache[lam]

    @classmethod
    def from_pair(cls, bp: BoundaryPair, sys: CanonicalSystem, grid: Grid, substeps: int = 4):
        def func(lam):
            fs = integrate_fundamental(sys, lam, grid, substeps)
            return char_op_from_pair(bp, fs, sys.G)
        return cls(func, "pair", sys.G)

    @classmethod
    def from_projection(cls, proj: Callable[[complex], np.ndarray], G: np.ndarray):
        iGinv = np.linalg.inv(1j * G)
        return cls(lambda lam: (proj(lam) - 0.5 * np.eye(G.shape[0])) @ iGinv, "projection", G)

    def perturbed(self, delta: np.ndarray) -> "CharacteristicOperator":
        return CharacteristicOperator(lambda lam: self(lam) + delta, self.provenance + "+perturbed", self.G)


def contour_residual(func: Callable[[complex], np.ndarray], lam, radius: float = 0.1,
                     points: int = 16, scale: float = 0.0) -> float:
    """|closed contour integral of func| / (circumference * size) by the trapezoid rule.

    ``size`` is max|func| on the contour, or ``scale`` when that is larger
    (useful when the function vanishes identically).
    """
    lam = complex(lam)
    th = 2 * np.pi * np.arange(points) / points
    z = lam + radius * np.exp(1j * th)
    vals = np.array([np.asarray(func(zk), dtype=complex) for zk in z])
    dz = 1j * radius * np.exp(1j * th) * (2 * np.pi / points)
    integral = np.tensordot(dz, vals, axes=(0, 0))
    scale = max(float(np.max(np.abs(vals))), scale) * 2 * np.pi * radius
    return float(np.max(np.abs(integral))) / scale if scale > 0 else 0.0


def bump_trials(grid: Grid, D: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Smooth C^D-valued trial functions vanishing on the outer 10% of the grid."""
    t = grid.nodes
    lo = grid.a + 0.1 * (grid.b - grid.a)
    hi = grid.b - 0.1 * (grid.b - grid.a)
    u = (t - lo) / (hi - lo)
    inside = (u > 0) & (u < 1)
    bump = np.zeros_like(t)
    bump[inside] = np.exp(-1.0 / (u[inside] * (1 - u[inside])))
    out = []
    for _ in range(count):
        c = rng.normal(size=(4, D)) + 1j * rng.normal(size=(4, D))
        poly = np.polynomial.polynomial.polyval(2 * u - 1, c)  # shape (D, T)
        out.append((bump * poly).T)
    return out


@dataclass
class Certificate:
    flux: dict = field(default_factory=dict)
    left: dict = field(default_factory=dict)
    right: dict = field(default_factory=dict)
    symmetry: dict = field(default_factory=dict)
    holomorphy: dict = field(default_factory=dict)
    tol: float = 1e-8
    separated: bool = False

    @property
    def passed(self) -> bool:
        ok = all(v <= self.tol for v in self.flux.values())
        ok &= all(v <= self.tol for v in self.symmetry.values())
        ok &= all(v <= 1e-7 for v in self.holomorphy.values())
        if self.separated:
            ok &= all(v <= self.tol for v in self.left.values())
            ok &= all(v <= self.tol for v in self.right.values())
        return bool(ok)


def verify_characteristic(Mop: Callable[[complex], np.ndarray], sys: CanonicalSystem, grid: Grid,
                          trials: list[np.ndarray], lams, substeps: int = 4, separated: bool = False,
                          tol: float = 1e-8, contour: bool = True) -> Certificate:
    """Check the boundary-flux inequality for x_lam(t, F) built from M(lam).

    ``trials`` are sampled C^D-valued functions F; the forcing of the system
    is W(s, l_lam*, m) F(s).  Flux values are ``Im lam (U[x(b)] - U[x(a)])``
    normalised by the squared size of x, so ``<= tol`` means satisfied.
    """
    cert = Certificate(tol=tol, separated=separated)
    G = sys.G
    iGinv = np.linalg.inv(1j * G)
    Ladj = sys.L.adjoint()
    t = grid.nodes
    for lam in lams:
        lam = complex(lam)
        Mlam = Mop(lam)
        fsc = integrate_fundamental(sys, lam.conjugate(), grid, substeps)
        fs = integrate_fundamental(sys, lam, grid, substeps)
        W = build_W(Ladj, sys.m, t, lam)
        Ra, Rb = sys.ReQ(sys.a, lam), sys.ReQ(sys.b, lam)
        worst = worst_a = worst_b = -np.inf
        for F in trials:
            g = np.einsum("tba,tb->ta", np.conj(fsc.X), np.einsum("tab,tb->ta", W, F))
            J = cumulative_integral(g, grid.h)[-1]
            xa = fs.X[0] @ (Mlam @ J - 0.5 * iGinv @ J)
            xb = fs.X[-1] @ (Mlam @ J + 0.5 * iGinv @ J)
            scale = max(float(np.vdot(xa, xa).real + np.vdot(xb, xb).real), 1e-300)
            Ua = float(np.real(np.vdot(xa, Ra @ xa)))
            Ub = float(np.real(np.vdot(xb, Rb @ xb)))
            worst = max(worst, lam.imag * (Ub - Ua) / scale)
            worst_a = max(worst_a, -lam.imag * Ua / scale)
            worst_b = max(worst_b, lam.imag * Ub / scale)
        cert.flux[lam] = float(worst)
        cert.left[lam] = float(worst_a)
        cert.right[lam] = float(worst_b)
        Mc = Mop(lam.conjugate())
        cert.symmetry[lam] = float(np.max(np.abs(Mlam - herm(Mc)))) / max(1.0, float(np.max(np.abs(Mlam))))
        if contour:
            cert.holomorphy[lam] = contour_residual(Mop, lam)
    return cert
