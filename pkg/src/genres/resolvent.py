"""Generalized resolvent kernel, its application and the property suite."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .canon import (Applied, QuasiDerivativeTable, SmoothFunction, _m_part, build_Q, build_W,
                    canonical_residual, herm, lift_F, lift_solution, wf_branch)
from .charop import BoundaryPair, char_projection, contour_residual
from .expr import Expression, LambdaFamily, WeightExpression, imag_part
from .forms import Grid, density_from_derivs
from .solve import CanonicalSystem, FundamentalSolution, cumulative_integral, integrate_fundamental

__all__ = [
    "lift_rhs", "ResolventKernel", "ResolventResult", "apply_resolvent", "Resolvent",
    "solution_derivatives", "residuals_ode_bc", "BCReport", "property_suite", "PropertyReport",
    "green_residual", "green_residual_spectral", "straus_split", "weight_densities",
]

_mv = lambda A, v: np.einsum("...ab,...b->...a", A, v)  # noqa: E731


def lift_rhs(f: SmoothFunction, family: LambdaFamily, grid: Grid, lam, check: bool = False):
    """Sampled W(s, l_lam*, m) F(s, l_lam*, m) via the branch formulas.

    With ``check`` the product of the two factors is computed as well and the
    largest difference is returned next to the values.
    """
    t = grid.nodes
    L, m = family.l_lam, family.weight
    phi = wf_branch(f, L, m, t, lam)
    if not check:
        return phi
    La = L.adjoint()
    prod = _mv(build_W(La, m, t, lam), lift_F(f, La, m, t, lam))
    return phi, float(np.max(np.abs(phi - prod), initial=0.0))


@dataclass
class ResolventKernel:
    """Data of the kernel X(t){M - sgn(s-t)(iG)^{-1}/2}X_conj^*(s) at one lam."""

    sys: CanonicalSystem
    lam: complex
    fs: FundamentalSolution
    fs_conj: FundamentalSolution
    M: np.ndarray

    @classmethod
    def build(cls, sys: CanonicalSystem, grid: Grid, lam, M: np.ndarray | Callable, substeps: int = 4):
        lam = complex(lam)
        if lam.imag == 0:
            raise ValueError("the resolvent needs a nonreal lam")
        fs = integrate_fundamental(sys, lam, grid, substeps)
        fsc = integrate_fundamental(sys, lam.conjugate(), grid, substeps)
        Mv = M(lam) if callable(M) else np.asarray(M, dtype=complex)
        return cls(sys, lam, fs, fsc, Mv)

    @property
    def grid(self) -> Grid:
        return self.fs.grid

    @property
    def iGinv(self) -> np.ndarray:
        return np.linalg.inv(1j * self.sys.G)

    def prefix(self, phi: np.ndarray) -> np.ndarray:
        """Running integrals of X_conj^*(s) phi(s) from a to each node."""
        g = np.einsum("tba,tb->ta", np.conj(self.fs_conj.X), phi)
        return cumulative_integral(g, self.grid.h)

    def jump(self, k: int) -> np.ndarray:
        """Size of the kernel's discontinuity across s = t_k."""
        return self.fs.X[k] @ self.iGinv @ herm(self.fs_conj.X[k])


@dataclass
class ResolventResult:
    t: np.ndarray
    y1: np.ndarray
    xvec: np.ndarray
    phi: np.ndarray
    lam: complex
    report: dict = field(default_factory=dict)


def apply_resolvent(kernel: ResolventKernel, phi: np.ndarray) -> ResolventResult:
    """x(t_k) = X(t_k)[M J + (iG)^{-1}(J_[a,t_k] - J_[t_k,b])/2]."""
    Jc = kernel.prefix(phi)
    Jt = Jc[-1]
    inner = (kernel.M @ Jt)[None, :] + 0.5 * _mv(kernel.iGinv, 2 * Jc - Jt[None, :])
    x = _mv(kernel.fs.X, inner)
    d = kernel.sys.family.d
    return ResolventResult(kernel.grid.nodes, x[:, :d].copy(), x, phi, kernel.lam)


def solution_derivatives(L: Expression, m: Expression, x: np.ndarray, t, lam, kmax: int,
                         f: SmoothFunction | None = None) -> np.ndarray:
    """Classical derivatives y^(k), k <= kmax, read off canonical vectors.

    ``x`` has shape (T, D) or (T, D, c) for several columns.  Only k <= n
    (n = floor(r/2)) is available; k = n uses the top quasi-derivative row for
    even r and the last component for odd r.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r, d = L.r, L.d
    n = r // 2
    if kmax > max(n, 0) and not (r == 1 and kmax == 0):
        raise ValueError(f"derivative order {kmax} not encoded in the canonical vector")
    cols = x.ndim == 3
    X = x if cols else x[..., None]
    T, _, c = X.shape
    out = np.zeros((kmax + 1, T, d, c), dtype=complex)
    if r == 1:
        out[0] = X[:, :d]
        return out if cols else out[..., 0]
    for k in range(min(kmax, n - 1) + 1):
        out[k] = X[:, k * d:(k + 1) * d]
    if kmax == n:
        last = X[:, (2 * n - 1) * d:2 * n * d]
        if r % 2 == 1:
            out[n] = 1j * X[:, 2 * n * d:]
        else:
            tab = QuasiDerivativeTable(L, t, lam)
            op = tab.ops[n][:, 0]  # (J, T, d, d)
            rhs = last.copy()
            if f is not None:
                rhs = rhs + _m_part(f, m, t, n)[n - 1][0][..., None]
            for j in range(n):
                rhs = rhs - np.einsum("tab,tbc->tac", op[j], out[j])
            out[n] = np.linalg.solve(op[n], rhs)
    return out if cols else out[..., 0]


def weight_densities(m: WeightExpression, f: SmoothFunction, t) -> np.ndarray:
    """m_k[f] = p~_k f^(k) + (i/2)(q~_{k+1}^* f^(k+1) - q~_k f^(k-1)), k = 0..s/2."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = m.s // 2
    co = m.coefficients(t, 0.0, 0)
    fd = f.jet(t, half + 1)
    out = np.zeros((half + 1, t.size, m.d), dtype=complex)
    for k in range(half + 1):
        v = _mv(co.get("p", k, 0), fd[k])
        if k + 1 <= half:
            v = v + 0.5j * _mv(herm(co.get("q", k + 1, 0)), fd[k + 1])
        if k >= 1:
            v = v - 0.5j * _mv(co.get("q", k, 0), fd[k - 1])
        out[k] = v
    return out


class Resolvent:
    """R(lam) f = first component of the kernel applied to the lifted data."""

    def __init__(self, sys: CanonicalSystem, grid: Grid, Mop: Callable[[complex], np.ndarray],
                 substeps: int = 4):
        self.sys, self.grid, self.Mop, self.substeps = sys, grid, Mop, substeps
        self.family = sys.family
        self._kernels: dict = {}

    def kernel(self, lam) -> ResolventKernel:
        lam = complex(lam)
        if lam not in self._kernels:
            self._kernels[lam] = ResolventKernel.build(self.sys, self.grid, lam, self.Mop, self.substeps)
        return self._kernels[lam]

    def apply(self, f: SmoothFunction, lam) -> ResolventResult:
        k = self.kernel(lam)
        res = apply_resolvent(k, lift_rhs(f, self.family, self.grid, lam))
        res.report["f"] = f
        return res

    def derivs(self, res: ResolventResult, f: SmoothFunction | None = None) -> np.ndarray:
        half = self.family.weight.s // 2
        return solution_derivatives(self.family.l_lam, self.family.weight, res.xvec, res.t,
                                    res.lam, half, f if f is not None else res.report.get("f"))

    def inner(self, ud: np.ndarray, vd: np.ndarray) -> complex:
        """(u, v)_m from derivative stacks."""
        t = self.grid.nodes
        return complex(self.grid.integrate(density_from_derivs(self.family.weight, ud, vd, t)))

    def fjet(self, f: SmoothFunction) -> np.ndarray:
        return f.jet(self.grid.nodes, self.family.weight.s // 2)


@dataclass
class BCReport:
    ode: float
    boundary: float
    h: np.ndarray


def _fd_derivative(x: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences (one-sided near the ends)."""
    dx = np.empty_like(x)
    dx[2:-2] = (x[:-4] - 8 * x[1:-3] + 8 * x[3:-1] - x[4:]) / (12 * h)
    for i in (0, 1):
        dx[i] = (-25 * x[i] + 48 * x[i + 1] - 36 * x[i + 2] + 16 * x[i + 3] - 3 * x[i + 4]) / (12 * h)
        j = -1 - i
        dx[j] = (25 * x[j] - 48 * x[j - 1] + 36 * x[j - 2] - 16 * x[j - 3] + 3 * x[j - 4]) / (12 * h)
    return dx


def residuals_ode_bc(res: ResolventResult, family: LambdaFamily, bp: BoundaryPair | None, grid: Grid) -> BCReport:
    """Canonical ODE residual (finite differences, relative) and the boundary fit."""
    x = res.xvec
    dx = _fd_derivative(x, grid.h)
    r = canonical_residual(family.l_lam, x, dx, res.phi, grid.nodes, res.lam)
    scale = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(res.phi))))
    ode = float(np.max(np.abs(r[2:-2]))) / scale
    if bp is None:
        return BCReport(ode, 0.0, np.zeros(0))
    M, N = bp.at(res.lam)
    A = np.vstack([M, N])
    rhs = np.concatenate([x[0], x[-1]])
    h, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    bnd = float(np.linalg.norm(A @ h - rhs)) / max(1.0, float(np.linalg.norm(rhs)))
    return BCReport(ode, bnd, h)


@dataclass
class PropertyReport:
    adjointness: float = 0.0
    nevanlinna: float = -np.inf
    nevanlinna_gap: float = 0.0
    norm_slack: float = np.inf
    holomorphy: float = 0.0
    weighted: float = -np.inf

    def update(self, key, value, mode="max"):
        cur = getattr(self, key)
        setattr(self, key, max(cur, value) if mode == "max" else min(cur, value))

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def property_suite(R: Resolvent, fs: list[SmoothFunction], lams, contour: bool = True) -> PropertyReport:
    """Adjointness, Nevanlinna inequality, norm bound, holomorphy and the weighted bound.

    ``nevanlinna`` is max(||Rf||^2 - Im(Rf, f)/Im lam) over samples (should be
    <= 0), ``nevanlinna_gap`` the largest |.| of the same quantity,
    ``norm_slack`` the smallest ||f||/|Im lam| - ||Rf||.
    """
    rep = PropertyReport()
    fj = [R.fjet(f) for f in fs]
    for lam in lams:
        lam = complex(lam)
        res = [R.apply(f, lam) for f in fs]
        resc = [R.apply(f, lam.conjugate()) for f in fs]
        yd = [R.derivs(r) for r in res]
        ydc = [R.derivs(r) for r in resc]
        for i, f in enumerate(fs):
            nf = np.sqrt(max(R.inner(fj[i], fj[i]).real, 0.0))
            ny2 = R.inner(yd[i], yd[i]).real
            val = ny2 - R.inner(yd[i], fj[i]).imag / lam.imag
            rep.update("nevanlinna", val)
            rep.update("nevanlinna_gap", abs(val))
            rep.update("norm_slack", nf / abs(lam.imag) - np.sqrt(max(ny2, 0.0)), "min")
            x, phi = res[i].xvec, res[i].phi
            t = R.grid.nodes
            lhs = R.grid.integrate(np.einsum("ta,ta->t", np.conj(x), _mv(R.sys.nevweight(t, lam), x))).real
            rhs = R.grid.integrate(np.einsum("ta,ta->t", np.conj(phi), x)).imag / lam.imag
            rep.update("weighted", lhs - rhs)
            for j in range(len(fs)):
                a = R.inner(yd[i], fj[j])
                b = R.inner(fj[i], ydc[j])
                scale = max(1.0, nf * np.sqrt(max(R.inner(fj[j], fj[j]).real, 0.0)) / abs(lam.imag))
                rep.update("adjointness", abs(a - b) / scale)
        if contour and len(fs) >= 1:
            f = fs[0]
            gj = fj[-1]

            def pairing(z, f=f, gj=gj):
                r = R.apply(f, z)
                return np.array([[R.inner(R.derivs(r), gj)]])
            floor = np.sqrt(abs(R.inner(fj[0], fj[0])) * abs(R.inner(gj, gj))) / abs(lam.imag)
            rep.update("holomorphy", contour_residual(pairing, lam, scale=float(floor)))
    return rep


def green_residual(l1: Expression, l2: Expression, m1: Expression, m2: Expression,
                   y1: SmoothFunction, f1: SmoothFunction, y2: SmoothFunction, f2: SmoothFunction,
                   grid: Grid, lam=0.0) -> tuple[complex, float]:
    """Both sides of the Green formula for l_k[y_k] = m_k[f_k] on ``grid``.

    Returns (difference, scale); ``scale`` is the largest term involved.
    """
    t = grid.nodes
    top = (max(l1.r, l2.r) + 1) // 2
    jet = lambda g: g.jet(t, top)  # noqa: E731
    Y1, F1, Y2, F2 = jet(y1), jet(f1), jet(y2), jet(f2)
    l2a, m2a = l2.adjoint(), m2.adjoint()
    i1 = grid.integrate(density_from_derivs(m1, F1, Y2, t, lam))
    i2 = grid.integrate(density_from_derivs(m2a, Y1, F2, t, lam))
    i3 = grid.integrate(density_from_derivs(l1, Y1, Y2, t, lam) - density_from_derivs(l2a, Y1, Y2, t, lam))
    lhs = i1 - i2 - i3
    ends = np.array([grid.a, grid.b])
    v1 = lift_solution(y1, f1, l1, m1, ends, lam)
    v2 = lift_solution(y2, f2, l2, m2, ends, lam)
    A = 0.5j * (build_Q(l1, ends, lam) + herm(build_Q(l2, ends, lam)))
    bnd = np.einsum("ta,ta->t", np.conj(v2), _mv(A, v1))
    rhs = bnd[1] - bnd[0]
    scale = max(1.0, abs(i1), abs(i2), abs(i3), float(np.max(np.abs(bnd))))
    return complex(lhs - rhs), float(scale)


def green_residual_spectral(family: LambdaFamily, y1: SmoothFunction, y2: SmoothFunction,
                            lam1, lam2, grid: Grid) -> tuple[complex, float]:
    """Spectral Green formula with manufactured f_k for a weight of order zero.

    f_k is chosen so that l_{lam_k}[y_k] = m[f_k]; the right side uses
    i (ReQ ybar_1, ybar_2) at the endpoints.
    """
    m = family.weight
    if m.s != 0:
        raise ValueError("manufactured data need a weight of order zero")
    base = family.base
    t = grid.nodes
    lam1, lam2 = complex(lam1), complex(lam2)

    class _Rhs(SmoothFunction):
        def __init__(self, y, lam):
            self.y, self.lam, self.d = y, lam, y.d
            self.ly = Applied(base, y)

        def jet(self, tt, k):
            tt = np.atleast_1d(np.asarray(tt, dtype=float))
            p0 = m.coefficients(tt, 0.0, 0).get("p", 0, 0)
            if k > 0:
                raise ValueError("only values are needed for an order-zero weight")
            nev = family.nev
            v = self.ly.jet(tt, 0)
            if nev is not None:
                v = v - Applied(nev, self.y, self.lam).jet(tt, 0)
            return np.linalg.solve(p0, v[0][..., None])[None, ..., 0] - self.lam * self.y.jet(tt, 0)

    f1, f2 = _Rhs(y1, lam1), _Rhs(y2, lam2)
    Y1, Y2, F1, F2 = y1.jet(t, 0), y2.jet(t, 0), f1.jet(t, 0), f2.jet(t, 0)
    dens = lambda u, v: density_from_derivs(m, u, v, t)  # noqa: E731
    i1 = grid.integrate(dens(F1, Y2))
    i2 = grid.integrate(dens(Y1, F2))
    i3 = grid.integrate(dens(Y1, Y2))
    lhs = i1 - i2 + (lam1 - lam2.conjugate()) * i3
    ends = np.array([grid.a, grid.b])
    L = family.l_lam
    v1 = lift_solution(y1, _Frozen(f1), L, m, ends, lam1)
    v2 = lift_solution(y2, _Frozen(f2), L, m, ends, lam2)
    sysQ = 0.5 * (build_Q(L, ends, lam1) + herm(build_Q(L, ends, lam1)))
    bnd = 1j * np.einsum("ta,ta->t", np.conj(v2), _mv(sysQ, v1))
    rhs = bnd[1] - bnd[0]
    scale = max(1.0, abs(i1), abs(i2), abs(i3), float(np.max(np.abs(bnd))))
    return complex(lhs - rhs), float(scale)


class _Frozen(SmoothFunction):
    """Wraps a function whose higher derivatives are never used (order-zero weight)."""

    def __init__(self, f):
        self.f, self.d = f, f.d

    def jet(self, t, k):
        v = self.f.jet(t, 0)
        return np.concatenate([v, np.zeros((k,) + v.shape[1:], dtype=v.dtype)])


def straus_split(R: Resolvent, f: SmoothFunction, lam) -> np.ndarray:
    """y1 from the split form with rows x_j = [X_lam]_1 and y_j = [X_lam]_1 P (iG)^{-1}.

    The conjugate-parameter rows are built from M(conj lam) directly and
    the densities m_k[f] from the weight coefficients, so this path shares
    only the fundamental solutions with :func:`apply_resolvent`.
    """
    lam = complex(lam)
    sys, grid = R.sys, R.grid
    fam = R.family
    G = sys.G
    iGinv = np.linalg.inv(1j * G)
    k, kc = R.kernel(lam), R.kernel(lam.conjugate())
    P, _ = char_projection(R.Mop(lam), G)
    Pc, _ = char_projection(R.Mop(lam.conjugate()), G)
    t = grid.nodes
    half = fam.weight.s // 2
    L = fam.l_lam
    # derivatives of the first row at conj lam: (half+1, T, d, D)
    rows_c = solution_derivatives(L, fam.weight, kc.fs.X, t, lam.conjugate(), half)
    dens = weight_densities(fam.weight, f, t)
    first = np.einsum("ktab,kta->tb", np.conj(rows_c), dens)  # sum_k (x_j^(k))^* m_k[f]
    yrows_c = np.einsum("ktab,bc->ktac", rows_c, Pc @ iGinv)
    second = np.einsum("ktab,kta->tb", np.conj(yrows_c), dens)
    c1 = cumulative_integral(first, grid.h)
    c2 = cumulative_integral(second, grid.h)
    tail2 = c2[-1][None, :] - c2
    d = fam.d
    row = k.fs.X[:, :d, :]
    yrow = np.einsum("tab,bc->tac", row, P @ iGinv)
    return _mv(yrow, c1) + _mv(row, tail2)
