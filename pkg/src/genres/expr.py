"""Differential expressions in divergent form.

An expression of order ``r`` is ``l = sum_k i^k l_k`` with

    l_{2j}   = D^j p_j D^j
    l_{2j-1} = 1/2 D^{j-1} (D q_j + s_j D) D^{j-1}

and d x d matrix coefficients.  Coefficients are exposed as *jets*: arrays of
shape ``(K+1, T, d, d)`` holding the value and the first ``K`` t-derivatives at
``T`` sample points.  Everything downstream (quasi-derivatives, block
matrices, forms) is assembled from jets, so derived expressions such as the
adjoint or the imaginary part only need to know how to produce jets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .coeff import MatrixExpr, ScalarExpr, to_expr

__all__ = [
    "Coefficients", "Expression", "DiffExpression", "WeightExpression",
    "Adjoint", "Combination", "Padded", "imag_part", "LambdaFamily",
    "ValidationReport", "eval_coefficient", "form_matrix", "validate_family",
    "coefficient_ranges",
]

KINDS = ("p", "q", "s")


def coefficient_ranges(r: int) -> dict[str, range]:
    """Index ranges of p_j, q_j, s_j for an expression of order ``r``."""
    return {"p": range(0, r // 2 + 1), "q": range(1, (r + 1) // 2 + 1), "s": range(1, (r + 1) // 2 + 1)}


@dataclass
class Coefficients:
    """Coefficient jets of one expression at fixed sample points and lambda."""

    r: int
    d: int
    T: int
    K: int
    jets: dict = field(default_factory=dict)

    def jet(self, kind: str, j: int) -> np.ndarray:
        arr = self.jets.get((kind, j))
        if arr is None:
            return np.zeros((self.K + 1, self.T, self.d, self.d), dtype=complex)
        return arr

    def get(self, kind: str, j: int, k: int = 0) -> np.ndarray:
        """k-th t-derivative of the coefficient, shape (T, d, d); zero when absent."""
        arr = self.jets.get((kind, j))
        if arr is None:
            return np.zeros((self.T, self.d, self.d), dtype=complex)
        return arr[k]


class Expression:
    """Interface shared by all differential expressions."""

    d: int
    r: int

    def coefficients(self, t, lam, K: int = 0) -> Coefficients:
        raise NotImplementedError

    # convenience -----------------------------------------------------------
    def adjoint(self) -> "Expression":
        return Adjoint(self)

    def __sub__(self, other):
        return Combination(((1.0, self), (-1.0, other)))

    def __add__(self, other):
        return Combination(((1.0, self), (1.0, other)))

    def scaled(self, c) -> "Expression":
        return Combination(((c, self),))


MatrixLike = Union[MatrixExpr, str, float, complex, ScalarExpr, Sequence]


def _as_matrix(value: MatrixLike, d: int) -> MatrixExpr:
    if isinstance(value, MatrixExpr):
        m = value
    elif isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
        m = MatrixExpr.build(value)
    elif isinstance(value, (list, tuple)):
        m = MatrixExpr.build([list(value)]) if d == 1 else MatrixExpr.build(value)
    else:
        m = MatrixExpr.scalar_identity(value, d)
    if m.shape != (d, d):
        raise ValueError(f"coefficient has shape {m.shape}, expected {(d, d)}")
    return m


def _normalize(spec, d: int, allowed: range, kind: str) -> dict[int, MatrixExpr]:
    if spec is None:
        return {}
    items = spec.items() if isinstance(spec, Mapping) else enumerate(spec, start=allowed.start)
    out = {}
    for j, v in items:
        j = int(j)
        if j not in allowed:
            raise IndexError(f"{kind}_{j} is outside the admissible range {list(allowed)}")
        if v is None:
            continue
        m = _as_matrix(v, d)
        if not m.is_zero:
            out[j] = m
    return out


class _ExprBacked(Expression):
    """Common machinery for expressions whose coefficients are MatrixExpr."""

    def _init_tables(self, tables: dict[str, dict[int, MatrixExpr]]):
        self._tables = tables
        self._derivs: dict[tuple[str, int], list[MatrixExpr]] = {}
        self._cache_key = None
        self._cache_val = None

    def matrix_expr(self, kind: str, j: int) -> MatrixExpr | None:
        return self._tables[kind].get(j)

    def _chain(self, kind, j, K):
        chain = self._derivs.setdefault((kind, j), [self._tables[kind][j]])
        while len(chain) <= K:
            chain.append(chain[-1].diff_t())
        return chain

    def depends_on_lam(self) -> bool:
        return any(m.depends_on("lam") for tab in self._tables.values() for m in tab.values())

    def _raw_coefficients(self, t, lam, K):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        key = (t.shape, hash(t.tobytes()), complex(lam), K)
        if key == self._cache_key:
            return self._cache_val
        co = Coefficients(self.r, self.d, t.size, K)
        for kind, tab in self._tables.items():
            for j in tab:
                chain = self._chain(kind, j, K)
                co.jets[(kind, j)] = np.stack([m.evaluate(t, lam) for m in chain[: K + 1]])
        self._cache_key, self._cache_val = key, co
        return co


class DiffExpression(_ExprBacked):
    """Order-``r`` expression with coefficients in the coefficient language.

    ``p`` lists p_0, p_1, ...; ``q`` and ``s`` list q_1, s_1, ... (or pass dicts
    keyed by index).  Scalars denote multiples of the identity.
    """

    def __init__(self, d: int, r: int, p=None, q=None, s=None, name: str = "l"):
        if r < 1:
            raise ValueError("order must be at least 1")
        self.d, self.r, self.name = int(d), int(r), name
        rng = coefficient_ranges(r)
        self._init_tables({"p": _normalize(p, d, rng["p"], "p"),
                           "q": _normalize(q, d, rng["q"], "q"),
                           "s": _normalize(s, d, rng["s"], "s")})

    def coefficients(self, t, lam, K=0):
        return self._raw_coefficients(t, lam, K)

    def __repr__(self):
        return f"DiffExpression(d={self.d}, r={self.r}, name={self.name!r})"


class WeightExpression(_ExprBacked):
    """Weight expression ``m`` of even order ``s``; s~_j is the adjoint of q~_j."""

    def __init__(self, d: int, s: int, p=None, q=None, name: str = "m"):
        if s < 0 or s % 2:
            raise ValueError("weight order must be even and non-negative")
        self.d, self.s, self.r, self.name = int(d), int(s), int(s), name
        half = s // 2
        self._init_tables({"p": _normalize(p, d, range(0, half + 1), "p~"),
                           "q": _normalize(q, d, range(1, half + 1), "q~")})
        if self.depends_on_lam():
            raise ValueError("weight coefficients must not depend on lam")

    def coefficients(self, t, lam=0.0, K=0):
        co = self._raw_coefficients(t, 0.0, K)
        out = Coefficients(self.r, self.d, co.T, K, dict(co.jets))
        for j in range(1, self.s // 2 + 1):
            if ("q", j) in co.jets:
                # t is real, so derivatives commute with the adjoint
                out.jets[("s", j)] = np.conj(np.swapaxes(co.jets[("q", j)], -1, -2))
        return out

    def __repr__(self):
        return f"WeightExpression(d={self.d}, s={self.s}, name={self.name!r})"


class Adjoint(Expression):
    """Formal adjoint: p_j -> p_j*, q_j -> s_j*, s_j -> q_j* at the same lambda."""

    def __init__(self, base: Expression):
        self.base, self.d, self.r = base, base.d, base.r

    def coefficients(self, t, lam, K=0):
        co = self.base.coefficients(t, lam, K)
        swap = {"p": "p", "q": "s", "s": "q"}
        out = Coefficients(co.r, co.d, co.T, K)
        for (kind, j), arr in co.jets.items():
            out.jets[(swap[kind], j)] = np.conj(np.swapaxes(arr, -1, -2))
        return out


Scalar = Union[complex, float, Callable[[complex], complex]]


class Combination(Expression):
    """Linear combination sum c_k(lam) e_k; the order is the largest order."""

    def __init__(self, terms: Sequence[tuple[Scalar, Expression]], r: int | None = None):
        terms = tuple((c, e) for c, e in terms if e is not None)
        if not terms:
            raise ValueError("empty combination")
        self.terms = terms
        self.d = terms[0][1].d
        if any(e.d != self.d for _, e in terms):
            raise ValueError("dimension mismatch in combination")
        self.r = max(e.r for _, e in terms) if r is None else r

    def coefficients(self, t, lam, K=0):
        out = None
        for c, e in self.terms:
            cval = complex(c(lam)) if callable(c) else complex(c)
            co = e.coefficients(t, lam, K)
            if out is None:
                out = Coefficients(self.r, self.d, co.T, K)
            if cval == 0:
                continue
            for key, arr in co.jets.items():
                if key in out.jets:
                    out.jets[key] = out.jets[key] + cval * arr
                else:
                    out.jets[key] = cval * arr
        return out


class Padded(Expression):
    """The same expression declared with a larger formal order (zero top coefficients)."""

    def __init__(self, base: Expression, r: int):
        if r < base.r:
            raise ValueError("padding cannot lower the order")
        self.base, self.d, self.r = base, base.d, r

    def coefficients(self, t, lam, K=0):
        co = self.base.coefficients(t, lam, K)
        return Coefficients(self.r, co.d, co.T, K, dict(co.jets))


def imag_part(e: Expression, scale: Scalar = 1.0) -> Expression:
    """``scale * (e - e*) / (2i)``; ``scale`` may depend on lambda."""
    if callable(scale):
        c1 = lambda lam: scale(lam) / 2j  # noqa: E731
        c2 = lambda lam: -scale(lam) / 2j  # noqa: E731
    else:
        c1, c2 = scale / 2j, -scale / 2j
    return Combination(((c1, e), (c2, Adjoint(e))))


class LambdaFamily:
    """The spectral family ``l_lam = l - lam*m - n_lam``."""

    def __init__(self, base: Expression, weight: WeightExpression, nev: Expression | None = None):
        if weight.s > 2 * (base.r // 2):
            raise ValueError("weight order exceeds 2*floor(r/2)")
        if nev is not None and (nev.r % 2 or nev.r > base.r):
            raise ValueError("n_lam must have even order not exceeding r")
        if weight.d != base.d or (nev is not None and nev.d != base.d):
            raise ValueError("dimension mismatch")
        self.base, self.weight, self.nev = base, weight, nev
        self.d, self.r, self.s = base.d, base.r, weight.s
        terms = [(1.0, base), (lambda lam: -lam, weight)]
        if nev is not None:
            terms.append((-1.0, nev))
        self.l_lam: Expression = Combination(terms, r=base.r)

    def imag_l(self) -> Expression:
        """Im l_lam as an expression (coefficients depend on lambda)."""
        return imag_part(self.l_lam)

    def nev_weight(self) -> Expression:
        """-Im l_lam / Im lam, the weight dominating m."""
        return imag_part(self.l_lam, lambda lam: -1.0 / complex(lam).imag)


def eval_coefficient(e: Expression | LambdaFamily, kind: str, j: int, t, lam) -> np.ndarray:
    """Value of p_j, q_j or s_j at (t, lam); for a family, of l_lam."""
    expr = e.l_lam if isinstance(e, LambdaFamily) else e
    if kind not in KINDS:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    if j not in coefficient_ranges(expr.r)[kind]:
        raise IndexError(f"{kind}_{j} out of range for order {expr.r}")
    co = expr.coefficients(np.atleast_1d(t), lam, 0)
    val = co.get(kind, j)
    return val[0] if np.ndim(t) == 0 else val


def form_matrix(e: Expression, t, lam, top: int | None = None) -> np.ndarray:
    """Hermitian-layout matrix of the Dirichlet density on col(f, f', ..., f^(top)).

    ``L{f, g} = g_vec^H  M  f_vec``; shape (T, (top+1) d, (top+1) d).
    """
    co = e.coefficients(np.atleast_1d(t), lam, 0)
    d = e.d
    top = (e.r + 1) // 2 if top is None else top
    M = np.zeros((co.T, (top + 1) * d, (top + 1) * d), dtype=complex)

    def blk(a, b):
        return (slice(None), slice(a * d, (a + 1) * d), slice(b * d, (b + 1) * d))

    for j in range(0, top + 1):
        M[blk(j, j)] += co.get("p", j)
    for j in range(1, top + 1):
        M[blk(j - 1, j)] += 0.5j * co.get("s", j)
        M[blk(j, j - 1)] += -0.5j * co.get("q", j)
    return M


@dataclass
class ValidationReport:
    residuals: dict
    tol: float
    passed: bool
    details: dict = field(default_factory=dict)


def validate_family(fam: LambdaFamily, ts, lams, tol: float = 1e-10) -> ValidationReport:
    """Sampled checks of the symmetry, dissipativity and weight-domination conditions.

    Residuals: ``symmetry`` (max deviation of p_j(lam) from p_j(conj lam)^* and
    q_j(lam) from s_j(conj lam)^*), ``dissipation`` (largest eigenvalue of
    Im(form of l_lam)/Im lam, should be <= 0), ``domination_gap`` and
    ``weight_min`` (smallest eigenvalues of -Im(form of l_lam)/Im lam - form(m)
    and of form(m), both should be >= 0).
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    sym = 0.0
    diss = -np.inf
    gap = np.inf
    wmin = np.inf
    top = (fam.r + 1) // 2
    Mm = form_matrix(fam.weight, ts, 0.0, top)
    Mm = 0.5 * (Mm + np.conj(np.swapaxes(Mm, -1, -2)))
    wmin = float(np.min(np.linalg.eigvalsh(Mm))) if Mm.size else 0.0
    for lam in lams:
        lam = complex(lam)
        a = fam.l_lam.coefficients(ts, lam, 0)
        b = fam.l_lam.coefficients(ts, lam.conjugate(), 0)
        rng = coefficient_ranges(fam.r)
        for j in rng["p"]:
            sym = max(sym, float(np.max(np.abs(a.get("p", j) - _herm(b.get("p", j))), initial=0.0)))
        for j in rng["q"]:
            sym = max(sym, float(np.max(np.abs(a.get("q", j) - _herm(b.get("s", j))), initial=0.0)))
        if lam.imag == 0:
            continue
        L = form_matrix(fam.l_lam, ts, lam, top)
        imL = (L - _herm(L)) / 2j / lam.imag
        imL = 0.5 * (imL + _herm(imL))
        diss = max(diss, float(np.max(np.linalg.eigvalsh(imL))))
        gap = min(gap, float(np.min(np.linalg.eigvalsh(-imL - Mm))))
    res = {"symmetry": sym, "dissipation": diss, "domination_gap": gap, "weight_min": wmin}
    scale = 1.0
    ok = sym <= tol * scale and diss <= tol and gap >= -tol and wmin >= -tol
    return ValidationReport(res, tol, bool(ok))


def _herm(a):
    return np.conj(np.swapaxes(a, -1, -2))
