"""Coefficient mini-language.

Scalar expressions in the real variable ``t`` and the complex spectral
parameter ``lam``, with exact symbolic differentiation in ``t``.  The grammar
has no conjugation, so every expression is holomorphic in ``lam`` away from
its poles::

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := ('-'|'+') unary | factor
    factor := base ('^' int)?
    base   := number | 'i' | 't' | 'lam' | func '(' expr ')' | '(' expr ')'
    func   := 'sin' | 'cos' | 'exp' | 'sqrt'

Evaluation is vectorised over ``t``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ParseError", "EvaluationError", "ScalarExpr", "Const", "ImagUnit", "Var",
    "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Func", "MatrixExpr",
    "parse_expr", "differentiate_t", "eval_matrix", "to_expr", "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class ParseError(ValueError):
    """Syntax error; ``column`` is 1-based (``len(source) + 1`` at end of input)."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} at column {column}")
        self.column = column


class EvaluationError(ArithmeticError):
    """Division by zero during evaluation; ``entry`` locates it inside a matrix."""

    def __init__(self, message: str, entry: tuple[int, int] | None = None):
        if entry is not None:
            message = f"{message} in entry {entry}"
        super().__init__(message)
        self.entry = entry


# --------------------------------------------------------------------------
# tree nodes
# --------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


class ScalarExpr:
    """Base class of the expression tree.  Nodes are immutable and hashable."""

    precedence = _PREC_ATOM

    def evaluate(self, t, lam=0.0):
        """Value at ``(t, lam)``; ``t`` may be an array, the result broadcasts to it."""
        val = self._eval(np.asarray(t, dtype=float), complex(lam))
        return np.broadcast_to(np.asarray(val, dtype=complex), np.shape(t)).copy() \
            if np.ndim(t) else complex(val)

    def _eval(self, t, lam):
        raise NotImplementedError

    def diff(self) -> "ScalarExpr":
        raise NotImplementedError

    def depends_on(self, name: str) -> bool:
        return any(c.depends_on(name) for c in self.children())

    def children(self) -> tuple["ScalarExpr", ...]:
        return ()

    def __str__(self):
        return self.to_source()

    def to_source(self) -> str:
        raise NotImplementedError

    def _wrap(self, child: "ScalarExpr", min_prec: int) -> str:
        s = child.to_source()
        return f"({s})" if child.precedence < min_prec else s


@dataclass(frozen=True)
class Const(ScalarExpr):
    value: complex

    def _eval(self, t, lam):
        return self.value

    def diff(self):
        return ZERO

    def to_source(self):
        v = complex(self.value)
        if v.imag == 0.0:
            return _fmt_real(v.real)
        if v.real == 0.0:
            return f"{_fmt_real(v.imag)}*i"
        return f"({_fmt_real(v.real)} + {_fmt_real(v.imag)}*i)"

    @property
    def precedence(self):
        v = complex(self.value)
        if v.imag == 0.0 and v.real >= 0.0:
            return _PREC_ATOM
        return _PREC_MUL if v.real == 0.0 and v.imag >= 0.0 else _PREC_ADD - 1


def _fmt_real(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


@dataclass(frozen=True)
class ImagUnit(ScalarExpr):
    def _eval(self, t, lam):
        return 1j

    def diff(self):
        return ZERO

    def to_source(self):
        return "i"


@dataclass(frozen=True)
class Var(ScalarExpr):
    name: str  # 't' or 'lam'

    def _eval(self, t, lam):
        return t if self.name == "t" else lam

    def diff(self):
        return ONE if self.name == "t" else ZERO

    def depends_on(self, name):
        return self.name == name

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class Neg(ScalarExpr):
    a: ScalarExpr
    precedence = _PREC_NEG

    def _eval(self, t, lam):
        return -self.a._eval(t, lam)

    def diff(self):
        return neg(self.a.diff())

    def children(self):
        return (self.a,)

    def to_source(self):
        return "-" + self._wrap(self.a, _PREC_NEG)


@dataclass(frozen=True)
class _Binary(ScalarExpr):
    a: ScalarExpr
    b: ScalarExpr
    symbol = "?"

    def children(self):
        return (self.a, self.b)

    def to_source(self):
        p = self.precedence
        # left-associative: the right operand needs strictly higher precedence
        return f"{self._wrap(self.a, p)} {self.symbol} {self._wrap(self.b, p + 1)}" \
            if p == _PREC_ADD else f"{self._wrap(self.a, p)}{self.symbol}{self._wrap(self.b, p + 1)}"


class Add(_Binary):
    symbol, precedence = "+", _PREC_ADD

    def _eval(self, t, lam):
        return self.a._eval(t, lam) + self.b._eval(t, lam)

    def diff(self):
        return add(self.a.diff(), self.b.diff())


class Sub(_Binary):
    symbol, precedence = "-", _PREC_ADD

    def _eval(self, t, lam):
        return self.a._eval(t, lam) - self.b._eval(t, lam)

    def diff(self):
        return sub(self.a.diff(), self.b.diff())


class Mul(_Binary):
    symbol, precedence = "*", _PREC_MUL

    def _eval(self, t, lam):
        return self.a._eval(t, lam) * self.b._eval(t, lam)

    def diff(self):
        return add(mul(self.a.diff(), self.b), mul(self.a, self.b.diff()))


class Div(_Binary):
    symbol, precedence = "/", _PREC_MUL

    def _eval(self, t, lam):
        den = np.asarray(self.b._eval(t, lam), dtype=complex)
        if np.any(den == 0):
            raise EvaluationError(f"division by zero in '{self.to_source()}'")
        return self.a._eval(t, lam) / den

    def diff(self):
        num = sub(mul(self.a.diff(), self.b), mul(self.a, self.b.diff()))
        return div(num, power(self.b, 2))


@dataclass(frozen=True)
class Pow(ScalarExpr):
    a: ScalarExpr
    n: int
    precedence = _PREC_POW

    def _eval(self, t, lam):
        base = np.asarray(self.a._eval(t, lam), dtype=complex)
        if self.n < 0 and np.any(base == 0):
            raise EvaluationError(f"division by zero in '{self.to_source()}'")
        return base ** self.n

    def diff(self):
        return mul(mul(Const(float(self.n)), power(self.a, self.n - 1)), self.a.diff())

    def children(self):
        return (self.a,)

    def to_source(self):
        exp = str(self.n) if self.n >= 0 else f"-{-self.n}"
        return f"{self._wrap(self.a, _PREC_ATOM)}^{exp}"


@dataclass(frozen=True)
class Func(ScalarExpr):
    name: str
    a: ScalarExpr

    def _eval(self, t, lam):
        return getattr(np, self.name)(np.asarray(self.a._eval(t, lam), dtype=complex))

    def diff(self):
        u, du = self.a, self.a.diff()
        if self.name == "sin":
            outer = Func("cos", u)
        elif self.name == "cos":
            outer = neg(Func("sin", u))
        elif self.name == "exp":
            outer = self
        else:  # sqrt
            outer = div(Const(0.5), self)
        return mul(outer, du)

    def children(self):
        return (self.a,)

    def to_source(self):
        return f"{self.name}({self.a.to_source()})"


ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# folding constructors (keep derivative trees small, no general simplification)
# --------------------------------------------------------------------------

def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or complex(e.value) == value)


def neg(a):
    if _is_const(a):
        return Const(-complex(a.value) if complex(a.value).imag else -complex(a.value).real)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def _const(v: complex) -> Const:
    v = complex(v)
    return Const(v.real if v.imag == 0 else v)


def add(a, b):
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    if _is_const(a) and _is_const(b):
        return _const(complex(a.value) + complex(b.value))
    return Add(a, b)


def sub(a, b):
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return _const(complex(a.value) - complex(b.value))
    return Sub(a, b)


def mul(a, b):
    if _is_const(a, 0) or _is_const(b, 0):
        return ZERO
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    if _is_const(a) and _is_const(b):
        return _const(complex(a.value) * complex(b.value))
    if _is_const(b):
        a, b = b, a
    if _is_const(a, -1):
        return neg(b)
    if _is_const(a) and isinstance(b, Neg):
        return mul(_const(-complex(a.value)), b.a)
    if _is_const(a) and isinstance(b, Mul) and _is_const(b.a):
        return mul(_const(complex(a.value) * complex(b.a.value)), b.b)
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0):
        return ZERO
    if _is_const(b, 1):
        return a
    return Div(a, b)


def power(a, n):
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def differentiate_t(e: ScalarExpr) -> ScalarExpr:
    """Exact derivative in ``t``."""
    return e.diff()


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


class _Parser:
    def __init__(self, source: str):
        self.src = source
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            m = _TOKEN.match(source, pos)
            if m is None:
                break
            kind = "num" if m.group(1) else "id" if m.group(2) else "op"
            text = m.group(m.lastindex)
            self.toks.append((kind, text, m.start(m.lastindex) + 1))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", len(self.src) + 1)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, text):
        kind, got, col = self.take()
        if got != text:
            what = "end of input" if kind == "eof" else repr(got)
            raise ParseError(f"expected '{text}', found {what}", col)

    def parse(self):
        e = self.expr()
        kind, text, col = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected {text!r}", col)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] in ("-", "+"):
            op = self.take()[1]
            operand = self.unary()
            return Neg(operand) if op == "-" else operand
        return self.factor()

    def factor(self):
        b = self.base()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, text, col = self.take()
            if kind != "num" or not text.isdigit():
                raise ParseError("integer exponent expected", col)
            return Pow(b, sign * int(text))
        return b

    def base(self):
        kind, text, col = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "id":
            if text == "i":
                return ImagUnit()
            if text in ("t", "lam"):
                return Var(text)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            raise ParseError(f"unknown identifier '{text}'", col)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError("unexpected end of input" if kind == "eof" else f"unexpected {text!r}", col)


def parse_expr(source: str) -> ScalarExpr:
    """Parse coefficient-language text into an expression tree."""
    return _Parser(source).parse()


def to_expr(value) -> ScalarExpr:
    """Coerce text, numbers or expressions to a :class:`ScalarExpr`."""
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    if isinstance(value, (int, float, complex, np.number)):
        return _const(complex(value))
    raise TypeError(f"cannot build an expression from {value!r}")


# --------------------------------------------------------------------------
# matrices
# --------------------------------------------------------------------------

ExprLike = Union[str, float, complex, ScalarExpr]


@dataclass(frozen=True)
class MatrixExpr:
    """Fixed-shape matrix of scalar expressions."""

    entries: tuple[tuple[ScalarExpr, ...], ...]

    def __post_init__(self):
        widths = {len(row) for row in self.entries}
        if len(widths) != 1 or not self.entries or 0 in widths:
            raise ValueError("matrix rows must be non-empty and of equal length")

    @classmethod
    def build(cls, rows: Sequence[Sequence[ExprLike]] | ExprLike) -> "MatrixExpr":
        if not isinstance(rows, (list, tuple)):
            rows = [[rows]]
        elif rows and not isinstance(rows[0], (list, tuple)):
            rows = [[r] for r in rows]  # column vector
        return cls(tuple(tuple(to_expr(x) for x in row) for row in rows))

    @classmethod
    def scalar_identity(cls, value: ExprLike, d: int) -> "MatrixExpr":
        v = to_expr(value)
        return cls(tuple(tuple(v if i == j else ZERO for j in range(d)) for i in range(d)))

    @classmethod
    def zeros(cls, rows: int, cols: int | None = None) -> "MatrixExpr":
        return cls(tuple((ZERO,) * (cols or rows) for _ in range(rows)))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.entries[0])

    @cached_property
    def is_zero(self) -> bool:
        return all(_is_const(e, 0) for row in self.entries for e in row)

    def depends_on(self, name: str) -> bool:
        return any(e.depends_on(name) for row in self.entries for e in row)

    def diff_t(self) -> "MatrixExpr":
        return MatrixExpr(tuple(tuple(e.diff() for e in row) for row in self.entries))

    def evaluate(self, t, lam=0.0) -> np.ndarray:
        """Array of shape ``np.shape(t) + (rows, cols)``."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + self.shape, dtype=complex)
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                try:
                    out[..., i, j] = e._eval(t, complex(lam))
                except EvaluationError as err:
                    raise EvaluationError(str(err), (i, j)) from None
        return out

    def to_source(self) -> list[list[str]]:
        return [[e.to_source() for e in row] for row in self.entries]


def eval_matrix(m: MatrixExpr, t, lam=0.0) -> np.ndarray:
    """Entrywise evaluation; raises :class:`EvaluationError` naming the entry."""
    return m.evaluate(t, lam)
