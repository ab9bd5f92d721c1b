"""YAML problem configurations for the batch runner."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .canon import ExprFunction
from .charop import BoundaryPair
from .coeff import MatrixExpr, ParseError, parse_expr
from .expr import DiffExpression, LambdaFamily, WeightExpression
from .weyl import NevanlinnaPair

__all__ = ["ConfigError", "ProblemConfig", "load_config", "parse_config", "TASKS", "scalar"]

TASKS = ("validate", "identities", "resolve", "properties", "weyl", "green", "oracle")
_PI = re.compile(r"\bpi\b")


class ConfigError(ValueError):
    """Schema violation; ``path`` locates the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _src(value) -> str:
    """Coefficient source text; the name ``pi`` is expanded to its value."""
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, (int, float)):
        return repr(float(value))
    if isinstance(value, str):
        return _PI.sub(repr(float(np.pi)), value)
    raise TypeError(f"expected a number or expression, got {type(value).__name__}")


def scalar(value, path: str = "value") -> complex:
    """A constant: number or coefficient-language text without t and lam."""
    try:
        e = parse_expr(_src(value))
    except (TypeError, ParseError) as err:
        raise ConfigError(path, str(err)) from err
    if e.depends_on("t") or e.depends_on("lam"):
        raise ConfigError(path, "constant expected")
    return complex(np.asarray(e.evaluate(0.0, 0.0)).ravel()[0])


def _coef(value, d: int, path: str):
    """A coefficient: scalar text (multiple of I) or a d x d list of texts."""
    try:
        if isinstance(value, list):
            rows = [[_src(x) for x in row] for row in value]
            if len(rows) != d or any(len(r) != d for r in rows):
                raise ConfigError(path, f"expected a {d}x{d} matrix")
            return MatrixExpr.build(rows)
        src = _src(value)
        parse_expr(src)
        return src
    except (TypeError, ParseError) as err:
        raise ConfigError(path, str(err)) from err


def _matrix(value, path: str, shape: tuple[int, int] | None = None) -> MatrixExpr:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "matrix must be a list of rows")
    try:
        m = MatrixExpr.build([[_src(x) for x in row] for row in value])
    except (TypeError, ParseError) as err:
        raise ConfigError(path, str(err)) from err
    if shape is not None and m.shape != shape:
        raise ConfigError(path, f"expected shape {shape}, got {m.shape}")
    return m


def _coef_list(section: dict, key: str, d: int, path: str):
    vals = section.get(key, [])
    if not isinstance(vals, list):
        raise ConfigError(f"{path}.{key}", "expected a list")
    return [_coef(v, d, f"{path}.{key}[{i}]") for i, v in enumerate(vals)]


@dataclass
class ProblemConfig:
    name: str
    a: float
    b: float
    family: LambdaFamily
    lams: list
    tasks: list
    functions: list
    N: int = 2000
    substeps: int = 4
    pair: BoundaryPair | None = None
    nevanlinna: NevanlinnaPair | None = None
    right: np.ndarray | None = None
    oracle: dict | None = None
    null_functions: list = field(default_factory=list)
    tol: dict = field(default_factory=dict)
    seed: int = 0
    source: str = ""

    @property
    def d(self) -> int:
        return self.family.d

    @property
    def r(self) -> int:
        return self.family.r


DEFAULT_TOL = {
    "identity": 1e-9, "ode": 1e-6, "boundary": 1e-7, "adjointness": 1e-7, "nevanlinna": 1e-8,
    "norm": 1e-8, "holomorphy": 1e-7, "separation": 1e-9, "herglotz": 1e-9, "split": 1e-8,
    "green": 1e-7, "oracle": 1e-6, "null": 1e-10, "flux": 1e-8,
}


def _need(raw: dict, key: str, path: str):
    if key not in raw:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
    return raw[key]


def _functions(raw, d: int, path: str) -> list:
    out = []
    if not isinstance(raw, list):
        raise ConfigError(path, "expected a list")
    for i, f in enumerate(raw):
        comps = f if isinstance(f, list) else [f]
        if len(comps) != d:
            raise ConfigError(f"{path}[{i}]", f"expected {d} components")
        try:
            out.append(ExprFunction([_src(c) for c in comps]))
        except (TypeError, ParseError) as err:
            raise ConfigError(f"{path}[{i}]", str(err)) from err
    return out


def parse_config(raw: dict, source: str = "") -> ProblemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    name = str(raw.get("name", Path(source).stem or "problem"))
    iv = _need(raw, "interval", "")
    if not isinstance(iv, list) or len(iv) != 2:
        raise ConfigError("interval", "expected [a, b]")
    a, b = (scalar(x, f"interval[{i}]").real for i, x in enumerate(iv))
    if not b > a:
        raise ConfigError("interval", "need a < b")
    d = int(_need(raw, "d", ""))
    r = int(_need(raw, "r", ""))
    if d < 1 or r < 1:
        raise ConfigError("d", "d and r must be positive")
    co = raw.get("coefficients", {}) or {}
    try:
        base = DiffExpression(d, r, p=_coef_list(co, "p", d, "coefficients"),
                              q=_coef_list(co, "q", d, "coefficients"),
                              s=_coef_list(co, "s", d, "coefficients"))
    except ConfigError:
        raise
    except (ValueError, IndexError) as err:
        raise ConfigError("coefficients", str(err)) from err
    w = raw.get("weight", {"s": 0, "p": ["1"]})
    try:
        weight = WeightExpression(d, int(w.get("s", 0)), p=_coef_list(w, "p", d, "weight"),
                                  q=_coef_list(w, "q", d, "weight"))
    except ConfigError:
        raise
    except (ValueError, IndexError) as err:
        raise ConfigError("weight", str(err)) from err
    nev = None
    if raw.get("nev"):
        nv = raw["nev"]
        try:
            nev = DiffExpression(d, int(_need(nv, "r", "nev")), p=_coef_list(nv, "p", d, "nev"),
                                 q=_coef_list(nv, "q", d, "nev"), s=_coef_list(nv, "s", d, "nev"))
        except ConfigError:
            raise
        except (ValueError, IndexError) as err:
            raise ConfigError("nev", str(err)) from err
    try:
        family = LambdaFamily(base, weight, nev)
    except ValueError as err:
        raise ConfigError("weight", str(err)) from err

    tasks = raw.get("tasks", list(TASKS))
    if not isinstance(tasks, list) or any(t not in TASKS for t in tasks):
        raise ConfigError("tasks", f"tasks must be a subset of {list(TASKS)}")
    lams = [scalar(x, f"lam[{i}]") for i, x in enumerate(_need(raw, "lam", ""))]
    if not lams:
        raise ConfigError("lam", "at least one lam is required")
    needs_nonreal = {"resolve", "properties", "weyl", "oracle", "validate"} & set(tasks)
    for i, lam in enumerate(lams):
        if needs_nonreal and lam.imag == 0:
            raise ConfigError(f"lam[{i}]", "nonreal lam required")

    D = r * d
    pair = nevp = right = None
    bnd = raw.get("boundary")
    if bnd is not None:
        kind = bnd.get("type", "pair")
        if kind == "pair":
            pair = BoundaryPair(_matrix(_need(bnd, "M", "boundary"), "boundary.M", (D, D)),
                                _matrix(_need(bnd, "N", "boundary"), "boundary.N", (D, D)),
                                bnd.get("kind", "coupled"))
        elif kind == "separated":
            if r % 2:
                raise ConfigError("boundary.type", "separated data need even r")
            k = D // 2
            am = _matrix(_need(bnd, "a", "boundary"), "boundary.a", (k, k))
            bm = _matrix(_need(bnd, "b", "boundary"), "boundary.b", (k, k))
            nevp = NevanlinnaPair(am, bm)
            gm = _matrix(_need(bnd, "right", "boundary"), "boundary.right", (k, D))
            right = gm.evaluate(0.0, 0.0)
        else:
            raise ConfigError("boundary.type", "expected 'pair' or 'separated'")
    elif set(tasks) & {"resolve", "properties", "oracle"}:
        raise ConfigError("boundary", "boundary data are required for resolve tasks")

    grid = raw.get("grid", {}) or {}
    N = int(grid.get("N", 2000))
    if N < 8 or N % 2:
        raise ConfigError("grid.N", "N must be even and at least 8")
    functions = _functions(raw.get("functions", ["1"] if d == 1 else [["1"] * d]), d, "functions")
    nulls = _functions(raw.get("null_functions", []), d, "null_functions")
    tol = dict(DEFAULT_TOL)
    for k, v in (raw.get("tolerances", {}) or {}).items():
        if k not in DEFAULT_TOL:
            raise ConfigError(f"tolerances.{k}", "unknown tolerance")
        tol[k] = float(v)
    oracle = raw.get("oracle")
    if "oracle" in tasks:
        if not isinstance(oracle, dict) or oracle.get("type") not in ("exact", "green_dirichlet"):
            raise ConfigError("oracle", "oracle task needs oracle.type 'exact' or 'green_dirichlet'")
        if oracle["type"] == "exact":
            sols = oracle.get("solutions")
            if not isinstance(sols, list) or len(sols) != len(functions):
                raise ConfigError("oracle.solutions", "one exact solution per function required")
            oracle = dict(oracle, solutions=[_matrix([s] if isinstance(s, list) else [[s]],
                                                     f"oracle.solutions[{i}]") for i, s in enumerate(sols)])
    return ProblemConfig(name=name, a=a, b=b, family=family, lams=lams, tasks=list(tasks),
                         functions=functions, N=N, substeps=int(grid.get("substeps", 4)), pair=pair,
                         nevanlinna=nevp, right=right, oracle=oracle, null_functions=nulls, tol=tol,
                         seed=int(raw.get("seed", 0)), source=source)


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(str(path), f"invalid YAML: {err}") from err
    return parse_config(raw, str(path))
