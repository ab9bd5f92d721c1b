"""Command-line batch runner: ``genres run <config>``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .canon import Applied, check_identities, random_smooth_function
from .charop import (CharacteristicOperator, bump_trials, char_projection, separation_check,
                     validate_pair, verify_characteristic)
from .config import ConfigError, ProblemConfig, load_config
from .expr import WeightExpression, validate_family
from .forms import Grid, null_check, relation_checks
from .resolvent import (Resolvent, green_residual, green_residual_spectral, property_suite,
                        residuals_ode_bc)
from .solve import CanonicalSystem, definiteness_check, delta_matrix, integrate_fundamental
from .weyl import (WeylError, factor_projection, herglotz_check, projection_from_pair,
                   right_weyl_function, split_resolvent, weyl_solutions)

__all__ = ["main", "Runner", "dumps", "BUNDLED"]

log = logging.getLogger("genres")
BUNDLED = Path(__file__).with_name("configs")


# --------------------------------------------------------------------------
# deterministic serialisation
# --------------------------------------------------------------------------

def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 0) -> str:
    """JSON text with floats printed to 17 significant digits and sorted keys."""
    pad, pad1 = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad1}"{k}": {dumps(obj[k], indent + 1)}' for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(dumps(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return f"[{_num(obj.real)}, {_num(obj.imag)}]"
    if obj is None:
        return "null"
    s = str(obj).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'


def _lam_key(lam: complex) -> str:
    return f"{lam.real:+.6g}{lam.imag:+.6g}i"


# --------------------------------------------------------------------------
# runner
# --------------------------------------------------------------------------

class Runner:
    """Executes the tasks of one configuration and collects records."""

    def __init__(self, cfg: ProblemConfig, jobs: int = 1):
        self.cfg = cfg
        self.jobs = max(1, int(jobs))
        self.grid = Grid(cfg.a, cfg.b, cfg.N)
        self.sys = CanonicalSystem(cfg.family, cfg.a, cfg.b)
        self.records: list[dict] = []
        self.timings: dict = {}
        self.curves: list[tuple[str, np.ndarray, np.ndarray]] = []
        self._R = None
        self._Mop = None

    # shared objects --------------------------------------------------------
    @property
    def Mop(self) -> CharacteristicOperator:
        if self._Mop is None:
            cfg = self.cfg
            if cfg.pair is not None:
                self._Mop = CharacteristicOperator.from_pair(cfg.pair, self.sys, self.grid, cfg.substeps)
            elif cfg.nevanlinna is not None:
                self._Mop = CharacteristicOperator.from_projection(self._projection, self.sys.G)
            else:
                raise ConfigError("boundary", "no boundary data")
        return self._Mop

    def _projection(self, lam):
        fs = integrate_fundamental(self.sys, lam, self.grid, self.cfg.substeps)
        m = right_weyl_function(fs, self.cfg.right)
        return projection_from_pair(self.cfg.nevanlinna, m, lam)

    @property
    def R(self) -> Resolvent:
        if self._R is None:
            self._R = Resolvent(self.sys, self.grid, self.Mop, self.cfg.substeps)
        return self._R

    def _lams_closed(self):
        out = []
        for lam in self.cfg.lams:
            for z in (lam, lam.conjugate()):
                if z not in out:
                    out.append(z)
        return out

    def _map(self, fn, items):
        if self.jobs == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.jobs) as ex:
            return list(ex.map(fn, items))

    # running ---------------------------------------------------------------
    def run(self) -> list[dict]:
        for task in ("validate", "identities", "resolve", "properties", "weyl", "green", "oracle"):
            if task not in self.cfg.tasks:
                continue
            t0 = time.perf_counter()
            try:
                status, res, msg = getattr(self, "task_" + task)()
            except (ArithmeticError, ValueError, np.linalg.LinAlgError, FloatingPointError) as err:
                status, res, msg = "fail", {}, f"{type(err).__name__}: {err}"
            rec = {"task": task, "status": status, "residuals": res, "inputs": self.digest()}
            if msg:
                rec["message"] = msg
            self.records.append(rec)
            self.timings[task] = time.perf_counter() - t0
            log.info("%s: %s", task, status)
        return self.records

    def digest(self) -> str:
        text = Path(self.cfg.source).read_bytes() if self.cfg.source and Path(self.cfg.source).exists() else b""
        extra = f"{self.cfg.N}|{self.cfg.substeps}|{self.cfg.seed}|{sorted(self.cfg.tol.items())}".encode()
        return hashlib.sha256(text + extra).hexdigest()[:16]

    @property
    def failed(self) -> bool:
        return any(r["status"] == "fail" for r in self.records)

    # tasks -----------------------------------------------------------------
    def task_validate(self):
        cfg, tol = self.cfg, self.cfg.tol
        ts = np.linspace(cfg.a, cfg.b, 21)
        vr = validate_family(cfg.family, ts, self._lams_closed())
        res = {f"family_{k}": v for k, v in vr.residuals.items()}
        ok = vr.passed
        for lam in cfg.lams:
            key = _lam_key(lam)
            if cfg.pair is not None:
                pr = validate_pair(cfg.pair, self.sys, lam)
                for k, v in pr.as_dict().items():
                    res[f"pair_{k}[{key}]"] = v
                ok &= pr.passed
            if cfg.nevanlinna is not None:
                K = cfg.nevanlinna.K(lam)
                res[f"K_sigma_min[{key}]"] = float(np.linalg.svd(K, compute_uv=False)[-1])
                diss = cfg.nevanlinna.dissipation(lam)
                res[f"left_dissipation[{key}]"] = diss
                ok &= diss <= tol["flux"] and res[f"K_sigma_min[{key}]"] > 1e-12
            fs = integrate_fundamental(self.sys, lam, self.grid, cfg.substeps)
            dd = definiteness_check(delta_matrix(self.sys, fs, "nevanlinna"))
            res[f"definiteness_delta[{key}]"] = dd.delta if dd.delta is not None else 0.0
        for i, f in enumerate(cfg.null_functions):
            nc = null_check(cfg.family.weight, f, self.grid, tol["null"])
            res[f"null_form[{i}]"] = nc.form_value
            res[f"null_pointwise[{i}]"] = nc.pointwise
            ok &= nc.is_null
        return ("pass" if ok else "fail"), res, ""

    def task_identities(self):
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        ts = np.linspace(cfg.a, cfg.b, 11)
        rep = check_identities(cfg.family, ts, cfg.lams, rng)
        res = dict(rep.residuals)
        d = cfg.d
        for lam in cfg.lams:
            f1, f2, y = (random_smooth_function(d, rng) for _ in range(3))
            for k, v in relation_checks(cfg.family, f1, f2, y, ts, lam).items():
                res[k] = max(res.get(k, 0.0), v)
        ok = all(v <= cfg.tol["identity"] for v in res.values())
        return ("pass" if ok else "fail"), res, ""

    def _bc_residual(self, r):
        cfg = self.cfg
        if cfg.pair is not None:
            rep = residuals_ode_bc(r, cfg.family, cfg.pair, self.grid)
            return rep.ode, rep.boundary
        rep = residuals_ode_bc(r, cfg.family, None, self.grid)
        lam = r.lam
        Z = np.vstack([cfg.nevanlinna.a(lam), cfg.nevanlinna.b(lam)])
        xa, xb = r.xvec[0], r.xvec[-1]
        h, *_ = np.linalg.lstsq(Z, xa, rcond=None)
        scale = max(1.0, float(np.max(np.abs(r.xvec))))
        left = float(np.linalg.norm(Z @ h - xa)) / scale
        right = float(np.linalg.norm(cfg.right @ xb)) / scale
        return rep.ode, max(left, right)

    def task_resolve(self):
        cfg, tol = self.cfg, self.cfg.tol
        R = self.R

        def one(lam):
            out = []
            for i, f in enumerate(cfg.functions):
                r = R.apply(f, lam)
                ode, bnd = self._bc_residual(r)
                out.append((i, r, ode, bnd))
            return lam, out

        res, ok = {}, True
        for lam, items in self._map(one, cfg.lams):
            for i, r, ode, bnd in items:
                key = f"{_lam_key(lam)},f{i}"
                res[f"ode[{key}]"] = ode
                res[f"boundary[{key}]"] = bnd
                ok &= ode <= tol["ode"] and bnd <= tol["boundary"]
                for c in range(cfg.d):
                    name = f"y1_lam{_lam_key(lam)}_f{i}" + (f"_c{c}" if cfg.d > 1 else "")
                    self.curves.append((name, r.t, r.y1[:, c]))
        return ("pass" if ok else "fail"), res, ""

    def task_properties(self):
        cfg, tol = self.cfg, self.cfg.tol
        rng = np.random.default_rng(cfg.seed)
        fs = list(cfg.functions)
        if len(fs) < 2:
            fs.append(random_smooth_function(cfg.d, rng))
        rep = property_suite(self.R, fs, cfg.lams)
        res = rep.as_dict()
        cert = verify_characteristic(self.Mop, self.sys, self.grid, bump_trials(self.grid, self.sys.D, 3, rng),
                                     self._lams_closed(), cfg.substeps, contour=False)
        res["flux"] = max(cert.flux.values())
        res["symmetry"] = max(cert.symmetry.values())
        ok = (rep.adjointness <= tol["adjointness"] and rep.nevanlinna <= tol["nevanlinna"]
              and rep.norm_slack >= -tol["norm"] and rep.holomorphy <= tol["holomorphy"]
              and rep.weighted <= tol["nevanlinna"] and res["flux"] <= tol["flux"]
              and res["symmetry"] <= tol["flux"])
        return ("pass" if ok else "fail"), res, ""

    def task_weyl(self):
        cfg, tol = self.cfg, self.cfg.tol
        if cfg.r % 2:
            return "skipped", {}, "separated data need even r"
        res, ok = {}, True
        G = self.sys.G
        ms = {}
        for lam in self._lams_closed():
            key = _lam_key(lam)
            P, _ = char_projection(self.Mop(lam), G)
            sep, _ = separation_check(P, tol["separation"])
            res[f"separation[{key}]"] = sep
            if sep > tol["separation"]:
                ok = False
                continue
            try:
                fr = factor_projection(P, tol["separation"])
            except WeylError as err:
                return "fail", res, str(err)
            res[f"rebuild_range[{key}]"] = fr.residual_range
            res[f"rebuild_complement[{key}]"] = fr.residual_complement
            ok &= max(fr.residual_range, fr.residual_complement) <= tol["separation"]
            ms[lam] = fr.m
        if cfg.nevanlinna is not None:
            pair = cfg.nevanlinna
            wds = {}
            for lam in self._lams_closed():
                fs = integrate_fundamental(self.sys, lam, self.grid, cfg.substeps)
                wds[lam] = weyl_solutions(pair, fs, right_weyl_function(fs, cfg.right))
            hr = herglotz_check(lambda z: wds[z].mab, cfg.lams)
            res["herglotz_min"] = hr.positivity
            res["mab_symmetry"] = hr.symmetry
            ok &= hr.positivity >= -tol["herglotz"] and hr.symmetry <= tol["herglotz"]
            for lam in cfg.lams:
                for i, f in enumerate(cfg.functions):
                    y = split_resolvent(self.R, wds[lam], wds[lam.conjugate()], f)
                    y0 = self.R.apply(f, lam).y1
                    gap = float(np.max(np.abs(y - y0))) / max(1.0, float(np.max(np.abs(y0))))
                    res[f"split[{_lam_key(lam)},f{i}]"] = gap
                    ok &= gap <= tol["split"]
        elif all(z in ms for z in self._lams_closed()):
            hr = herglotz_check(lambda z: ms[z], cfg.lams)
            res["m_herglotz_min"] = hr.positivity
            res["m_symmetry"] = hr.symmetry
        return ("pass" if ok else "fail"), res, ""

    def task_green(self):
        cfg, tol = self.cfg, self.cfg.tol
        rng = np.random.default_rng(cfg.seed + 1)
        d = cfg.d
        mI = WeightExpression(d, 0, p=["1"])
        res, ok = {}, True
        L = cfg.family.l_lam
        for i, lam in enumerate(cfg.lams):
            y1, y2 = random_smooth_function(d, rng), random_smooth_function(d, rng)
            diff, scale = green_residual(L, L, mI, mI, y1, Applied(L, y1, lam), y2, Applied(L, y2, lam),
                                         self.grid, lam)
            res[f"green[{_lam_key(lam)}]"] = abs(diff) / scale
            ok &= abs(diff) <= tol["green"] * scale
            if cfg.family.weight.s == 0:
                lam2 = cfg.lams[(i + 1) % len(cfg.lams)]
                diff, scale = green_residual_spectral(cfg.family, y1, y2, lam, lam2, self.grid)
                res[f"green_spectral[{_lam_key(lam)}]"] = abs(diff) / scale
                ok &= abs(diff) <= tol["green"] * scale
        return ("pass" if ok else "fail"), res, ""

    def task_oracle(self):
        cfg, tol = self.cfg, self.cfg.tol
        res, ok = {}, True
        t = self.grid.nodes
        for lam in cfg.lams:
            for i, f in enumerate(cfg.functions):
                y = self.R.apply(f, lam).y1
                if cfg.oracle["type"] == "exact":
                    ex = cfg.oracle["solutions"][i].evaluate(t, lam)[:, 0, :]
                    err = float(np.max(np.abs(y - ex))) / max(1e-300, float(np.max(np.abs(ex))))
                else:
                    idx = np.linspace(0, cfg.N, 17).astype(int)
                    ex = _green_dirichlet(f, lam, cfg.a, cfg.b, t[idx])
                    err = float(np.max(np.abs(y[idx, 0] - ex))) / max(1e-300, float(np.max(np.abs(ex))))
                res[f"oracle[{_lam_key(lam)},f{i}]"] = err
                ok &= err <= tol["oracle"]
        return ("pass" if ok else "fail"), res, ""


def _green_dirichlet(f, lam, a, b, ts):
    """int G(t, s) f(s) ds for -y'' - lam y = f with y(a) = y(b) = 0, by adaptive quadrature."""
    k = np.sqrt(complex(lam))
    den = k * np.sin(k * (b - a))

    def fv(s):
        return complex(f.jet(np.array([s]), 0)[0, 0, 0])

    out = []
    for t in ts:
        def left(s, part):
            v = np.sin(k * (s - a)) * np.sin(k * (b - t)) * fv(s) / den
            return v.real if part == 0 else v.imag

        def right(s, part):
            v = np.sin(k * (t - a)) * np.sin(k * (b - s)) * fv(s) / den
            return v.real if part == 0 else v.imag
        val = 0j
        for fn, lo, hi in ((left, a, t), (right, t, b)):
            if hi > lo:
                re = quad(fn, lo, hi, args=(0,), epsabs=1e-14, epsrel=1e-13, limit=200)[0]
                im = quad(fn, lo, hi, args=(1,), epsabs=1e-14, epsrel=1e-13, limit=200)[0]
                val += re + 1j * im
        out.append(val)
    return np.array(out)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def emit(runner: Runner, fmt: str, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "structured":
        report = {"config": runner.cfg.name, "seed": runner.cfg.seed, "records": runner.records}
        p = out / "report.json"
        p.write_text(dumps(report) + "\n", encoding="utf-8")
        written.append(p)
        p = out / "timings.json"
        p.write_text(dumps({k: round(v, 3) for k, v in runner.timings.items()}) + "\n", encoding="utf-8")
        written.append(p)
    else:
        p = out / "summary.csv"
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "status", "residual", "value"])
            for rec in runner.records:
                for k in sorted(rec["residuals"]):
                    w.writerow([rec["task"], rec["status"], k, format(float(rec["residuals"][k]), ".17g")])
        written.append(p)
        for name, t, y in runner.curves:
            p = out / f"{name}.csv"
            with p.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "re_y1", "im_y1"])
                for tk, yk in zip(t, y):
                    w.writerow([format(tk, ".17g"), format(yk.real, ".17g"), format(yk.imag, ".17g")])
            written.append(p)
    return written


def _resolve_config(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    cand = BUNDLED / (name if name.endswith(".yaml") else name + ".yaml")
    if cand.exists():
        return cand
    raise FileNotFoundError(f"no such config: {name}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="genres", description="Generalized resolvents of differential expressions.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run the tasks of a configuration file (or a bundled name)")
    run.add_argument("config")
    run.add_argument("--out", default="genres_out")
    run.add_argument("--format", choices=("table", "structured"), default="structured")
    run.add_argument("--grid-n", type=int)
    run.add_argument("--substeps", type=int)
    run.add_argument("--tol", type=float, help="use this value for every residual tolerance")
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("list", help="list bundled configurations")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.cmd == "list":
        for p in sorted(BUNDLED.glob("*.yaml")):
            print(p.stem)
        return 0
    try:
        cfg = load_config(_resolve_config(args.config))
        if args.grid_n is not None:
            if args.grid_n < 8 or args.grid_n % 2:
                raise ConfigError("--grid-n", "N must be even and at least 8")
            cfg.N = args.grid_n
        if args.substeps is not None:
            cfg.substeps = args.substeps
        if args.seed is not None:
            cfg.seed = args.seed
        if args.tol is not None:
            cfg.tol = {k: args.tol for k in cfg.tol}
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    runner = Runner(cfg, args.jobs)
    runner.run()
    emit(runner, args.format, Path(args.out))
    for rec in runner.records:
        print(f"{rec['task']:<11} {rec['status']}" + (f"  ({rec['message']})" if "message" in rec else ""))
    return 1 if runner.failed else 0


if __name__ == "__main__":
    sys.exit(main())
