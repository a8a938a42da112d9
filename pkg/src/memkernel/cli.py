"""Batch front-end: ``manufacture``, ``identify``, ``verify`` and ``coeff-report``.

Configuration is an INI file (see ``presets/`` and the README for the
grammar). Exit codes: 0 success, 1 failed verification or unexpected error,
2 invalid configuration or input, 3 I/O failure, 4 degenerate data,
5 solvability failure, 6 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from . import checks
from .coefficients import CoefficientSpec, build_coefficients, conormal_vector, ellipticity_margin, trace_profile
from .errors import ConfigurationError, MemkernelError
from .forward import SpaceTimeField, manufacture
from .grid import RadialGrid, TimeGrid
from .inverse_radial import METHODS, RadialInverseInput, identify
from .io import atomic_write_text, load_config, read_field, read_profile, write_field, write_key_values, write_profile

__all__ = ["main", "RunConfig", "parse_config"]

WORKERS_ENV = "MEMKERNEL_WORKERS"
_T, _R = sp.symbols("t r", real=True)


def _expression(text: str, variables: tuple[sp.Symbol, ...], what: str) -> Callable:
    try:
        expr = sp.sympify(text, locals={"t": _T, "r": _R})
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse {what} = {text!r}: {exc}") from exc
    extra = expr.free_symbols - set(variables)
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ConfigurationError(f"{what} may only use {', '.join(map(str, variables))}; found {names}")
    fn = sp.lambdify(variables, expr, "numpy")

    def evaluate(*args):
        shape = np.broadcast(*args).shape
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), shape)

    return evaluate


@dataclass(frozen=True)
class RunConfig:
    dimension: int = 3
    r1: float = 1.0
    r2: float = 2.0
    t_max: float = 1.0
    bc: tuple[str, str] = ("D", "D")
    kernel: str = "exp(-t)*(1 + r)"
    state: str = "r**2 + t*r"
    lam: str = "1"
    family: str = "radial_abcd"
    a: str = "1"
    b: str = "0"
    d: str = "0"
    c: str = "0"
    asymmetry: float = 0.0
    n_r: int = 64
    n_t: int = 64
    method: str = "time_march"
    green: str = "closed_form"
    tol: float = 1e-10
    max_iter: int = 40
    constraint_factor: float = 1.0
    error_tol: float = 0.02
    agreement_tol: float = 1e-8
    sweep: tuple[int, ...] = (16, 32, 64)
    order_min: float = 1.5
    order_max: float = 2.5
    random_cases: int = 20
    out: str = "out"
    input: str | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        if not self.r2 > self.r1 > 0:
            raise ConfigurationError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if not self.t_max > 0:
            raise ConfigurationError("t_max must be positive")
        if self.n_r < 4 or self.n_t < 2:
            raise ConfigurationError(f"grid too coarse: n_r={self.n_r} (min 4), n_t={self.n_t} (min 2)")
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.green not in ("closed_form", "discrete"):
            raise ConfigurationError(f"green must be closed_form or discrete, got {self.green!r}")
        if any(b not in ("D", "N") for b in self.bc):
            raise ConfigurationError(f"bc entries must be D or N, got {self.bc}")
        if any(n < 4 for n in self.sweep):
            raise ConfigurationError("sweep sizes must be at least 4")

    # -- derived objects ---------------------------------------------------
    def grids(self) -> tuple[RadialGrid, TimeGrid]:
        return RadialGrid.with_intervals(self.r1, self.r2, self.n_r), TimeGrid(self.t_max, self.n_t)

    def kernel_fn(self) -> Callable:
        return _expression(self.kernel, (_T, _R), "kernel")

    def state_fn(self) -> Callable:
        return _expression(self.state, (_T, _R), "state")

    def lam_fn(self) -> Callable:
        return _expression(self.lam, (_R,), "lam")

    def coefficient_spec(self) -> CoefficientSpec:
        profiles = {k: _expression(getattr(self, k), (_R,), k) for k in "abd"}
        c_fn = _expression(self.c, (_R,), "c")

        def c_field(x):
            return c_fn(np.linalg.norm(x, axis=-1))

        base = CoefficientSpec(dimension=self.dimension, family=self.family, c=c_field, **profiles)
        if self.asymmetry == 0.0:
            return base
        eps = self.asymmetry
        bump = np.zeros((self.dimension, self.dimension))
        bump[0, 1] = bump[1, 0] = eps

        def tensor(x):
            return build_coefficients(base, x, check=False) + bump

        return CoefficientSpec(dimension=self.dimension, family="custom", tensor=tensor, unchecked=True)

    def with_size(self, n: int) -> "RunConfig":
        return replace(self, n_r=n, n_t=n)


_FIELDS = {
    "problem": {"dimension": int, "r1": float, "r2": float, "t_max": float, "bc": "bc"},
    "manufactured": {"kernel": str, "state": str},
    "measurement": {"lam": str},
    "coefficients": {"family": str, "a": str, "b": str, "d": str, "c": str, "asymmetry": float},
    "grids": {"n_r": int, "n_t": int},
    "solver": {
        "method": str,
        "green": str,
        "tol": float,
        "max_iter": int,
        "constraint_factor": float,
        "agreement_tol": float,
    },
    "verify": {
        "error_tol": float,
        "sweep": "ints",
        "order_min": float,
        "order_max": float,
        "random_cases": int,
    },
    "io": {"out": str, "input": str},
}


def _convert(kind, raw: str, key: str):
    try:
        if kind == "bc":
            parts = tuple(p.strip().upper() for p in raw.split(","))
            if len(parts) != 2:
                raise ValueError("expected two entries: outer, inner")
            return parts
        if kind == "ints":
            return tuple(int(p) for p in raw.split(",") if p.strip())
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config(parser: configparser.ConfigParser) -> RunConfig:
    """Turn a parsed INI file into a :class:`RunConfig`; unknown keys are errors."""
    values = {}
    for section in parser.sections():
        if section not in _FIELDS:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _FIELDS[section]:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(_FIELDS[section][key], raw.strip(), f"{section}.{key}")
    return RunConfig(**values)


def preset_names() -> list[str]:
    root = resources.files("memkernel") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def _load(args) -> RunConfig:
    if args.preset:
        path = resources.files("memkernel") / "presets" / f"{args.preset}.ini"
        if not path.is_file():
            raise ConfigurationError(f"unknown preset {args.preset!r}; available: {', '.join(preset_names())}")
        cfg = parse_config(load_config(text=path.read_text()))
    elif args.config:
        if not Path(args.config).is_file():
            raise ConfigurationError(f"config file {args.config} does not exist")
        cfg = parse_config(load_config(args.config))
    else:
        cfg = RunConfig()
    overrides = {}
    if getattr(args, "method", None):
        overrides["method"] = args.method
    if args.out:
        overrides["out"] = args.out
    if getattr(args, "input", None):
        overrides["input"] = args.input
    if getattr(args, "sweep", None):
        overrides["sweep"] = _parse_sweep(args.sweep)
    return replace(cfg, **overrides) if overrides else cfg


def _parse_sweep(text: str) -> tuple[int, ...]:
    key, _, raw = text.partition("=")
    if key.strip() != "n_r" or not raw:
        raise ConfigurationError(f"--sweep expects n_r=N1,N2,...; got {text!r}")
    return _convert("ints", raw, "--sweep")


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def _emit(lines: list[str], out_dir: Path | None, name: str = "report.txt") -> None:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_dir is not None:
        atomic_write_text(out_dir / name, text)


# -- pipeline steps ----------------------------------------------------------
def manufactured_fields(cfg: RunConfig):
    grid, tgrid = cfg.grids()
    k_true = SpaceTimeField.sample(cfg.kernel_fn(), grid, tgrid)
    u = SpaceTimeField.sample(cfg.state_fn(), grid, tgrid)
    f_tilde, g = manufacture(k_true, u, cfg.dimension, cfg.lam_fn())
    return k_true, u, f_tilde, g


def run_manufacture(cfg: RunConfig, out_dir: Path) -> list[Path]:
    k_true, u, f_tilde, g = manufactured_fields(cfg)
    return [
        write_field(out_dir / "u.csv", u),
        write_field(out_dir / "f_tilde.csv", f_tilde),
        write_profile(out_dir / "g.csv", u.tgrid, g),
        write_field(out_dir / "k_true.csv", k_true),
    ]


def _relative_error(est: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(est - ref)) / max(float(np.max(np.abs(ref))), 1e-300))


def run_identify(cfg: RunConfig, in_dir: Path, out_dir: Path) -> dict:
    u = read_field(in_dir / "u.csv")
    f_tilde = read_field(in_dir / "f_tilde.csv")
    t, g = read_profile(in_dir / "g.csv")
    if not np.allclose(t, u.tgrid.nodes, rtol=0, atol=1e-12 * max(1.0, u.tgrid.t_max)):
        raise ConfigurationError("g.csv time nodes do not match u.csv")
    lam = cfg.lam_fn()(u.grid.nodes)
    inp = RadialInverseInput(u=u, f_tilde=f_tilde, g=g, lam=lam, dimension=cfg.dimension)
    result = identify(
        inp,
        method=cfg.method,
        green_method=cfg.green,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        cross_check=True,
        constraint_factor=cfg.constraint_factor,
    )
    diag = dict(result.diagnostics)
    truth = in_dir / "k_true.csv"
    if truth.is_file():
        k_true = read_field(truth)
        if k_true.values.shape == result.k.values.shape:
            diag["relative_error"] = _relative_error(result.k.values, k_true.values)
            diag["error_tol"] = cfg.error_tol
            diag["error_ok"] = diag["relative_error"] <= cfg.error_tol
    diag["cross_method_ok"] = diag["cross_method_difference"] <= cfg.agreement_tol
    write_field(out_dir / "k_est.csv", result.k)
    write_profile(out_dir / "h.csv", u.tgrid, result.h)
    write_field(out_dir / "q.csv", result.q)
    write_key_values(out_dir / "diagnostics.csv", diag)
    return diag


def sweep_errors(cfg: RunConfig, sizes: Sequence[int], workers: int = 1) -> list[dict]:
    """Manufacture and identify in memory for each size; adds observed orders."""

    def one(n: int) -> dict:
        c = cfg.with_size(n)
        k_true, u, f_tilde, g = manufactured_fields(c)
        inp = RadialInverseInput(u=u, f_tilde=f_tilde, g=g, lam=c.lam_fn()(u.grid.nodes), dimension=c.dimension)
        res = identify(inp, method=c.method, green_method=c.green, tol=c.tol, max_iter=c.max_iter)
        return {"n": n, "error": _relative_error(res.k.values, k_true.values)}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, sizes))
    else:
        rows = [one(n) for n in sizes]
    for prev, row in zip(rows, rows[1:]):
        ratio = prev["error"] / row["error"] if row["error"] > 0 else math.inf
        row["order"] = math.log(ratio) / math.log(row["n"] / prev["n"]) if ratio > 0 else math.nan
    return rows


def run_verify(cfg: RunConfig, out_dir: Path, workers: int = 1) -> list[checks.CheckResult]:
    spec = cfg.coefficient_spec()
    results = [
        checks.check_radial_trace(spec, cfg.r1, cfg.r2),
        checks.check_integration_by_parts(cfg.random_cases),
        checks.check_exponential_identity(cfg.random_cases),
        checks.check_annihilation(cfg.dimension),
    ]
    if spec.has_base():
        results.append(checks.check_ellipticity(spec, cfg.r1, cfg.r2))

    k_true, u, f_tilde, g = manufactured_fields(cfg)
    inp = RadialInverseInput(u=u, f_tilde=f_tilde, g=g, lam=cfg.lam_fn()(u.grid.nodes), dimension=cfg.dimension)
    res = identify(inp, method=cfg.method, green_method=cfg.green, tol=cfg.tol, max_iter=cfg.max_iter, cross_check=True)
    d = res.diagnostics
    results += [
        checks.CheckResult("contraction_bound_le_half", d["contraction_bound"], 0.5, f"sigma={d['sigma']:g}"),
        checks.CheckResult(
            "measured_contraction",
            max(0.0, d["measured_contraction"] - d["contraction_bound"]),
            1e-10,
            f"measured={d['measured_contraction']:.6g} bound={d['contraction_bound']:.6g}",
        ),
        checks.CheckResult("cross_method", d["cross_method_difference"], cfg.agreement_tol),
        checks.CheckResult("constraint", d["constraint_residual"], d["constraint_tolerance"]),
        checks.CheckResult("green_bound", max(0.0, d["green_bound_ratio"] - 1.0), 0.0, f"max |G|/(C1|alpha|)={d['green_bound_ratio']:.3g}"),
        checks.CheckResult("round_trip_error", _relative_error(res.k.values, k_true.values), cfg.error_tol, f"n={cfg.n_r}"),
    ]
    rows = sweep_errors(cfg, cfg.sweep, workers)
    for row in rows[1:]:
        order = row["order"]
        off = 0.0 if cfg.order_min <= order <= cfg.order_max else min(abs(order - cfg.order_min), abs(order - cfg.order_max))
        results.append(checks.CheckResult(f"order_n{row['n']}", off, 0.0, f"order={order:.3f} error={row['error']:.3e}"))
    table = "n,error,order\n" + "".join(f"{r['n']},{r['error']:.17g},{r.get('order', math.nan):.17g}\n" for r in rows)
    atomic_write_text(out_dir / "sweep.csv", table)
    write_key_values(
        out_dir / "verify.csv",
        {f"{c.name}.{k}": v for c in results for k, v in (("residual", c.residual), ("tolerance", c.tolerance), ("passed", c.passed))},
    )
    return results


def coefficient_report(cfg: RunConfig) -> dict:
    spec = cfg.coefficient_spec()
    r = np.linspace(cfg.r1, cfg.r2, 201)
    report: dict[str, object] = {"family": spec.family, "dimension": spec.dimension}
    trace = checks.check_radial_trace(spec, cfg.r1, cfg.r2)
    report["radial_trace_residual"] = trace.residual
    report["radial_trace_ok"] = trace.passed
    if spec.has_base():
        h = trace_profile(spec, r)
        report["trace_profile_min"] = float(np.min(h))
        report["trace_profile_max"] = float(np.max(h))
        report["ellipticity_margin_min"] = float(np.min(ellipticity_margin(spec, r)))
        ell = checks.check_ellipticity(spec, cfg.r1, cfg.r2)
        report["ellipticity_ok"] = ell.passed
        report["conormal_inner"] = conormal_vector(spec, "inner", cfg.r1)
        report["conormal_outer"] = conormal_vector(spec, "outer", cfg.r2)
    return report


# -- command handlers --------------------------------------------------------
def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_manufacture(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    if args.sweep:
        sizes = cfg.sweep

        def one(n):
            return run_manufacture(cfg.with_size(n), out / f"n_r={n}")

        with ThreadPoolExecutor(max_workers=_workers()) as pool:
            written = [p for paths in pool.map(one, sizes) for p in paths]
    else:
        written = run_manufacture(cfg, out)
    _emit([f"wrote {p}" for p in written], None)
    return 0


def _report_lines(diag: dict) -> list[str]:
    return [f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}" for k, v in diag.items()]


def cmd_identify(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    in_dir = Path(cfg.input) if cfg.input else out
    if args.sweep:
        sizes = cfg.sweep

        def one(n):
            sub = f"n_r={n}"
            return n, run_identify(cfg.with_size(n), in_dir / sub, out / sub)

        with ThreadPoolExecutor(max_workers=_workers()) as pool:
            results = list(pool.map(one, sizes))
        lines = []
        for n, diag in results:
            lines.append(f"[n_r={n}]")
            lines += _report_lines(diag)
        _emit(lines, out)
        ok = all(d.get("error_ok", True) and d["constraint_ok"] for _, d in results)
    else:
        diag = run_identify(cfg, in_dir, out)
        _emit(_report_lines(diag), out)
        ok = diag.get("error_ok", True) and diag["constraint_ok"]
    return 0 if ok else 1


def cmd_verify(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    results = run_verify(cfg, out, _workers())
    lines = [
        f"{'PASS' if c.passed else 'FAIL'} {c.name}: residual={c.residual:.3e} tol={c.tolerance:.1e} {c.detail}".rstrip()
        for c in results
    ]
    failed = [c.name for c in results if not c.passed]
    lines.append("all checks passed" if not failed else f"failed: {', '.join(failed)}")
    _emit(lines, out, "verify.txt")
    return 0 if not failed else 1


def cmd_coeff_report(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    report = coefficient_report(cfg)
    write_key_values(out / "coeff_report.csv", report)
    _emit(_report_lines(report), out, "coeff_report.txt")
    return 0 if report["radial_trace_ok"] and report.get("ellipticity_ok", True) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memkernel", description="Radial memory-kernel identification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, sweep: bool = True, method: bool = True):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="INI configuration file")
        src.add_argument("--preset", help="bundled preset name")
        p.add_argument("--out", help="output directory (created if missing)")
        if sweep:
            p.add_argument("--sweep", help="run for several sizes, e.g. n_r=16,32,64 (n_t follows n_r)")
        if method:
            p.add_argument("--method", choices=METHODS, help="Volterra solver")

    p = sub.add_parser("manufacture", help="write u, f_tilde, g and k_true for a manufactured kernel")
    common(p, method=False)
    p.set_defaults(handler=cmd_manufacture)

    p = sub.add_parser("identify", help="recover k from u, f_tilde and g")
    common(p)
    p.add_argument("--input", help="directory holding u.csv, f_tilde.csv, g.csv (default: --out)")
    p.set_defaults(handler=cmd_identify)

    p = sub.add_parser("verify", help="run the invariant suite and a convergence sweep")
    common(p)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("coeff-report", help="admissibility report for the configured coefficients")
    common(p, sweep=False, method=False)
    p.set_defaults(handler=cmd_coeff_report)

    sub.add_parser("presets", help="list bundled presets").set_defaults(
        handler=lambda args: (print("\n".join(preset_names())), 0)[1]
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "preset", "out"):
        args.__dict__.setdefault(name, None)
    try:
        return int(args.handler(args))
    except MemkernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
