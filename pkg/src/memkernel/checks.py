"""Invariant checks shared by the ``verify`` command and the demos.

Each check returns a :class:`CheckResult` holding the worst residual, the
tolerance it is compared against and a short detail string.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import (
    CoefficientSpec,
    b_coefficients,
    c_coefficients,
    ellipticity_bounds,
    ellipticity_margin,
    radial_trace,
    trace_profile,
)
from .functionals import MeasurementSpec, U0Data, j_quantities, phi_apply
from .grid import AngularGrid, RadialGrid, ShellGrid
from .inverse_radial import integration_by_parts_identity
from .operators import apply_divergence_form, apply_first_order

__all__ = [
    "CheckResult",
    "random_smooth_profile",
    "check_radial_trace",
    "check_ellipticity",
    "check_integration_by_parts",
    "check_exponential_identity",
    "check_annihilation",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)


def random_smooth_profile(rng: np.random.Generator, r: np.ndarray, scale: float = 1.0, n_modes: int = 3) -> np.ndarray:
    """A low-frequency trigonometric profile on ``[r[0], r[-1]]``."""
    s = (r - r[0]) / (r[-1] - r[0])
    out = np.full_like(s, rng.uniform(-1, 1))
    for j in range(1, n_modes + 1):
        out += rng.uniform(-1, 1) / j * np.cos(np.pi * j * s + rng.uniform(0, 2 * np.pi))
    return scale * out


def _shell_points(rng: np.random.Generator, dim: int, r1: float, r2: float, n: int) -> np.ndarray:
    d = rng.standard_normal((n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return rng.uniform(r1, r2, n)[:, None] * d


def check_radial_trace(spec: CoefficientSpec, r1: float, r2: float, n: int = 2000, seed: int = 0) -> CheckResult:
    """``x^T A(x) x / |x|^2`` against the trace profile at random shell points."""
    rng = np.random.default_rng(seed)
    x = _shell_points(rng, spec.dimension, r1, r2, n)
    r = np.linalg.norm(x, axis=1)
    trace = radial_trace(spec, x)
    expected = trace_profile(spec, r)
    scale = max(1.0, float(np.max(np.abs(expected))))
    res = float(np.max(np.abs(trace - expected))) / scale
    return CheckResult("radial_trace", res, 1e-12, f"{n} random points")


def check_ellipticity(spec: CoefficientSpec, r1: float, r2: float, n: int = 10_000, seed: int = 1) -> CheckResult:
    """Quadratic-form lower bound against ``min(a - b^+ - d^-)``; residual is the shortfall."""
    rng = np.random.default_rng(seed)
    x = _shell_points(rng, spec.dimension, r1, r2, n)
    xi = rng.standard_normal((n, spec.dimension))
    lower, upper = ellipticity_bounds(spec, x, xi, require_positive=False)
    margin = float(np.min(ellipticity_margin(spec, np.linspace(r1, r2, 2001))))
    return CheckResult("ellipticity", max(0.0, margin - lower), 1e-12, f"lower={lower:.6g} upper={upper:.6g} margin={margin:.6g}")


def check_integration_by_parts(n_cases: int = 20, n_nodes: int = 201, seed: int = 2) -> CheckResult:
    """``1 - kappa int lam1 alpha e^{-A}`` against ``kappa kappa1`` with Simpson weights."""
    rng = np.random.default_rng(seed)
    grid = RadialGrid(1.0, 2.0, n_nodes)
    worst = 0.0
    for _ in range(n_cases):
        alpha = random_smooth_profile(rng, grid.nodes)
        lam = 1.0 + 0.5 * random_smooth_profile(rng, grid.nodes, scale=0.5)
        lhs, rhs = integration_by_parts_identity(alpha, lam, grid, rule="simpson")
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return CheckResult("integration_by_parts", worst, 1e-6, f"{n_cases} random cases, {n_nodes} nodes")


def check_exponential_identity(n_cases: int = 20, n_nodes: int = 201, seed: int = 3) -> CheckResult:
    """``1 + L Phi[Bu0] = exp(int_r^{R2} Phi[Bu0]/Phi[Cu0])`` for random profiles."""
    rng = np.random.default_rng(seed)
    grid = RadialGrid(1.0, 2.0, n_nodes)
    worst = 0.0
    cases = [(np.ones(n_nodes), np.ones(n_nodes))]
    for _ in range(n_cases):
        cu0 = 1.5 + random_smooth_profile(rng, grid.nodes, scale=0.4)
        bu0 = random_smooth_profile(rng, grid.nodes)
        cases.append((bu0, cu0))
    for bu0, cu0 in cases:
        u0 = U0Data(bu0, cu0, grid, rule="simpson")
        worst = max(worst, float(np.max(np.abs(1.0 + u0.l_apply(bu0) - u0.growth))))
    return CheckResult("exponential_identity", worst, 1e-6, f"{n_cases} random cases plus the unit case")


def check_annihilation(dimension: int = 3, n_cases: int = 10, seed: int = 4, level: int = 2) -> CheckResult:
    """``Phi[J(u0)] = 0`` relative to ``max |Phi[B u0]|`` for random smooth ``u0``."""
    rng = np.random.default_rng(seed)
    ang = AngularGrid(dimension, 16 * level, 8 * level if dimension == 3 else 1)
    shell = ShellGrid(RadialGrid.with_intervals(1.0, 2.0, 8 * level), ang)
    spec = CoefficientSpec(dimension=dimension)
    b = b_coefficients(spec, shell)
    c = c_coefficients(spec, shell)
    x = shell.points
    worst = 0.0
    for _ in range(n_cases):
        coef = rng.uniform(-1, 1, (dimension, 2))
        u0 = 2.0 + np.sum(coef[:, 0] * x + coef[:, 1] * x**2 / 4, axis=-1) + np.linalg.norm(x, axis=-1) ** 2
        lam_coef = rng.uniform(-0.3, 0.3, dimension)
        meas = MeasurementSpec(
            lam=lambda d, lc=lam_coef: 1.0 + d @ lc,
            psi=lambda p: (np.linalg.norm(p, axis=-1) - 1.0) * (2.0 - np.linalg.norm(p, axis=-1)) * (1.0 + p[..., 0] / 4),
        )
        bu0 = apply_divergence_form(b, u0, shell)
        cu0 = apply_first_order(c, u0, shell)
        jq = j_quantities(bu0, cu0, meas, shell)
        res = np.max(np.abs(phi_apply(meas, jq.j_field, shell))) / max(float(np.max(np.abs(jq.u0.phi_bu0))), 1e-300)
        worst = max(worst, float(res))
    return CheckResult("annihilation", worst, 1e-8, f"{n_cases} random cases in {dimension}D")
