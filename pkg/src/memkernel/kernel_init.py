"""Initial kernel ``k0 = k(0, .)`` and data-consistency checks on the shell.

Differentiating the integro-differential equation in time and setting
``t = 0`` leaves the first-order radial ODE

    Phi[C u0] k0' + Phi[B u0] k0 = l1

(``l1`` is built from the data) together with the scalar condition

    Psi[C u0] k0' + Psi-side terms = N2(0) - Psi1[v0].

The ODE fixes ``k0`` up to one constant; the scalar condition fixes the
constant as long as ``J1 = Psi[J(u0)]`` is nonzero.

Problem data are callables in Cartesian coordinates; time derivatives that
are not supplied in closed form are taken by second-order finite
differences with step ``fd_step`` (forward stencils near ``t = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import CoefficientSpec, b_coefficients, build_coefficients, c_coefficients
from .errors import DataError
from .functionals import (
    JQuantities,
    MeasurementSpec,
    j_quantities,
    phi1_apply,
    phi_apply,
    psi1_apply,
    psi_apply,
    reduced_radial_operator,
)
from .grid import RadialGrid, ShellGrid, TimeGrid, cumulative_from_right, derivative_r
from .operators import apply_divergence_form, apply_first_order, gradient

__all__ = [
    "ProblemData",
    "ConsistencyReport",
    "K0Result",
    "validate_consistency",
    "source_terms_t0",
    "compute_k0",
    "initial_hq",
    "besov_source_field",
]

DERIVATIVE_KEYS = ("du1", "d2u1", "df", "dg1", "d2g1", "dg2", "d2g2")


@dataclass
class ProblemData:
    """Data of the shell problem.

    ``u0(x)``, ``u1(t, x)`` and ``f(t, x)`` take Cartesian points with the
    coordinates on the last axis; ``g1(t, r)`` and ``g2(t)`` are the
    measurements. ``bc = (outer, inner)`` with entries ``"D"`` or ``"N"``.
    ``derivatives`` may hold closed forms keyed by :data:`DERIVATIVE_KEYS`
    (``"du1"`` is ``D_t u1(t, x)`` and so on).
    """

    shell: ShellGrid
    coefficients: CoefficientSpec
    measurement: MeasurementSpec
    u0: Callable
    u1: Callable
    f: Callable
    g1: Callable
    g2: Callable
    bc: tuple[str, str] = ("D", "D")
    time_grid: TimeGrid | None = None
    derivatives: dict = field(default_factory=dict)
    fd_step: float = 1e-3
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.shell.dimension != self.coefficients.dimension:
            raise DataError("coefficient dimension does not match the shell grid")
        if tuple(self.bc) not in {(a, b) for a in "DN" for b in "DN"}:
            raise DataError(f"boundary conditions must be in {{D,N}}^2, got {self.bc}")
        unknown = set(self.derivatives) - set(DERIVATIVE_KEYS)
        if unknown:
            raise DataError(f"unknown derivative keys {sorted(unknown)}")

    # -- cached operator samples ----------------------------------------
    def tensor(self, which: str) -> np.ndarray:
        if which not in self._cache:
            builders = {
                "A": lambda: build_coefficients(self.coefficients, self.shell),
                "B": lambda: b_coefficients(self.coefficients, self.shell),
                "C": lambda: c_coefficients(self.coefficients, self.shell),
            }
            self._cache[which] = builders[which]()
        return self._cache[which]

    def apply_a(self, w) -> np.ndarray:
        return apply_divergence_form(self.tensor("A"), w, self.shell)

    def apply_b(self, w) -> np.ndarray:
        return apply_divergence_form(self.tensor("B"), w, self.shell)

    def apply_c(self, w) -> np.ndarray:
        return apply_first_order(self.tensor("C"), w, self.shell)

    # -- sampled data ----------------------------------------------------
    def _time_derivative(self, fn, t: float, order: int, *args):
        step = self.fd_step
        if t - order * step >= 0.0:
            if order == 1:
                return (fn(t + step, *args) - fn(t - step, *args)) / (2.0 * step)
            return (fn(t + step, *args) - 2.0 * fn(t, *args) + fn(t - step, *args)) / step**2
        f0, f1, f2 = (fn(t + i * step, *args) for i in range(3))
        if order == 1:
            return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step)
        f3 = fn(t + 3 * step, *args)
        return (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / step**2

    def _derived(self, key: str, base: Callable, t: float, order: int, *args):
        if key in self.derivatives:
            return np.asarray(self.derivatives[key](t, *args), dtype=float)
        return np.asarray(self._time_derivative(base, t, order, *args), dtype=float)

    def u0_field(self) -> np.ndarray:
        return self.shell.sample(self.u0)

    def u1_field(self, t: float) -> np.ndarray:
        return self.shell.sample(lambda x: self.u1(t, x))

    def du1_field(self, t: float, order: int = 1) -> np.ndarray:
        key = "du1" if order == 1 else "d2u1"
        x = self.shell.points
        return np.broadcast_to(self._derived(key, self.u1, t, order, x), self.shell.shape).copy()

    def f_field(self, t: float) -> np.ndarray:
        return self.shell.sample(lambda x: self.f(t, x))

    def df_field(self, t: float) -> np.ndarray:
        x = self.shell.points
        return np.broadcast_to(self._derived("df", self.f, t, 1, x), self.shell.shape).copy()

    def g1_profile(self, t: float, order: int = 0) -> np.ndarray:
        r = self.shell.radial.nodes
        if order == 0:
            return np.asarray(self.g1(t, r), dtype=float) + 0.0 * r
        key = "dg1" if order == 1 else "d2g1"
        return self._derived(key, self.g1, t, order, r) + 0.0 * r

    def g2_value(self, t: float, order: int = 0) -> float:
        if order == 0:
            return float(self.g2(t))
        key = "dg2" if order == 1 else "d2g2"
        return float(self._derived(key, self.g2, t, order))

    def v0_field(self) -> np.ndarray:
        """``v0 = A u0 + f(0) - D_t u1(0)``."""
        if "v0" not in self._cache:
            self._cache["v0"] = self.apply_a(self.u0_field()) + self.f_field(0.0) - self.du1_field(0.0)
        return self._cache["v0"]

    def j_quantities(self) -> JQuantities:
        if "jq" not in self._cache:
            u0 = self.u0_field()
            self._cache["jq"] = j_quantities(self.apply_b(u0), self.apply_c(u0), self.measurement, self.shell)
        return self._cache["jq"]


@dataclass(frozen=True)
class ConsistencyReport:
    residuals: dict
    tolerance: float
    scales: dict

    @property
    def passed(self) -> dict:
        return {k: v <= self.tolerance * max(1.0, self.scales[k]) for k, v in self.residuals.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def rows(self) -> list[tuple[str, float]]:
        return sorted(self.residuals.items())


def _conormal_derivative(data: ProblemData, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outward conormal derivatives ``(A grad w) . n`` on the (outer, inner) shells."""
    grad = gradient(w, data.shell)
    flux = np.einsum("...jk,...k->...j", data.tensor("A"), grad)
    normal = data.shell.points / data.shell.r[..., None]
    flux_n = np.sum(flux * normal, axis=-1)
    return flux_n[-1], -flux_n[0]


def _boundary_residuals(data: ProblemData, w: np.ndarray, label: str) -> dict:
    out = {}
    conormal = None
    for idx, (name, kind) in enumerate(zip(("outer", "inner"), data.bc)):
        if kind == "D":
            values = w[-1] if name == "outer" else w[0]
        else:
            if conormal is None:
                conormal = _conormal_derivative(data, w)
            values = conormal[idx]
        out[f"{label}_{name}_{kind}"] = float(np.max(np.abs(values)))
    return out


def validate_consistency(data: ProblemData, tol: float = 1e-6) -> ConsistencyReport:
    """Residuals of the compatibility conditions at ``t = 0``.

    Boundary traces of ``u0 - u1(0)`` and of ``v0``, the measurement
    conditions ``Phi[u0] = g1(0)``, ``Psi[u0] = g2(0)`` and their
    time-differentiated forms. Each residual passes when it is at most
    ``tol * max(1, scale)`` where ``scale`` is the size of the data it compares.
    """
    shell, meas = data.shell, data.measurement
    u0 = data.u0_field()
    du1 = data.du1_field(0.0)
    v0 = data.v0_field()
    g1 = data.g1_profile(0.0)
    dg1 = data.g1_profile(0.0, order=1)
    res, scales = {}, {}

    boundary = _boundary_residuals(data, u0 - data.u1_field(0.0), "trace_u0")
    boundary.update(_boundary_residuals(data, v0, "trace_v0"))
    for k, v in boundary.items():
        res[k] = v
        scales[k] = float(np.max(np.abs(u0)))

    res["phi_u0_minus_g1"] = float(np.max(np.abs(phi_apply(meas, u0, shell) - g1)))
    scales["phi_u0_minus_g1"] = float(np.max(np.abs(g1)))
    res["psi_u0_minus_g2"] = abs(float(psi_apply(meas, u0, shell)) - data.g2_value(0.0))
    scales["psi_u0_minus_g2"] = abs(data.g2_value(0.0))
    lhs = phi_apply(meas, v0, shell) - dg1 + phi_apply(meas, du1, shell)
    res["phi_v0"] = float(np.max(np.abs(lhs)))
    scales["phi_v0"] = float(np.max(np.abs(dg1)))
    lhs2 = float(psi_apply(meas, v0, shell)) - data.g2_value(0.0, order=1) + float(psi_apply(meas, du1, shell))
    res["psi_v0"] = abs(lhs2)
    scales["psi_v0"] = abs(data.g2_value(0.0, order=1))
    return ConsistencyReport(residuals=res, tolerance=tol, scales=scales)


def n1_source(data: ProblemData, t: float) -> np.ndarray:
    """``D_t^2 g1 - A1 D_t g1 - Phi1[D_t u1] - Phi[D_t f]`` at time ``t``."""
    shell, meas, spec = data.shell, data.measurement, data.coefficients
    return (
        data.g1_profile(t, order=2)
        - reduced_radial_operator(spec, data.g1_profile(t, order=1), shell.radial)
        - phi1_apply(meas, spec, data.du1_field(t), shell)
        - phi_apply(meas, data.df_field(t), shell)
    )


def n2_source(data: ProblemData, t: float) -> float:
    """``D_t^2 g2 - Psi1[D_t u1] - Psi[D_t f]`` at time ``t``."""
    shell, meas, spec = data.shell, data.measurement, data.coefficients
    return (
        data.g2_value(t, order=2)
        - float(psi1_apply(meas, spec, data.du1_field(t), shell, bc=data.bc))
        - float(psi_apply(meas, data.df_field(t), shell))
    )


def source_terms_t0(data: ProblemData) -> dict:
    """``N1^0(0)``, ``N2^0(0)`` and ``l1 = N1^0(0) - Phi1[v0]``."""
    n1 = n1_source(data, 0.0)
    n2 = n2_source(data, 0.0)
    l1 = n1 - phi1_apply(data.measurement, data.coefficients, data.v0_field(), data.shell)
    return {"n1_0": n1, "n2_0": n2, "l1": l1}


@dataclass(frozen=True)
class K0Result:
    k0: np.ndarray
    constant: float
    particular: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    target: float

    def residual_ode(self, jq: JQuantities, grid: RadialGrid) -> np.ndarray:
        u0 = jq.u0
        return derivative_r(self.k0, grid) * u0.phi_cu0 + self.k0 * u0.phi_bu0 - self.l1


def compute_k0(data: ProblemData) -> K0Result:
    """Initial kernel on the radial nodes.

    ``k0 = C exp(int_r^{R2} ratio) + P(r)`` where ``P = -L l1`` is the
    particular solution vanishing at ``R2`` and
    ``C = (N2^0(0) - Psi1[v0] - Psi[l2]) / J1`` with
    ``l2 = C u0 P' + B u0 P``.
    """
    jq = data.j_quantities()
    u0 = jq.u0
    shell = data.shell
    terms = source_terms_t0(data)
    l1 = terms["l1"]
    particular = -u0.l_apply(l1)
    dparticular = l1 / u0.phi_cu0 - u0.ratio * particular
    u0f = data.u0_field()
    expand = (slice(None),) + (None,) * len(shell.angular.shape)
    l2 = data.apply_c(u0f) * dparticular[expand] + data.apply_b(u0f) * particular[expand]
    target = terms["n2_0"] - float(
        psi1_apply(data.measurement, data.coefficients, data.v0_field(), shell, bc=data.bc)
    )
    constant = (target - float(psi_apply(data.measurement, l2, shell))) / jq.j1
    k0 = constant * u0.growth + particular
    return K0Result(k0=k0, constant=constant, particular=particular, l1=l1, l2=l2, target=target)


def initial_hq(k0, grid: RadialGrid) -> tuple[float, np.ndarray]:
    """``(k0(R2), k0')``: the starting values of the outer trace and the radial derivative."""
    k0 = np.asarray(k0, dtype=float)
    return float(k0[-1]), derivative_r(k0, grid)


def reconstruct_from_hq(h0: float, q0, grid: RadialGrid) -> np.ndarray:
    """``k(r) = h - int_r^{R2} q``."""
    return h0 - cumulative_from_right(q0, grid)


def besov_source_field(data: ProblemData, k0) -> np.ndarray:
    """``k0' C u0 + k0 B u0 + A^2 u0 + A f(0) - D_t^2 u1(0) + D_t f(0)``, reported only."""
    shell = data.shell
    k0 = np.asarray(k0, dtype=float)
    expand = (slice(None),) + (None,) * len(shell.angular.shape)
    u0 = data.u0_field()
    dk0 = derivative_r(k0, shell.radial)
    return (
        dk0[expand] * data.apply_c(u0)
        + k0[expand] * data.apply_b(u0)
        + data.apply_a(data.apply_a(u0))
        + data.apply_a(data.f_field(0.0))
        - data.du1_field(0.0, order=2)
        + data.df_field(0.0)
    )
