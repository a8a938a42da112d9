"""Measurement functionals and the operators built from them.

``Phi`` averages a shell field over angles against a weight ``lam`` defined on
the outer sphere and returns a radial profile; ``Psi`` integrates over the
whole shell against ``psi`` and returns a number. For divergence-form
operators ``A`` with the radial-trace property,

    Phi[A w] = D_r(k1 D_r Phi[w]) + Phi1[w],     Psi[A w] = Psi1[w],

where ``Phi1`` and ``Psi1`` involve only first derivatives of ``w`` once the
angular derivatives have been moved onto the weights by periodicity and the
vanishing of ``sin(theta)`` at the poles. The second identity also uses an
integration by parts in ``r``; its boundary terms vanish when ``psi`` is zero on
Dirichlet shells and ``w`` has zero conormal derivative on Neumann shells.

``L``, ``E`` and the ``J`` quantities are the radial integral operators used
to eliminate the unknown kernel's derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import CoefficientSpec, build_coefficients, spherical_rep, trace_profile
from .errors import AdmissibilityError, DegeneracyError, ShapeError, SolvabilityError
from .grid import (
    RadialGrid,
    ShellGrid,
    cumulative_from_left,
    cumulative_from_right,
    derivative_r,
    integrate,
    second_derivative_r,
)
from .operators import d_phi, d_r, d_theta

__all__ = [
    "MeasurementSpec",
    "U0Data",
    "JQuantities",
    "phi_apply",
    "psi_apply",
    "phi1_apply",
    "psi1_apply",
    "reduced_radial_operator",
    "e_apply",
    "l_apply",
    "j_quantities",
    "composite_psi",
]


@dataclass(frozen=True)
class MeasurementSpec:
    """Weights of the two functionals.

    ``lam`` is a callable of a unit direction (coordinates on the last axis) or
    samples on the angular grid; ``psi`` is a callable of the Cartesian point
    or samples on the shell grid.
    """

    lam: Callable | np.ndarray | float = 1.0
    psi: Callable | np.ndarray | float = 1.0

    def lam_samples(self, shell: ShellGrid) -> np.ndarray:
        return _sample(self.lam, shell.angular.directions, shell.angular.shape)

    def psi_samples(self, shell: ShellGrid) -> np.ndarray:
        return _sample(self.psi, shell.points, shell.shape)


def _sample(obj, points: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if callable(obj):
        return np.broadcast_to(np.asarray(obj(points), dtype=float), shape).copy()
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise ShapeError(f"weight samples have shape {arr.shape}, expected {shape}")
    return arr


def composite_psi(psi_radial: Callable, lam: Callable) -> Callable:
    """``psi(x) = psi_radial(|x|) lam(x/|x|)``: the weight for which ``Psi`` factors through ``Phi``."""

    def psi(x):
        r = np.sqrt(np.sum(x * x, axis=-1))
        return psi_radial(r) * lam(x / r[..., None])

    return psi


def _lam(lam, shell: ShellGrid) -> np.ndarray:
    if isinstance(lam, MeasurementSpec):
        return lam.lam_samples(shell)
    return _sample(lam, shell.angular.directions, shell.angular.shape)


def _psi(psi, shell: ShellGrid) -> np.ndarray:
    if isinstance(psi, MeasurementSpec):
        return psi.psi_samples(shell)
    return _sample(psi, shell.points, shell.shape)


def _angular_sum(field: np.ndarray, shell: ShellGrid) -> np.ndarray:
    """Integral over the angular axes against surface measure."""
    return integrate(field, shell.angular)


def _angular_plain(field: np.ndarray, shell: ShellGrid) -> np.ndarray:
    """Integral over the angular axes against ``dtheta dphi`` (``dphi`` in 2D)."""
    if shell.dimension == 3:
        field = field / np.sin(shell.angular.theta)
    return integrate(field, shell.angular)


def phi_apply(lam, v, shell: ShellGrid) -> np.ndarray:
    """Radial profile ``Phi[v](r)``; leading axes of ``v`` are preserved."""
    v = np.asarray(v, dtype=float)
    if v.shape[v.ndim - len(shell.shape):] != shell.shape:
        raise ShapeError(f"field shape {v.shape} does not match grid {shell.shape}")
    return _angular_sum(_lam(lam, shell) * v, shell)


def psi_apply(psi, v, shell: ShellGrid, rule: str | None = None):
    """Scalar ``Psi[v]`` (an array if ``v`` has leading axes)."""
    v = np.asarray(v, dtype=float)
    if v.shape[v.ndim - len(shell.shape):] != shell.shape:
        raise ShapeError(f"field shape {v.shape} does not match grid {shell.shape}")
    radial = _angular_sum(_psi(psi, shell) * v, shell)
    r = shell.radial.nodes
    return integrate(radial * r ** (shell.dimension - 1), shell.radial, rule=rule)


def _rep_on_grid(spec: CoefficientSpec, shell: ShellGrid):
    tensor = build_coefficients(spec, shell)
    theta = None if shell.dimension == 2 else shell.theta
    return spherical_rep(tensor, shell.r, shell.phi, theta)


def phi1_apply(lam, spec: CoefficientSpec, w, shell: ShellGrid) -> np.ndarray:
    """Correction ``Phi1[w]`` with all angular derivatives taken by finite differences."""
    w = np.asarray(w, dtype=float)
    lam_s = np.broadcast_to(_lam(lam, shell), shell.shape)
    rep = _rep_on_grid(spec, shell)
    r = shell.r
    phi = shell.phi
    sp, cp = np.sin(phi), np.cos(phi)
    wr, wphi = d_r(w, shell), d_phi(w, shell)

    lam_k2 = lam_s * rep.k[1]
    dphi_lk2 = d_phi(lam_k2, shell)
    drdphi_lk2 = d_phi(lam_s * d_r(rep.k[1], shell), shell)
    dphi_ls = d_phi(lam_s * sp, shell)
    dphi_lc = d_phi(lam_s * cp, shell)

    if shell.dimension == 2:
        integrand = (
            w * (dphi_lk2 / r - drdphi_lk2)
            + wr * (rep.f[0] * dphi_ls - rep.g[0] * dphi_lc - dphi_lk2)
            + (wphi / r) * (rep.f[1] * dphi_ls - rep.g[1] * dphi_lc)
        )
        return _angular_plain(integrand / r, shell)

    theta = shell.theta
    st = np.sin(theta)
    wth = d_theta(w, shell)
    lam_k3s = lam_s * rep.k[2] * st
    dth_lk3s = d_theta(lam_k3s, shell)
    drdth_lk3s = d_theta(lam_s * d_r(rep.k[2], shell) * st, shell)
    dth_ls2 = d_theta(lam_s * st**2, shell)
    dth_ls2t = 0.5 * d_theta(lam_s * np.sin(2.0 * theta), shell)

    def bracket(j):
        return (
            rep.f[j] * dphi_ls
            - rep.g[j] * dphi_lc
            + rep.h[j] * dth_ls2
            - rep.l[j] * dth_ls2t
        )

    integrand = (
        w * ((dphi_lk2 + dth_lk3s) / r - drdphi_lk2 - drdth_lk3s)
        + wr * (bracket(0) - dphi_lk2 - dth_lk3s)
        + wphi / (r * st) * bracket(1)
        + wth / r * bracket(2)
    )
    return _angular_plain(integrand / r, shell)


def _check_psi_boundary(psi_s: np.ndarray, bc, atol: float) -> None:
    if bc is None:
        return
    outer, inner = bc
    for label, kind, values in (("outer", outer, psi_s[-1]), ("inner", inner, psi_s[0])):
        if kind == "D" and np.max(np.abs(values)) > atol:
            raise AdmissibilityError(
                f"psi must vanish on the {label} shell where a Dirichlet condition holds "
                f"(max |psi| = {np.max(np.abs(values)):.3g})"
            )


def psi1_apply(psi, spec: CoefficientSpec, w, shell: ShellGrid, bc=None, rule: str | None = None):
    """Correction ``Psi1[w]``; ``bc = (outer, inner)`` enables the Dirichlet-shell check on ``psi``."""
    w = np.asarray(w, dtype=float)
    psi_s = _psi(psi, shell)
    _check_psi_boundary(psi_s, bc, 1e-12 * max(1.0, float(np.max(np.abs(psi_s)))))
    rep = _rep_on_grid(spec, shell)
    r = shell.r
    phi = shell.phi
    sp, cp = np.sin(phi), np.cos(phi)
    wr, wphi = d_r(w, shell), d_phi(w, shell)
    dphi_ps = d_phi(psi_s * sp, shell)
    dphi_pc = d_phi(psi_s * cp, shell)

    if shell.dimension == 2:
        dr_rpsi = d_r(r * psi_s, shell)

        def bracket2(j):
            return rep.k[j] * dr_rpsi - rep.f[j] * dphi_ps + rep.g[j] * dphi_pc

        integrand = wr * bracket2(0) + (wphi / r) * bracket2(1)
        radial = _angular_plain(integrand, shell)
        return -integrate(radial, shell.radial, rule=rule)

    theta = shell.theta
    st = np.sin(theta)
    wth = d_theta(w, shell)
    dr_r2psi = d_r(r**2 * psi_s, shell)
    dth_ps2 = d_theta(psi_s * st**2, shell)
    dth_ps2t = 0.5 * d_theta(psi_s * np.sin(2.0 * theta), shell)

    def bracket3(j):
        return (
            rep.k[j] * dr_r2psi * st / r
            - rep.f[j] * dphi_ps
            + rep.g[j] * dphi_pc
            - rep.h[j] * dth_ps2
            + rep.l[j] * dth_ps2t
        )

    integrand = wr * bracket3(0) + wphi / (r * st) * bracket3(1) + wth / r * bracket3(2)
    radial = _angular_plain(integrand, shell)
    return -integrate(radial * shell.radial.nodes, shell.radial, rule=rule)


def reduced_radial_operator(spec: CoefficientSpec, profile, grid: RadialGrid) -> np.ndarray:
    """``D_r(k1 D_r p)`` for a radial profile ``p`` (leading axes allowed).

    Expanded as ``k1 p'' + k1' p'`` so that the one-sided end stencils stay
    second order; nesting two first-derivative stencils would not.
    """
    k1 = trace_profile(spec, grid.nodes)
    return k1 * second_derivative_r(profile, grid) + derivative_r(k1, grid) * derivative_r(profile, grid)


def e_apply(q, grid: RadialGrid) -> np.ndarray:
    """``E q(r) = int_r^{R2} q``, slice by slice along the last axis."""
    return cumulative_from_right(q, grid)


@dataclass(frozen=True)
class U0Data:
    """Radial profiles ``Phi[B u0]`` and ``Phi[C u0]`` with the cached exponent.

    ``exponent`` is ``X(r) = int_{R1}^r ratio`` with ``ratio = Phi[Bu0]/Phi[Cu0]``,
    so every nested exponential ``exp(int_r^eta ratio)`` is ``exp(X(eta) - X(r))``.
    """

    phi_bu0: np.ndarray
    phi_cu0: np.ndarray
    grid: RadialGrid
    m: float | None = None
    rule: str = "trapezoid"
    ratio: np.ndarray = field(init=False, repr=False)
    exponent: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.phi_bu0, dtype=float)
        c = np.asarray(self.phi_cu0, dtype=float)
        if b.shape != (self.grid.n_nodes,) or c.shape != (self.grid.n_nodes,):
            raise ShapeError("U0Data profiles must match the radial grid")
        m = self.m if self.m is not None else 1e-10 * max(float(np.max(np.abs(c))), 1e-300)
        nodes = self.grid.nodes
        small = np.flatnonzero(np.abs(c) < m)
        if small.size:
            i = small[0]
            raise DegeneracyError(
                f"|Phi[C u0]| = {abs(c[i]):.3g} < m = {m:.3g} at node {i} (r = {nodes[i]:.6g})"
            )
        flips = np.flatnonzero(np.sign(c[1:]) != np.sign(c[:-1]))
        if flips.size:
            i = flips[0]
            raise DegeneracyError(
                f"Phi[C u0] changes sign between r = {nodes[i]:.6g} and r = {nodes[i + 1]:.6g}"
            )
        object.__setattr__(self, "phi_bu0", b)
        object.__setattr__(self, "phi_cu0", c)
        ratio = b / c
        object.__setattr__(self, "ratio", ratio)
        object.__setattr__(self, "exponent", cumulative_from_left(ratio, self.grid, rule=self.rule))

    @property
    def growth(self) -> np.ndarray:
        """``exp(int_r^{R2} ratio)``."""
        return np.exp(self.exponent[-1] - self.exponent)

    def l_apply(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.grid.n_nodes:
            raise ShapeError(f"profile length {g.shape[-1]} does not match grid")
        x = self.exponent
        inner = cumulative_from_right(np.exp(x) * g / self.phi_cu0, self.grid, rule=self.rule)
        return np.exp(-x) * inner

    def j3_apply(self, g) -> np.ndarray:
        """``(g + Phi[Bu0] L g) / Phi[Cu0]``."""
        g = np.asarray(g, dtype=float)
        return (g + self.phi_bu0 * self.l_apply(g)) / self.phi_cu0

    @property
    def j2(self) -> np.ndarray:
        return -self.ratio * self.growth


def l_apply(g, u0: U0Data) -> np.ndarray:
    return u0.l_apply(g)


@dataclass(frozen=True)
class JQuantities:
    u0: U0Data
    j0: np.ndarray
    j_field: np.ndarray
    j1: float
    j2: np.ndarray

    def j3(self, g) -> np.ndarray:
        return self.u0.j3_apply(g)


def j_quantities(
    bu0: np.ndarray,
    cu0: np.ndarray,
    measurement: MeasurementSpec,
    shell: ShellGrid,
    m: float | None = None,
    rel_tol: float = 1e-10,
) -> JQuantities:
    """Assemble ``J0``, the field ``J(u0)``, ``J1 = Psi[J(u0)]`` and ``J2`` from ``B u0`` and ``C u0``.

    Raises :class:`SolvabilityError` when ``|J1|`` is below
    ``rel_tol * max|J(u0)| * max|psi| * volume``.
    """
    u0 = U0Data(phi_apply(measurement, bu0, shell), phi_apply(measurement, cu0, shell), shell.radial, m=m)
    expand = (slice(None),) + (None,) * len(shell.angular.shape)
    j_field = (bu0 - u0.ratio[expand] * cu0) * u0.growth[expand]
    j1 = float(psi_apply(measurement, j_field, shell))
    scale = (
        float(np.max(np.abs(j_field)))
        * float(np.max(np.abs(measurement.psi_samples(shell))))
        * shell.volume
    )
    if not abs(j1) > rel_tol * scale:
        raise SolvabilityError(
            f"J1 = Psi[J(u0)] = {j1:.3g} vanishes relative to scale {scale:.3g}; "
            "the volume weight must not factor through the angular weight"
        )
    return JQuantities(u0=u0, j0=np.abs(u0.phi_cu0), j_field=j_field, j1=j1, j2=u0.j2)
