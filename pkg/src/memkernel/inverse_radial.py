"""Kernel identification for the radial model from a known state.

Given ``u``, the memory term ``f~`` and ``g(t) = int lam k(t, .) dr`` the kernel
is recovered through ``q = D_r k`` and ``h(t) = k(t, R1)``:

1. ``assemble`` forms ``alpha, beta, gamma, f1`` and the constants ``kappa``,
   ``kappa1`` from ``u`` and the data;
2. ``green_function`` inverts the spatial part
   ``q + alpha int_{R1}^r q - kappa alpha int lam1 q``;
3. ``g1_kernel`` builds the time-dependent kernel so that
   ``q = w + L1 q`` with ``L1 q = -beta * q + int G1 * q``;
4. ``volterra_solve`` solves that second-kind Volterra equation by time
   marching or by Picard iteration in a norm weighted by ``exp(-sigma t)``;
5. ``reconstruct_k`` returns ``h = kappa g - kappa int lam1 q`` and
   ``k = h + int_{R1}^r q``.

Radial integrals inside the solver are trapezoid sums so that the
cumulative integral ``int_{R1}^r`` and the full integral share one set of
weights. Note that ``h`` here is anchored at ``R1``; the shell reduction
anchors its ``h`` at ``R2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DegeneracyError, ShapeError, SolvabilityError
from .forward import SpaceTimeField, manufacture, radial_laplacian
from .grid import (
    RadialGrid,
    TimeGrid,
    convolve_time,
    cumulative_from_left,
    cumulative_from_right,
    cumulative_matrix,
    derivative_r,
    integrate,
    quadrature_weights,
)

__all__ = [
    "RadialInverseInput",
    "AssembledCoefficients",
    "GreenKernel",
    "IdentificationResult",
    "VolterraSolution",
    "assemble",
    "green_function",
    "green_constant",
    "auxiliary_solve",
    "g1_kernel",
    "l_bound",
    "phi_profile",
    "contraction_bound",
    "select_sigma",
    "weighted_norm",
    "apply_l1",
    "volterra_solve",
    "reconstruct_k",
    "identify",
    "integration_by_parts_identity",
]

METHODS = ("time_march", "picard")


@dataclass(frozen=True)
class RadialInverseInput:
    """Known state ``u``, memory term ``f_tilde``, constraint datum ``g`` and weight ``lam``.

    ``lam`` is a radial profile (samples or a callable of ``r``). ``m`` is the
    required lower bound for ``|D_r u(0, .)|``; by default ``1e-8`` times its
    maximum.
    """

    u: SpaceTimeField
    f_tilde: SpaceTimeField
    g: np.ndarray
    lam: np.ndarray | Callable | float = 1.0
    dimension: int = 3
    m: float | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.f_tilde.grid != self.u.grid or self.f_tilde.tgrid != self.u.tgrid:
            raise ShapeError("u and f_tilde must share grids")
        g = np.asarray(self.g, dtype=float)
        if g.shape != (self.u.tgrid.n_nodes,):
            raise ShapeError(f"g must have {self.u.tgrid.n_nodes} samples, got shape {g.shape}")
        object.__setattr__(self, "g", g)

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @property
    def tgrid(self) -> TimeGrid:
        return self.u.tgrid

    def lam_samples(self) -> np.ndarray:
        r = self.grid.nodes
        lam = self.lam(r) if callable(self.lam) else self.lam
        out = np.broadcast_to(np.asarray(lam, dtype=float), r.shape).copy()
        if not np.all(np.isfinite(out)):
            raise ShapeError("lam contains non-finite values")
        return out


@dataclass(frozen=True)
class AssembledCoefficients:
    grid: RadialGrid
    tgrid: TimeGrid
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    f1: np.ndarray
    lam: np.ndarray
    lam1: np.ndarray
    kappa: float
    kappa1: float
    du0: np.ndarray
    exponent: np.ndarray = field(repr=False)


def _solvability_check(value: float, scale: float, what: str) -> None:
    if not abs(value) > 1e-12 * scale:
        raise SolvabilityError(f"{what} = {value:.3g} vanishes (scale {scale:.3g})")


def assemble(inp: RadialInverseInput, rule: str = "trapezoid") -> AssembledCoefficients:
    """Coefficients of the second-kind equation from the data.

    ``alpha = L u(0) / D_r u(0)``, ``beta = D_t D_r u / D_r u(0)``,
    ``gamma = D_t L u / D_r u(0)`` and
    ``f1 = D_t f~ / D_r u(0) - kappa g alpha - kappa int_0^t gamma(t - s) g(s) ds``
    with ``L = D_r^2 + (n - 1)/r D_r``. Time derivatives are second-order
    differences on the time grid.
    """
    grid, tgrid, n = inp.grid, inp.tgrid, inp.dimension
    r = grid.nodes
    u = inp.u.values
    du = derivative_r(u, grid)
    du0 = du[0]
    m = inp.m if inp.m is not None else 1e-8 * max(float(np.max(np.abs(du0))), 1e-300)
    bad = np.flatnonzero(np.abs(du0) < m)
    if bad.size:
        i = bad[0]
        raise DegeneracyError(f"|D_r u(0, r)| = {abs(du0[i]):.3g} < m = {m:.3g} at node {i} (r = {r[i]:.6g})")
    flips = np.flatnonzero(np.sign(du0[1:]) != np.sign(du0[:-1]))
    if flips.size:
        i = flips[0]
        raise DegeneracyError(f"D_r u(0, .) changes sign between node {i} (r = {r[i]:.6g}) and node {i + 1}")

    lap = radial_laplacian(u, grid, n)
    dt = tgrid.step
    alpha = lap[0] / du0
    beta = np.gradient(du, dt, axis=0, edge_order=2) / du0
    gamma = np.gradient(lap, dt, axis=0, edge_order=2) / du0

    lam = inp.lam_samples()
    lam_total = float(integrate(lam, grid, rule=rule))
    _solvability_check(lam_total, float(integrate(np.abs(lam), grid, rule=rule)), "int lam")
    kappa = 1.0 / lam_total
    lam1 = cumulative_from_right(lam, grid, rule=rule)
    exponent = cumulative_from_left(alpha, grid, rule=rule)
    weight = lam * np.exp(-exponent)
    kappa1 = float(integrate(weight, grid, rule=rule))
    _solvability_check(kappa1, float(integrate(np.abs(weight), grid, rule=rule)), "kappa1")

    g = inp.g
    dft = inp.f_tilde.d_t()
    f1 = dft / du0 - kappa * g[:, None] * alpha[None, :] - kappa * convolve_time(gamma, g[:, None], tgrid)
    return AssembledCoefficients(
        grid=grid,
        tgrid=tgrid,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        f1=f1,
        lam=lam,
        lam1=lam1,
        kappa=kappa,
        kappa1=kappa1,
        du0=du0,
        exponent=exponent,
    )


def integration_by_parts_identity(alpha, lam, grid: RadialGrid, rule: str | None = None) -> tuple[float, float]:
    """Both sides of ``1 - kappa int lam1 alpha e^{-A} = kappa int lam e^{-A}`` with ``A = int_{R1}^r alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    lam = np.asarray(lam, dtype=float)
    cum = "simpson" if (rule or grid.default_rule) == "simpson" else "trapezoid"
    a = cumulative_from_left(alpha, grid, rule=cum)
    kappa = 1.0 / float(integrate(lam, grid, rule=rule))
    lam1 = cumulative_from_right(lam, grid, rule=cum)
    lhs = 1.0 - kappa * float(integrate(lam1 * alpha * np.exp(-a), grid, rule=rule))
    rhs = kappa * float(integrate(lam * np.exp(-a), grid, rule=rule))
    return lhs, rhs


def _chi(grid: RadialGrid) -> np.ndarray:
    """Discrete indicator of ``rho <= r`` whose trapezoid sum is the cumulative integral."""
    return cumulative_matrix(grid) / quadrature_weights(grid, "trapezoid")[None, :]


@dataclass(frozen=True)
class GreenKernel:
    grid: RadialGrid
    matrix: np.ndarray
    method: str

    def apply(self, f) -> np.ndarray:
        """``int G(r, rho) f(rho) d rho`` along the last axis."""
        w = quadrature_weights(self.grid, "trapezoid")
        return np.asarray(f, dtype=float) @ (self.matrix * w[None, :]).T


def green_function(
    alpha,
    lam,
    grid: RadialGrid,
    kappa1: float | None = None,
    method: str = "closed_form",
) -> GreenKernel:
    """Green function of ``q + alpha int_{R1}^r q - kappa alpha int lam1 q = f``.

    ``closed_form`` samples
    ``alpha(r) [e^{-A(r)} P(rho) / kappa1 - chi(rho <= r) e^{A(rho) - A(r)}]`` with
    ``P(rho) = int_rho^{R2} lam(s) e^{A(rho) - A(s)} ds``; ``discrete`` inverts
    the discretised operator exactly, so that ``q = f + int G f`` solves the
    discrete equation to rounding error.
    """
    alpha = np.asarray(alpha, dtype=float)
    lam = np.asarray(lam, dtype=float)
    n = grid.n_nodes
    if alpha.shape != (n,) or lam.shape != (n,):
        raise ShapeError("alpha and lam must be sampled on the radial grid")
    a = cumulative_from_left(alpha, grid)
    if method == "closed_form":
        tail = cumulative_from_right(lam * np.exp(-a), grid)
        if kappa1 is None:
            kappa1 = float(tail[0])
        _solvability_check(kappa1, float(integrate(np.abs(lam * np.exp(-a)), grid, rule="trapezoid")), "kappa1")
        p = np.exp(a) * tail
        spread = np.exp(a[None, :] - a[:, None])
        g = alpha[:, None] * (np.exp(-a)[:, None] * p[None, :] / kappa1 - _chi(grid) * spread)
        return GreenKernel(grid, g, method)
    if method == "discrete":
        w = quadrature_weights(grid, "trapezoid")
        total = float(w @ lam)
        _solvability_check(total, float(w @ np.abs(lam)), "int lam")
        kappa = 1.0 / total
        lam1 = cumulative_from_right(lam, grid)
        system = np.eye(n) - kappa * np.outer(alpha, w * lam1) + alpha[:, None] * cumulative_matrix(grid)
        try:
            inverse = np.linalg.inv(system)
        except np.linalg.LinAlgError as exc:
            raise SolvabilityError(f"spatial operator is singular: {exc}") from exc
        return GreenKernel(grid, (inverse - np.eye(n)) / w[None, :], method)
    raise ConfigurationError(f"unknown Green function method {method!r}")


def green_constant(alpha, lam, kappa1: float, grid: RadialGrid) -> float:
    """``C1 = e^{|alpha|_1} (1 + e^{|alpha|_1} |lam|_1 / |kappa1|)``, so that ``|G(r, rho)| <= C1 |alpha(r)|``."""
    a1 = float(integrate(np.abs(alpha), grid, rule="trapezoid"))
    l1 = float(integrate(np.abs(lam), grid, rule="trapezoid"))
    return float(np.exp(a1) * (1.0 + np.exp(a1) * l1 / abs(kappa1)))


def auxiliary_solve(f, green: GreenKernel) -> np.ndarray:
    """``q = f + int G f``; works slice by slice for space-time arrays."""
    f = np.asarray(f, dtype=float)
    return f + green.apply(f)


def g1_kernel(assembled: AssembledCoefficients, green: GreenKernel) -> np.ndarray:
    """Time-indexed kernels ``G1(t_i, r, rho)``, shape ``(n_t, n_r, n_r)``.

    ``G1 = kappa gamma(r) lam1(rho) - gamma(r) chi(rho <= r) - beta(rho) G(r, rho)
    + kappa lam1(rho) int G gamma - int_rho^{R2} G(r, xi) gamma(xi) d xi``.
    """
    grid = assembled.grid
    w = quadrature_weights(grid, "trapezoid")
    gw = green.matrix * w[None, :]
    chi = _chi(grid)
    kappa, lam1 = assembled.kappa, assembled.lam1
    out = np.empty((assembled.tgrid.n_nodes, grid.n_nodes, grid.n_nodes))
    for i, (beta, gamma) in enumerate(zip(assembled.beta, assembled.gamma)):
        smoothed = gamma + gw @ gamma
        out[i] = (
            kappa * np.outer(smoothed, lam1)
            - gamma[:, None] * chi
            - gw @ (gamma[:, None] * chi)
            - green.matrix * beta[None, :]
        )
    return out


def l_bound(assembled: AssembledCoefficients, c1: float) -> np.ndarray:
    """Pointwise-in-time bound ``l(t)`` on ``max_r int |G1(t, r, rho)| d rho``."""
    grid = assembled.grid
    length = grid.length
    a_inf = float(np.max(np.abs(assembled.alpha)))
    lam_l1 = float(integrate(np.abs(assembled.lam), grid, rule="trapezoid"))
    b_inf = np.max(np.abs(assembled.beta), axis=1)
    g_inf = np.max(np.abs(assembled.gamma), axis=1)
    return c1 * a_inf * b_inf * length + (1.0 + abs(assembled.kappa) * lam_l1) * (1.0 + c1 * a_inf * length) * g_inf * length


def phi_profile(assembled: AssembledCoefficients, g1: np.ndarray) -> np.ndarray:
    """``phi(t) = max|beta(t, .)| + max_r int |G1(t, r, rho)| d rho`` with the solver's quadrature."""
    w = quadrature_weights(assembled.grid, "trapezoid")
    return np.max(np.abs(assembled.beta), axis=1) + np.max(np.abs(g1) @ w, axis=1)


def contraction_bound(phi, tgrid: TimeGrid, sigma: float) -> float:
    """``int_0^T e^{-sigma t} phi(t) dt`` by the trapezoid rule on the time grid."""
    return float(integrate(np.exp(-sigma * tgrid.nodes) * np.asarray(phi), tgrid, rule="trapezoid"))


def select_sigma(phi, tgrid: TimeGrid, target: float = 0.5, sigma0: float = 1.0, max_doublings: int = 80) -> float:
    """Smallest ``sigma`` in ``sigma0 * 2^j`` with ``contraction_bound <= target``."""
    floor = 0.5 * tgrid.step * float(np.asarray(phi)[0])
    if floor >= target:
        raise ConvergenceError(
            f"no weight can push the bound below {target}: the current-node term alone is {floor:.3g}; "
            "refine the time grid",
            contraction_factor=floor,
        )
    sigma = sigma0
    for _ in range(max_doublings):
        if contraction_bound(phi, tgrid, sigma) <= target:
            return sigma
        sigma *= 2.0
    raise ConvergenceError("sigma search did not reach the target bound", contraction_factor=None)


def weighted_norm(q, tgrid: TimeGrid, sigma: float) -> float:
    """``max_t e^{-sigma t} max_r |q(t, r)|``."""
    q = np.asarray(q, dtype=float)
    return float(np.max(np.exp(-sigma * tgrid.nodes) * np.max(np.abs(q), axis=1)))


def _time_weights(i: int, dt: float) -> np.ndarray:
    w = np.full(i + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def apply_l1(q, assembled: AssembledCoefficients, g1: np.ndarray) -> np.ndarray:
    """``L1 q = -int_0^t beta(t - s) q(s) ds + int_0^t int G1(t - s, r, rho) q(s, rho) d rho ds``."""
    q = np.asarray(q, dtype=float)
    w = quadrature_weights(assembled.grid, "trapezoid")
    g1w = g1 * w[None, None, :]
    beta = assembled.beta
    out = np.zeros_like(q)
    dt = assembled.tgrid.step
    for i in range(1, q.shape[0]):
        tw = _time_weights(i, dt)
        spatial = np.einsum("jab,jb->ja", g1w[i::-1], q[: i + 1])
        out[i] = tw @ (spatial - beta[i::-1] * q[: i + 1])
    return out


@dataclass(frozen=True)
class VolterraSolution:
    q: np.ndarray
    method: str
    iterations: int
    sigma: float | None = None
    bound: float | None = None
    contraction: float | None = None


def volterra_solve(
    w,
    assembled: AssembledCoefficients,
    g1: np.ndarray,
    method: str = "time_march",
    tol: float = 1e-10,
    max_iter: int = 40,
    sigma: float | None = None,
) -> VolterraSolution:
    """Solve ``q = w + L1 q``.

    ``time_march`` solves one small dense system per time node (the
    current-node quadrature weight makes each step implicit). ``picard``
    iterates ``q <- w + L1 q`` from ``q = w`` until the relative increment is
    below ``tol`` in both the weighted and the plain sup norm; ``sigma`` is
    selected automatically when not given.
    """
    w_arr = np.asarray(w, dtype=float)
    tgrid = assembled.tgrid
    if method == "time_march":
        nr = assembled.grid.n_nodes
        wr = quadrature_weights(assembled.grid, "trapezoid")
        g1w = g1 * wr[None, None, :]
        beta = assembled.beta
        q = np.zeros_like(w_arr)
        q[0] = w_arr[0]
        dt = tgrid.step
        eye = np.eye(nr)
        step_matrix = eye + 0.5 * dt * (np.diag(beta[0]) - g1w[0])
        for i in range(1, tgrid.n_nodes):
            tw = _time_weights(i, dt)[:-1]
            spatial = np.einsum("jab,jb->ja", g1w[i:0:-1], q[:i])
            history = tw @ (spatial - beta[i:0:-1] * q[:i])
            q[i] = np.linalg.solve(step_matrix, w_arr[i] + history)
        return VolterraSolution(q=q, method=method, iterations=tgrid.n_nodes - 1)
    if method == "picard":
        phi = phi_profile(assembled, g1)
        if sigma is None:
            sigma = select_sigma(phi, tgrid)
        bound = contraction_bound(phi, tgrid, sigma)
        q = w_arr.copy()
        prev_inc = None
        factor = None
        for it in range(1, max_iter + 1):
            q_new = w_arr + apply_l1(q, assembled, g1)
            inc = q_new - q
            inc_w = weighted_norm(inc, tgrid, sigma)
            scale_w = max(weighted_norm(q_new, tgrid, sigma), 1e-300)
            scale = max(float(np.max(np.abs(q_new))), 1e-300)
            if prev_inc is not None and prev_inc > 0:
                factor = inc_w / prev_inc
            prev_inc = inc_w
            q = q_new
            if inc_w <= tol * scale_w and float(np.max(np.abs(inc))) <= tol * scale:
                return VolterraSolution(q=q, method=method, iterations=it, sigma=sigma, bound=bound, contraction=factor)
        raise ConvergenceError(
            f"Picard iteration did not converge in {max_iter} iterations "
            f"(measured contraction {factor if factor is not None else float('nan'):.3g}, bound {bound:.3g})",
            contraction_factor=factor,
        )
    raise ConfigurationError(f"unknown method {method!r}; use one of {METHODS}")


def reconstruct_k(q, g, kappa: float, lam1, grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """``h = kappa g - kappa int lam1 q`` and ``k = h + int_{R1}^r q``."""
    q = np.asarray(q, dtype=float)
    w = quadrature_weights(grid, "trapezoid")
    h = kappa * np.asarray(g, dtype=float) - kappa * (q @ (w * np.asarray(lam1)))
    k = h[:, None] + cumulative_from_left(q, grid)
    return k, h


@dataclass(frozen=True)
class IdentificationResult:
    k: SpaceTimeField
    h: np.ndarray
    q: SpaceTimeField
    diagnostics: dict


def identify(
    inp: RadialInverseInput,
    method: str = "time_march",
    green_method: str = "closed_form",
    tol: float = 1e-10,
    max_iter: int = 40,
    cross_check: bool = False,
    constraint_factor: float = 1.0,
) -> IdentificationResult:
    """Recover ``k`` from ``(u, f~, g, lam)``.

    ``diagnostics`` reports the constants, the integration-by-parts identity
    residual, the Green bound ratio, the weighted contraction bound and
    measured factor, the constraint residual ``max_t |int lam k - g|`` and the
    residual of the memory equation with the recovered kernel. The constraint
    holds up to quadrature error, so it is flagged once it exceeds
    ``constraint_factor * dr^2 * max(1, max|g|)``. With
    ``cross_check`` the other solution method is run as well and their
    relative difference is reported.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; use one of {METHODS}")
    asm = assemble(inp)
    grid, tgrid = asm.grid, asm.tgrid
    green = green_function(asm.alpha, asm.lam, grid, kappa1=asm.kappa1, method=green_method)
    g1 = g1_kernel(asm, green)
    w = auxiliary_solve(asm.f1, green)
    phi = phi_profile(asm, g1)
    sigma = select_sigma(phi, tgrid)
    sol = volterra_solve(w, asm, g1, method=method, tol=tol, max_iter=max_iter, sigma=sigma)
    k, h = reconstruct_k(sol.q, inp.g, asm.kappa, asm.lam1, grid)

    lhs, rhs = integration_by_parts_identity(asm.alpha, asm.lam, grid, rule="trapezoid")
    c1 = green_constant(asm.alpha, asm.lam, asm.kappa1, grid)
    alpha_abs = np.abs(asm.alpha)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(alpha_abs > 0, np.abs(green.matrix) / (c1 * alpha_abs), 0.0)
    lvals = l_bound(asm, c1)
    g1_norm = np.max(np.abs(g1) @ quadrature_weights(grid, "trapezoid"), axis=1)
    constraint = integrate(k * asm.lam, grid, rule="trapezoid") - inp.g
    g_scale = max(float(np.max(np.abs(inp.g))), 1.0)
    memory, _ = manufacture(SpaceTimeField(grid, tgrid, k), inp.u, inp.dimension, asm.lam)
    first_kind = float(np.max(np.abs(memory.values - inp.f_tilde.values)))

    diag = {
        "kappa": asm.kappa,
        "kappa1": asm.kappa1,
        "identity_lhs": lhs,
        "identity_rhs": rhs,
        "identity_residual": abs(lhs - rhs),
        "green_constant": c1,
        "green_bound_ratio": float(np.max(ratio)),
        "g1_over_l_max": float(np.max(g1_norm / np.where(lvals > 0, lvals, np.inf))),
        "sigma": sigma,
        "contraction_bound": contraction_bound(phi, tgrid, sigma),
        "measured_contraction": _measured_contraction(asm, g1, sigma),
        "iterations": sol.iterations,
        "constraint_residual": float(np.max(np.abs(constraint))),
        "constraint_tolerance": constraint_factor * grid.spacing**2 * g_scale,
        "constraint_ok": float(np.max(np.abs(constraint))) <= constraint_factor * grid.spacing**2 * g_scale,
        "first_kind_residual": first_kind,
        "method": method,
        "green_method": green_method,
    }
    if sol.contraction is not None:
        diag["picard_factor"] = sol.contraction
    if cross_check:
        other = "picard" if method == "time_march" else "time_march"
        alt = volterra_solve(w, asm, g1, method=other, tol=tol, max_iter=max_iter, sigma=sigma)
        diag["cross_method_difference"] = float(np.max(np.abs(alt.q - sol.q)) / max(float(np.max(np.abs(sol.q))), 1e-300))
    return IdentificationResult(
        k=SpaceTimeField(grid, tgrid, k),
        h=h,
        q=SpaceTimeField(grid, tgrid, sol.q),
        diagnostics=diag,
    )


def _measured_contraction(asm: AssembledCoefficients, g1: np.ndarray, sigma: float, n_samples: int = 4) -> float:
    """Largest ``|L1 q|_sigma / |q|_sigma`` over a few fixed pseudo-random ``q``."""
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(n_samples):
        q = rng.standard_normal((asm.tgrid.n_nodes, asm.grid.n_nodes))
        worst = max(worst, weighted_norm(apply_l1(q, asm, g1), asm.tgrid, sigma) / weighted_norm(q, asm.tgrid, sigma))
    return worst
