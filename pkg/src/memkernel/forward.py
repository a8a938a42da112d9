"""Radial forward model with memory and manufactured data.

For a radial state ``u(t, r)`` in dimension ``n`` the model is

    D_t u = L u + int_0^t [k(t - s) L u(s) + D_r k(t - s) D_r u(s)] ds + f,

with ``L = D_r^2 + (n - 1)/r D_r``. The memory integral is what the inverse
problem observes; :func:`manufacture` evaluates it for a given pair ``(k, u)``
and the weighted kernel average ``g(t) = int lam(r) k(t, r) dr``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .coefficients import CoefficientSpec, conormal_vector
from .errors import ConfigurationError, ShapeError, SolverError
from .grid import RadialGrid, TimeGrid, derivative_r, integrate, second_derivative_r

__all__ = [
    "SpaceTimeField",
    "ForwardProblem",
    "solve_forward",
    "manufacture",
    "radial_laplacian",
    "boundary_data_from",
]

SCHEMES = {"implicit_euler": 1.0, "crank_nicolson": 0.5}


@dataclass(frozen=True)
class SpaceTimeField:
    """Samples ``values[i, j] = v(t_i, r_j)``."""

    grid: RadialGrid
    tgrid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        expected = (self.tgrid.n_nodes, self.grid.n_nodes)
        if vals.shape != expected:
            raise ShapeError(f"field has shape {vals.shape}, grids need {expected}")
        if not np.all(np.isfinite(vals)):
            raise ShapeError("field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def sample(cls, fn: Callable, grid: RadialGrid, tgrid: TimeGrid) -> "SpaceTimeField":
        t, r = np.meshgrid(tgrid.nodes, grid.nodes, indexing="ij")
        return cls(grid, tgrid, np.broadcast_to(fn(t, r), t.shape))

    @classmethod
    def zeros(cls, grid: RadialGrid, tgrid: TimeGrid) -> "SpaceTimeField":
        return cls(grid, tgrid, np.zeros((tgrid.n_nodes, grid.n_nodes)))

    def d_r(self) -> np.ndarray:
        return derivative_r(self.values, self.grid)

    def d_t(self) -> np.ndarray:
        return np.gradient(self.values, self.tgrid.step, axis=0, edge_order=2)


def radial_laplacian(values, grid: RadialGrid, dimension: int) -> np.ndarray:
    """``D_r^2 v + (n - 1)/r D_r v`` along the last axis."""
    return second_derivative_r(values, grid) + (dimension - 1) / grid.nodes * derivative_r(values, grid)


def _fd_matrices(grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """First- and second-derivative matrices matching :func:`derivative_r` and :func:`second_derivative_r`."""
    eye = np.eye(grid.n_nodes)
    return derivative_r(eye, grid, axis=0), second_derivative_r(eye, grid, axis=0)


def _trapezoid_row(i: int, dt: float) -> np.ndarray:
    w = np.full(i + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


@dataclass
class ForwardProblem:
    """Radial problem data.

    ``bc = (outer, inner)`` with entries ``"D"`` (value) or ``"N"`` (outward
    conormal flux ``nu * D_r u`` at ``R2``, ``-nu * D_r u`` at ``R1``, with
    ``nu = a + d`` from ``coefficients``; the Laplacian when omitted).
    ``boundary`` holds the matching data as two arrays over the time nodes;
    ``None`` means homogeneous.
    """

    dimension: int
    grid: RadialGrid
    tgrid: TimeGrid
    u0: np.ndarray
    kernel: SpaceTimeField | None = None
    source: SpaceTimeField | None = None
    bc: tuple[str, str] = ("D", "D")
    boundary: tuple[np.ndarray, np.ndarray] | None = None
    scheme: str = "implicit_euler"
    coefficients: CoefficientSpec | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; use one of {sorted(SCHEMES)}")
        if tuple(self.bc) not in {(a, b) for a in "DN" for b in "DN"}:
            raise ConfigurationError(f"boundary conditions must be in {{D,N}}^2, got {self.bc}")
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.grid.n_nodes,):
            raise ShapeError("u0 must be sampled on the radial grid")
        for name in ("kernel", "source"):
            fld = getattr(self, name)
            if fld is not None and fld.values.shape != (self.tgrid.n_nodes, self.grid.n_nodes):
                raise ShapeError(f"{name} does not match the grids")
        if self.boundary is not None:
            outer, inner = (np.broadcast_to(np.asarray(b, dtype=float), (self.tgrid.n_nodes,)) for b in self.boundary)
            self.boundary = (outer, inner)

    def conormal_factors(self) -> tuple[float, float]:
        """Signed scalars ``(c_out, c_in)``: the outward conormal flux on each shell is ``c * D_r u``."""
        spec = self.coefficients or CoefficientSpec(dimension=self.dimension)
        return (
            conormal_vector(spec, "outer", self.grid.r_max),
            conormal_vector(spec, "inner", self.grid.r_min),
        )


def solve_forward(problem: ForwardProblem) -> SpaceTimeField:
    """Theta-method in time, second-order differences in ``r``.

    The memory integral uses trapezoid product integration; its current-node
    contribution ``(dt/2) [k(0) L u_i + D_r k(0) D_r u_i]`` is kept implicit and
    the history is explicit.
    """
    grid, tgrid, n = problem.grid, problem.tgrid, problem.dimension
    theta = SCHEMES[problem.scheme]
    nr, nt, dt = grid.n_nodes, tgrid.n_nodes, tgrid.step
    r = grid.nodes
    d1, d2 = _fd_matrices(grid)
    lap = d2 + ((n - 1) / r)[:, None] * d1
    eye = np.eye(nr)

    k = problem.kernel.values if problem.kernel is not None else np.zeros((nt, nr))
    dk = derivative_r(k, grid)
    f = problem.source.values if problem.source is not None else np.zeros((nt, nr))
    outer_data, inner_data = problem.boundary if problem.boundary is not None else (np.zeros(nt), np.zeros(nt))
    c_out, c_in = problem.conormal_factors()

    u = np.zeros((nt, nr))
    u[0] = problem.u0
    lap_u = np.zeros((nt, nr))
    dr_u = np.zeros((nt, nr))
    lap_u[0] = lap @ u[0]
    dr_u[0] = d1 @ u[0]
    memory_prev = np.zeros(nr)
    memory_now_matrix = 0.5 * dt * (k[0][:, None] * lap + dk[0][:, None] * d1)

    boundary_rows = []
    for idx, kind in ((nr - 1, problem.bc[0]), (0, problem.bc[1])):
        if kind == "D":
            row = eye[idx]
        else:
            c = c_out if idx == nr - 1 else c_in
            if c == 0.0:
                raise SolverError("conormal factor vanishes; the Neumann condition is degenerate")
            row = c * d1[idx]
        boundary_rows.append((idx, row))

    system = eye - theta * dt * (lap + memory_now_matrix)
    for idx, row in boundary_rows:
        system[idx] = row
    try:
        lu = lu_factor(system, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"time-step matrix could not be factorised: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
        raise SolverError("time-step matrix is singular")

    for i in range(1, nt):
        w = _trapezoid_row(i, dt)
        hist = w[:-1] @ (k[i:0:-1] * lap_u[:i] + dk[i:0:-1] * dr_u[:i])
        rhs = u[i - 1] + dt * (1.0 - theta) * (lap_u[i - 1] + memory_prev + f[i - 1]) + dt * theta * (hist + f[i])
        rhs[nr - 1] = outer_data[i]
        rhs[0] = inner_data[i]
        u[i] = lu_solve(lu, rhs)
        lap_u[i] = lap @ u[i]
        dr_u[i] = d1 @ u[i]
        memory_prev = hist + memory_now_matrix @ u[i]
    return SpaceTimeField(grid, tgrid, u)


def boundary_data_from(u: SpaceTimeField, bc: tuple[str, str], conormal: tuple[float, float] = (1.0, -1.0)):
    """Boundary arrays ``(outer, inner)`` read off a known solution.

    ``conormal`` holds the signed factors of :meth:`ForwardProblem.conormal_factors`.
    """
    du = u.d_r()
    out = []
    for kind, idx, c in ((bc[0], -1, conormal[0]), (bc[1], 0, conormal[1])):
        out.append(u.values[:, idx] if kind == "D" else c * du[:, idx])
    return tuple(out)


def manufacture(
    k_true: SpaceTimeField, u: SpaceTimeField, dimension: int, lam, rule: str | None = None
) -> tuple[SpaceTimeField, np.ndarray]:
    """Memory term ``f~`` of ``(k_true, u)`` and the constraint datum ``g = int lam k_true dr``.

    The time convolution is trapezoid product integration, so ``f~(0, .) = 0``
    exactly.
    """
    grid, tgrid = u.grid, u.tgrid
    if k_true.grid != grid or k_true.tgrid != tgrid:
        raise ShapeError("kernel and state must live on the same grids")
    k = k_true.values
    dk = derivative_r(k, grid)
    lap_u = radial_laplacian(u.values, grid, dimension)
    du = u.d_r()
    nt = tgrid.n_nodes
    f_tilde = np.zeros((nt, grid.n_nodes))
    for i in range(1, nt):
        w = _trapezoid_row(i, tgrid.step)
        f_tilde[i] = w @ (dk[i::-1] * du[: i + 1] + k[i::-1] * lap_u[: i + 1])
    lam_s = np.broadcast_to(lam(grid.nodes) if callable(lam) else np.asarray(lam, dtype=float), (grid.n_nodes,))
    g = integrate(k * lam_s, grid, rule=rule)
    return SpaceTimeField(grid, tgrid, f_tilde), np.asarray(g, dtype=float)
