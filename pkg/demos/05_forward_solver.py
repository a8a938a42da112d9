"""Radial heat equation with memory: pure decay, then a manufactured solution with a kernel."""

import numpy as np
import sympy as sp

from memkernel import ForwardProblem, RadialGrid, SpaceTimeField, TimeGrid, manufacture, solve_forward
from memkernel.forward import boundary_data_from

grid, tgrid = RadialGrid.with_intervals(1.0, 2.0, 64), TimeGrid(1.0, 64)
r = grid.nodes
u0 = np.sin(np.pi * (r - 1)) / r
u = solve_forward(ForwardProblem(3, grid, tgrid, u0, scheme="crank_nicolson"))
exact = np.exp(-np.pi**2 * tgrid.nodes)[:, None] * u0
print(f"decaying eigenmode: max error {np.max(np.abs(u.values - exact)):.2e}")

t, rr = sp.symbols("t r")
k_expr, u_expr = sp.exp(-t) * (1 + rr), (rr**2 + 1) * sp.cos(t)
sample = lambda e: SpaceTimeField.sample(sp.lambdify((t, rr), e, "numpy"), grid, tgrid)  # noqa: E731
kernel, truth = sample(k_expr), sample(u_expr)
lap = sp.diff(u_expr, rr, 2) + 2 / rr * sp.diff(u_expr, rr)
# manufacture() gives the memory term; the source adds the time derivative and the Laplacian
memory, _ = manufacture(kernel, truth, 3, 1.0)
source = SpaceTimeField(grid, tgrid, sample(sp.diff(u_expr, t) - lap).values - memory.values)
problem = ForwardProblem(
    3, grid, tgrid, truth.values[0], kernel=kernel, source=source,
    boundary=boundary_data_from(truth, ("D", "D")), scheme="crank_nicolson",
)
print(f"with memory: max error {np.max(np.abs(solve_forward(problem).values - truth.values)):.2e}")
