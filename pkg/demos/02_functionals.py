"""The angular weight Phi, the volume weight Psi and the exponential identity they feed."""

import numpy as np

from memkernel import AngularGrid, MeasurementSpec, RadialGrid, ShellGrid, U0Data, j_quantities, phi_apply, psi_apply

shell = ShellGrid(RadialGrid.with_intervals(1.0, 2.0, 64), AngularGrid(2, 64))
x = shell.points
r = np.linalg.norm(x, axis=-1)

meas = MeasurementSpec(
    lam=lambda d: 1 + 0.3 * d[..., 1],
    psi=lambda p: (np.linalg.norm(p, axis=-1) - 1) * (2 - np.linalg.norm(p, axis=-1)) * (1 + p[..., 0] / 4),
)

field = r**2 * (1 + x[..., 1])
# the angular mean of x2 against 1 + 0.3 x2/r picks up 0.3 pi r, so Phi[field] = 2 pi r^2 + 0.3 pi r^3
print("Phi[r^2 (1 + x2)] error:", np.max(np.abs(phi_apply(meas, field, shell) - (2 * np.pi * r[:, 0] ** 2 + 0.3 * np.pi * r[:, 0] ** 3))))
print("Psi[1] =", float(psi_apply(meas, np.ones(shell.shape), shell)))

# With Phi[C u0] = Phi[B u0] = 1 the growth factor is exp(2 - r) and 1 + L[1] reproduces it.
grid = RadialGrid(1.0, 2.0, 201)
unit = U0Data(np.ones(201), np.ones(201), grid, rule="simpson")
print("growth vs exp(2 - r):", np.max(np.abs(unit.growth - np.exp(2 - grid.nodes))))
print("1 + L[1] vs growth:", np.max(np.abs(1 + unit.l_apply(np.ones(201)) - unit.growth)))

bu0, cu0 = 1 + x[..., 0] + r, 2 + r
jq = j_quantities(bu0, cu0, meas, shell)
print(f"J1 = Psi[J(u0)] = {jq.j1:.6f}  (must stay away from zero)")
print("Phi[J(u0)] vanishes:", np.max(np.abs(phi_apply(meas, jq.j_field, shell))))
