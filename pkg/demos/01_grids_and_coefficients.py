"""Grids, quadrature and admissible coefficient tensors on a shell 1 < |x| < 2."""

import numpy as np

from memkernel import AngularGrid, CoefficientSpec, RadialGrid, ShellGrid, conormal_vector, radial_trace
from memkernel.coefficients import build_coefficients, ellipticity_margin, trace_profile

shell = ShellGrid(RadialGrid.with_intervals(1.0, 2.0, 32), AngularGrid(3, 32, 16))
print(f"3D shell grid {shell.shape}: volume {shell.volume:.10f} vs exact {4 * np.pi * 7 / 3:.10f}")

# a I + (c - b)(I - xx/r^2) + d xx/r^2 with a, b, d radial and c a point field
spec = CoefficientSpec(
    3,
    a=lambda r: 2 + r / 4,
    b=lambda r: r / 10,
    d=lambda r: np.cos(r) / 5,
    c=0.3,
)
x = shell.points[::8, ::8, ::4]
tensor = build_coefficients(spec, x)
r = np.linalg.norm(x, axis=-1)
print("symmetric:", np.allclose(tensor, np.swapaxes(tensor, -1, -2)))
print("x.A.x / |x|^2 equals a + d:", np.allclose(radial_trace(tensor, x), trace_profile(spec, r)))

radii = np.linspace(1.0, 2.0, 201)
print(f"smallest ellipticity margin on [1, 2]: {ellipticity_margin(spec, radii).min():.4f}")
print(f"conormal factor on the inner shell {conormal_vector(spec, 'inner', 1.0):+.4f}, "
      f"outer shell {conormal_vector(spec, 'outer', 2.0):+.4f}")
