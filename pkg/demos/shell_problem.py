"""A closed-form 2D shell problem shared by the kernel-initialisation and reduction demos.

The state is ``u = U0 + t U1`` and the kernel ``k(t, r) = exp(-t) kappa(r)``,
so the memory convolution has an elementary closed form and the source ``f``
is exact. Measurements are computed with a fine angular rule and Gauss
quadrature in ``r``, independent of the solver grid.
"""

import numpy as np
import sympy as sp
from scipy.special import roots_legendre

from memkernel import AngularGrid, CoefficientSpec, MeasurementSpec, ProblemData, RadialGrid, ShellGrid

x1, x2, t = sp.symbols("x1 x2 t", real=True)
rho = sp.sqrt(x1**2 + x2**2)
R1, R2 = 1.0, 2.0

KAPPA = 1 + rho / 2
U0 = 1 + x1 / 2 + x2**2 / 4 + x1 * x2 / 5
U1 = sp.Rational(1, 2) + x2**2 / 3 + x1 / 4
LAM = 1 + x2 / 3
PSI = (rho - R1) * (R2 - rho) * (1 + x1 / (2 * rho))


def _laplacian(w):
    return sp.diff(w, x1, 2) + sp.diff(w, x2, 2)


def _radial_derivative(w):
    return (x1 * sp.diff(w, x1) + x2 * sp.diff(w, x2)) / rho


def _at_points(expr, with_time=False):
    args = ([t] if with_time else []) + [x1, x2]
    fn = sp.lambdify(args, expr, "numpy")
    if with_time:
        return lambda tt, x: np.broadcast_to(fn(tt, x[..., 0], x[..., 1]), x.shape[:-1]).astype(float)
    return lambda x: np.broadcast_to(fn(x[..., 0], x[..., 1]), x.shape[:-1]).astype(float)


def kernel_true(time, r):
    return np.exp(-time) * (1 + np.asarray(r) / 2)


def build(level: int) -> ProblemData:
    """Problem on a shell with ``8 level`` radial intervals and ``16 level`` angles."""
    u = U0 + t * U1
    dkappa = sp.Rational(1, 2)
    # int_0^t exp(-(t-s)) s^m ds for m = 0, 1
    w0, w1 = 1 - sp.exp(-t), t - 1 + sp.exp(-t)
    memory = sum(w * (KAPPA * _laplacian(um) + dkappa * _radial_derivative(um)) for w, um in ((w0, U0), (w1, U1)))
    f = sp.diff(u, t) - _laplacian(u) - memory

    u_fn = _at_points(u, with_time=True)
    lam_fn, psi_fn = _at_points(LAM), _at_points(PSI)
    fine = AngularGrid(2, 256)
    dirs, wts = fine.directions, fine.weights
    lam_dirs = lam_fn(dirs)
    nodes, weights = roots_legendre(40)
    rq = 0.5 * (R2 - R1) * (nodes + 1) + R1
    rw = 0.5 * (R2 - R1) * weights

    def g1(time, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        pts = r[:, None, None] * dirs[None]
        return np.sum(u_fn(time, pts) * lam_dirs * wts, axis=1)

    def g2(time):
        pts = rq[:, None, None] * dirs[None]
        radial = np.sum(u_fn(time, pts) * psi_fn(pts) * wts, axis=1)
        return float(np.sum(rw * rq * radial))

    shell = ShellGrid(RadialGrid.with_intervals(R1, R2, 8 * level), AngularGrid(2, 16 * level))
    return ProblemData(
        shell=shell,
        coefficients=CoefficientSpec(2),
        measurement=MeasurementSpec(lam=lam_fn, psi=psi_fn),
        u0=_at_points(U0),
        u1=u_fn,
        f=_at_points(f, with_time=True),
        g1=g1,
        g2=g2,
    )
