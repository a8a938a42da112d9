"""Grids, composite quadrature, cumulative integrals and finite differences.

Every array handled here keeps the sampled coordinate on one axis (the last one
by default), so the same helpers work on radial profiles, space-time matrices
indexed ``(time, radius)`` and shell fields indexed ``(radius, phi, theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate as _spi
from scipy.special import roots_legendre

from .errors import ConfigurationError, ShapeError

__all__ = [
    "RadialGrid",
    "TimeGrid",
    "AngularGrid",
    "ShellGrid",
    "integrate",
    "cumulative_from_left",
    "cumulative_from_right",
    "quadrature_weights",
    "cumulative_matrix",
    "convolve_time",
    "derivative_r",
    "second_derivative_r",
    "derivative_uniform",
    "derivative_periodic",
    "derivative_nonuniform",
]


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid on ``[r_min, r_max]`` including both endpoints."""

    r_min: float
    r_max: float
    n_nodes: int

    def __post_init__(self):
        if not (self.r_min > 0):
            raise ConfigurationError(f"r_min must be positive, got {self.r_min}")
        if not (self.r_max > self.r_min):
            raise ConfigurationError(
                f"r_max must exceed r_min, got [{self.r_min}, {self.r_max}]"
            )
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise ConfigurationError(f"need at least 3 radial nodes, got {self.n_nodes}")

    @classmethod
    def with_intervals(cls, r_min: float, r_max: float, n_intervals: int) -> "RadialGrid":
        return cls(float(r_min), float(r_max), int(n_intervals) + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.n_nodes)

    @property
    def spacing(self) -> float:
        return (self.r_max - self.r_min) / (self.n_nodes - 1)

    @property
    def length(self) -> float:
        return self.r_max - self.r_min

    @property
    def default_rule(self) -> str:
        return "simpson" if self.n_nodes % 2 == 1 else "trapezoid"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[0, t_max]`` with ``n_steps`` intervals."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (self.t_max > 0):
            raise ConfigurationError(f"t_max must be positive, got {self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError(f"need at least one time step, got {self.n_steps}")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def step(self) -> float:
        return self.t_max / self.n_steps

    # Lets the radial helpers treat a time grid as a 1-D uniform grid.
    @property
    def spacing(self) -> float:
        return self.step

    @property
    def default_rule(self) -> str:
        return "simpson" if self.n_nodes % 2 == 1 else "trapezoid"


@dataclass(frozen=True)
class AngularGrid:
    """Angular nodes on the unit circle (2D) or unit sphere (3D).

    ``phi`` is equispaced and periodic. In 3D the polar nodes are
    Gauss-Legendre nodes in ``cos(theta)``, so the stored ``theta_weights``
    integrate ``g(theta) sin(theta) dtheta`` exactly for polynomials of degree
    up to ``2 n_theta - 1`` in ``cos(theta)``.
    """

    dimension: int
    n_phi: int
    n_theta: int = 1

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.n_phi < 3:
            raise ConfigurationError(f"need at least 3 azimuthal nodes, got {self.n_phi}")
        if self.dimension == 3 and self.n_theta < 3:
            raise ConfigurationError(f"need at least 3 polar nodes, got {self.n_theta}")

    @cached_property
    def phi(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def phi_step(self) -> float:
        return 2.0 * np.pi / self.n_phi

    @cached_property
    def _legendre(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = roots_legendre(self.n_theta)
        # Descending cos(theta) gives ascending theta.
        return x[::-1].copy(), w[::-1].copy()

    @property
    def cos_theta(self) -> np.ndarray:
        return self._legendre[0]

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arccos(self.cos_theta)

    @property
    def theta_weights(self) -> np.ndarray:
        """Weights for ``int_0^pi g(theta) sin(theta) dtheta``."""
        return self._legendre[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_phi,) if self.dimension == 2 else (self.n_phi, self.n_theta)

    @cached_property
    def weights(self) -> np.ndarray:
        """Surface-measure weights on the unit circle or sphere, shaped like ``shape``."""
        if self.dimension == 2:
            return np.full(self.n_phi, self.phi_step)
        return self.phi_step * np.broadcast_to(self.theta_weights, self.shape).copy()

    @cached_property
    def directions(self) -> np.ndarray:
        """Unit vectors ``x'`` at the angular nodes, shape ``shape + (dimension,)``."""
        if self.dimension == 2:
            return np.stack([np.cos(self.phi), np.sin(self.phi)], axis=-1)
        ph = self.phi[:, None]
        st = np.sin(self.theta)[None, :]
        ct = self.cos_theta[None, :]
        return np.stack(
            np.broadcast_arrays(np.cos(ph) * st, np.sin(ph) * st, ct), axis=-1
        )

    @property
    def total_measure(self) -> float:
        return 2.0 * np.pi if self.dimension == 2 else 4.0 * np.pi


@dataclass(frozen=True)
class ShellGrid:
    """Product of a radial grid and an angular grid: the annulus or spherical shell."""

    radial: RadialGrid
    angular: AngularGrid

    @property
    def dimension(self) -> int:
        return self.angular.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.radial.n_nodes,) + self.angular.shape

    def _expand_r(self) -> np.ndarray:
        return self.radial.nodes.reshape((-1,) + (1,) * len(self.angular.shape))

    @cached_property
    def r(self) -> np.ndarray:
        return np.broadcast_to(self._expand_r(), self.shape)

    @cached_property
    def phi(self) -> np.ndarray:
        ph = self.angular.phi if self.dimension == 2 else self.angular.phi[:, None]
        return np.broadcast_to(ph, self.shape)

    @cached_property
    def theta(self) -> np.ndarray:
        if self.dimension == 2:
            return np.full(self.shape, 0.5 * np.pi)
        return np.broadcast_to(self.angular.theta, self.shape)

    @cached_property
    def points(self) -> np.ndarray:
        """Cartesian coordinates, shape ``shape + (dimension,)``."""
        return self._expand_r()[..., None] * self.angular.directions[None]

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(x)`` (x with a trailing coordinate axis) on the grid."""
        return np.broadcast_to(np.asarray(fn(self.points), dtype=float), self.shape).copy()

    @property
    def volume(self) -> float:
        r1, r2 = self.radial.r_min, self.radial.r_max
        if self.dimension == 2:
            return np.pi * (r2**2 - r1**2)
        return 4.0 * np.pi * (r2**3 - r1**3) / 3.0


def _check_axis_length(samples: np.ndarray, n: int, axis: int, what: str) -> None:
    if samples.ndim == 0 or samples.shape[axis] != n:
        raise ShapeError(f"{what}: expected {n} samples along axis {axis}, got shape {samples.shape}")


def _uniform_integral(samples: np.ndarray, n: int, h: float, rule: str, axis: int):
    _check_axis_length(samples, n, axis, "integrate")
    if rule == "trapezoid":
        return _spi.trapezoid(samples, dx=h, axis=axis)
    if rule == "simpson":
        if n % 2 == 0:
            raise ConfigurationError(f"Simpson rule needs an odd node count, got {n}")
        return _spi.simpson(samples, dx=h, axis=axis)
    raise ConfigurationError(f"unknown rule {rule!r} for a uniform grid")


def integrate(samples, grid, rule: str | None = None, axis: int = -1):
    """Composite quadrature of ``samples`` over ``grid``.

    Radial and time grids accept ``trapezoid`` or ``simpson`` (the default is
    Simpson for an odd node count). Angular grids use the ``gauss`` rule: the
    trailing axes must match ``grid.shape`` and the result is the integral
    against surface measure. A 1-D array of length ``n_theta`` on a 3D grid is
    integrated against ``sin(theta) dtheta`` only.
    """
    samples = np.asarray(samples, dtype=float)
    if isinstance(grid, (RadialGrid, TimeGrid)):
        rule = rule or grid.default_rule
        return _uniform_integral(samples, grid.n_nodes, grid.spacing, rule, axis)
    if isinstance(grid, AngularGrid):
        if rule not in (None, "gauss"):
            raise ConfigurationError(f"angular grids only support the gauss rule, got {rule!r}")
        if grid.dimension == 3 and samples.ndim == 1 and samples.shape[0] == grid.n_theta:
            return float(samples @ grid.theta_weights)
        k = len(grid.shape)
        if samples.shape[samples.ndim - k:] != grid.shape:
            raise ShapeError(f"angular samples must end with shape {grid.shape}, got {samples.shape}")
        axes = tuple(range(samples.ndim - k, samples.ndim))
        return np.sum(samples * grid.weights, axis=axes)
    raise ConfigurationError(f"cannot integrate over {type(grid).__name__}")


def cumulative_from_left(samples, grid, rule: str = "trapezoid", axis: int = -1) -> np.ndarray:
    """``F(r) = int_{r_min}^r samples``, with ``F(r_min) = 0``.

    ``rule="simpson"`` switches to the cumulative Simpson rule for
    higher-accuracy checks; the default trapezoid keeps exact additivity with
    :func:`cumulative_from_right`.
    """
    samples = np.asarray(samples, dtype=float)
    _check_axis_length(samples, grid.n_nodes, axis, "cumulative integral")
    h = grid.spacing
    if rule == "trapezoid":
        return _spi.cumulative_trapezoid(samples, dx=h, axis=axis, initial=0.0)
    if rule == "simpson":
        return _spi.cumulative_simpson(samples, dx=h, axis=axis, initial=0.0)
    raise ConfigurationError(f"unknown cumulative rule {rule!r}")


def cumulative_from_right(samples, grid, rule: str = "trapezoid", axis: int = -1) -> np.ndarray:
    """``F(r) = int_r^{r_max} samples``, with ``F(r_max) = 0``."""
    samples = np.asarray(samples, dtype=float)
    flipped = np.flip(samples, axis=axis)
    return np.flip(cumulative_from_left(flipped, grid, rule=rule, axis=axis), axis=axis)


def quadrature_weights(grid, rule: str | None = None) -> np.ndarray:
    """Node weights ``w`` with ``integrate(f, grid, rule) == w @ f`` on a radial or time grid."""
    rule = rule or grid.default_rule
    n, h = grid.n_nodes, grid.spacing
    if rule == "trapezoid":
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return w
    if rule == "simpson":
        if n % 2 == 0:
            raise ConfigurationError(f"Simpson rule needs an odd node count, got {n}")
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * h / 3.0
    raise ConfigurationError(f"unknown rule {rule!r}")


def cumulative_matrix(grid) -> np.ndarray:
    """Lower-triangular ``C`` with ``C @ f == cumulative_from_left(f, grid)`` (trapezoid)."""
    n, h = grid.n_nodes, grid.spacing
    c = np.tril(np.full((n, n), h))
    c[:, 0] = 0.5 * h
    c[np.diag_indices(n)] = 0.5 * h
    c[0, 0] = 0.0
    return c


def convolve_time(kernel, signal, tgrid: "TimeGrid") -> np.ndarray:
    """``int_0^t kernel(t - s) signal(s) ds`` at every time node by trapezoid product integration.

    Time is axis 0 of both arrays; the remaining axes broadcast. The value at
    ``t = 0`` is exactly zero.
    """
    kernel = np.asarray(kernel, dtype=float)
    signal = np.asarray(signal, dtype=float)
    n = tgrid.n_nodes
    if kernel.shape[0] != n or signal.shape[0] != n:
        raise ShapeError(f"time axis must have {n} nodes")
    out = np.zeros((n,) + np.broadcast_shapes(kernel.shape[1:], signal.shape[1:]))
    w = np.full(n, tgrid.step)
    for i in range(1, n):
        wi = w[: i + 1].copy()
        wi[0] = wi[-1] = 0.5 * tgrid.step
        out[i] = np.tensordot(wi, kernel[i::-1] * signal[: i + 1], axes=(0, 0))
    return out


def derivative_uniform(samples, spacing: float, axis: int = -1) -> np.ndarray:
    """Second-order central differences with second-order one-sided ends."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[axis] < 3:
        raise ShapeError(f"finite differences need at least 3 nodes, got {samples.shape[axis]}")
    return np.gradient(samples, spacing, axis=axis, edge_order=2)


def derivative_r(samples, grid, axis: int = -1) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    _check_axis_length(samples, grid.n_nodes, axis, "derivative")
    return derivative_uniform(samples, grid.spacing, axis=axis)


def second_derivative_r(samples, grid, axis: int = -1) -> np.ndarray:
    """Three-point second difference inside, four-point one-sided at the ends."""
    samples = np.asarray(samples, dtype=float)
    _check_axis_length(samples, grid.n_nodes, axis, "second derivative")
    if grid.n_nodes < 4:
        raise ShapeError("second derivative needs at least 4 nodes")
    f = np.moveaxis(samples, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
    out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    return np.moveaxis(out / grid.spacing**2, 0, axis)


def derivative_periodic(samples, spacing: float, axis: int = -1) -> np.ndarray:
    """Central difference on a periodic uniform grid."""
    samples = np.asarray(samples, dtype=float)
    return (np.roll(samples, -1, axis=axis) - np.roll(samples, 1, axis=axis)) / (2.0 * spacing)


def derivative_nonuniform(samples, coords: np.ndarray, axis: int = -1) -> np.ndarray:
    """Second-order differences on arbitrary sorted nodes (one-sided at the ends)."""
    samples = np.asarray(samples, dtype=float)
    return np.gradient(samples, coords, axis=axis, edge_order=2)
