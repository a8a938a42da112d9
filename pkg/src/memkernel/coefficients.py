"""Admissible diffusion tensors and their spherical-coordinate representation.

Two constructive families satisfy the radial-trace property
``sum_jk x_j x_k a_jk(x) = |x|^2 h(|x|)``:

* ``radial_abcd``: ``a(r) I + (c(x) - b(r)) (I - xx^T/|x|^2) + d(r) xx^T/|x|^2``,
  whose trace profile is ``h = a + d``;
* ``polynomial_series``: finite sums ``sum_n d_n(x) P_n(x)`` of positive
  semi-definite monomial tensors annihilating ``x`` (3D only);

and ``sum`` adds the two. A ``custom`` tensor callable is accepted only with
``unchecked=True``.

Radial profiles may be constants, callables of ``r`` or samples on a
:class:`~memkernel.grid.RadialGrid` (interpolated with a cubic spline).
Fields such as ``c`` and the series weights are constants or callables of the
Cartesian point ``x`` (coordinates on the last axis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AdmissibilityError, ConfigurationError, UnsupportedFamilyError
from .grid import RadialGrid, ShellGrid

Profile = Union[float, Callable[[np.ndarray], np.ndarray], np.ndarray]
PointField = Union[float, Callable[[np.ndarray], np.ndarray]]

FAMILIES = ("radial_abcd", "polynomial_series", "sum", "custom")

__all__ = [
    "CoefficientSpec",
    "SphericalRep",
    "build_coefficients",
    "b_coefficients",
    "c_coefficients",
    "radial_trace",
    "trace_profile",
    "quadratic_form",
    "ellipticity_margin",
    "ellipticity_bounds",
    "spherical_rep",
    "conormal_vector",
    "polynomial_term",
]


@dataclass(frozen=True)
class CoefficientSpec:
    """Description of the operators ``A``, ``B`` and ``C``.

    ``b_tensor`` defaults to the identity (``B`` is the Laplacian) and
    ``c_vector`` to the outward radial unit vector (``C`` is the radial
    derivative).
    """

    dimension: int
    family: str = "radial_abcd"
    a: Profile = 1.0
    b: Profile = 0.0
    d: Profile = 0.0
    c: PointField = 0.0
    series_weights: tuple = ()
    profile_grid: RadialGrid | None = None
    tensor: Callable[[np.ndarray], np.ndarray] | None = None
    unchecked: bool = False
    b_tensor: Callable[[np.ndarray], np.ndarray] | float | None = None
    c_vector: Callable[[np.ndarray], np.ndarray] | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown coefficient family {self.family!r}")
        if self.family in ("polynomial_series", "sum") and self.dimension != 3:
            raise UnsupportedFamilyError("the polynomial series family is defined in 3D only")
        if self.family == "custom":
            if self.tensor is None:
                raise ConfigurationError("custom family needs a tensor callable")
            if not self.unchecked:
                raise AdmissibilityError(
                    "custom tensors bypass the radial-trace construction; pass unchecked=True"
                )

    # -- radial profiles -------------------------------------------------
    def profile(self, name: str) -> Callable[[np.ndarray], np.ndarray]:
        if name not in self._cache:
            self._cache[name] = _as_radial_function(getattr(self, name), self.profile_grid, name)
        return self._cache[name]

    def has_base(self) -> bool:
        return self.family in ("radial_abcd", "sum")


def _as_radial_function(p: Profile, grid: RadialGrid | None, name: str):
    if callable(p):
        return lambda r: np.asarray(p(np.asarray(r, dtype=float)), dtype=float) + 0.0 * np.asarray(r)
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        value = float(arr)
        return lambda r: np.full(np.shape(r), value)
    if grid is None or arr.shape != (grid.n_nodes,):
        raise ConfigurationError(f"sampled profile {name!r} needs a matching profile_grid")
    spline = CubicSpline(grid.nodes, arr)
    return lambda r: spline(np.asarray(r, dtype=float))


def _eval_point_field(fld: PointField, x: np.ndarray) -> np.ndarray:
    shape = x.shape[:-1]
    if callable(fld):
        return np.broadcast_to(np.asarray(fld(x), dtype=float), shape)
    return np.full(shape, float(fld))


def _radius(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1))


def polynomial_term(x: np.ndarray, n: int) -> np.ndarray:
    """Monomial tensor of order ``n`` (3D), shape ``x.shape[:-1] + (3, 3)``.

    Diagonal entries are ``2 x_j^{2n-2} x_k^{2n} x_m^{2n}``, off-diagonal ones
    ``-x_j^{2n-1} x_k^{2n-1} x_m^{2n}`` with ``m`` the remaining index, so that
    the quadratic form is a sum of squares and the tensor annihilates ``x``.
    """
    if n < 1:
        raise ConfigurationError("series terms start at n = 1")
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    common = (x1 * x2 * x3) ** (2 * n - 2)
    out = np.empty(x.shape[:-1] + (3, 3))
    sq = x * x
    out[..., 0, 0] = 2.0 * sq[..., 1] * sq[..., 2]
    out[..., 1, 1] = 2.0 * sq[..., 0] * sq[..., 2]
    out[..., 2, 2] = 2.0 * sq[..., 0] * sq[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = -x1 * x2 * sq[..., 2]
    out[..., 0, 2] = out[..., 2, 0] = -x1 * x3 * sq[..., 1]
    out[..., 1, 2] = out[..., 2, 1] = -x2 * x3 * sq[..., 0]
    return out * common[..., None, None]


def ellipticity_margin(spec: CoefficientSpec, r) -> np.ndarray:
    """Nodewise ``a - b^+ - d^-`` (zero when the family has no radial base)."""
    r = np.asarray(r, dtype=float)
    if not spec.has_base():
        return np.zeros_like(r)
    a, b, d = (spec.profile(k)(r) for k in "abd")
    return a - np.maximum(b, 0.0) - np.maximum(-d, 0.0)


def _check_admissible(spec: CoefficientSpec, x: np.ndarray) -> None:
    if spec.family == "custom" or not spec.has_base():
        return
    radii = np.unique(np.round(_radius(x).ravel(), 14))
    margin = ellipticity_margin(spec, radii)
    bad = np.flatnonzero(~(margin > 0))
    if bad.size:
        raise AdmissibilityError(
            f"a - b+ - d- = {margin[bad[0]]:.6g} <= 0 at radius r = {radii[bad[0]]:.6g}"
        )
    cvals = _eval_point_field(spec.c, x)
    if np.any(cvals < 0):
        idx = np.unravel_index(np.argmin(cvals), cvals.shape)
        raise AdmissibilityError(f"c must be non-negative; c = {cvals[idx]:.6g} at x = {x[idx]}")


def _points(where) -> np.ndarray:
    if isinstance(where, ShellGrid):
        return where.points
    return np.asarray(where, dtype=float)


def build_coefficients(spec: CoefficientSpec, where, check: bool = True) -> np.ndarray:
    """Tensor samples ``a_jk(x)``, shape ``x.shape[:-1] + (dim, dim)``.

    ``where`` is either a :class:`ShellGrid` or an array of Cartesian points.
    """
    x = _points(where)
    dim = spec.dimension
    if x.shape[-1] != dim:
        raise ConfigurationError(f"points must have {dim} coordinates, got {x.shape[-1]}")
    if check:
        _check_admissible(spec, x)
        for n, wn in enumerate(spec.series_weights, start=1):
            if np.any(_eval_point_field(wn, x) < 0):
                raise AdmissibilityError(f"series weight d_{n} must be non-negative")
    if spec.family == "custom":
        out = np.asarray(spec.tensor(x), dtype=float)
        return np.broadcast_to(out, x.shape[:-1] + (dim, dim)).copy()

    out = np.zeros(x.shape[:-1] + (dim, dim))
    if spec.has_base():
        r = _radius(x)
        xhat = x / r[..., None]
        outer = xhat[..., :, None] * xhat[..., None, :]
        eye = np.eye(dim)
        a, b, d = (spec.profile(k)(r)[..., None, None] for k in "abd")
        c = _eval_point_field(spec.c, x)[..., None, None]
        out += a * eye + (c - b) * (eye - outer) + d * outer
    if spec.family in ("polynomial_series", "sum"):
        for n, wn in enumerate(spec.series_weights, start=1):
            out += _eval_point_field(wn, x)[..., None, None] * polynomial_term(x, n)
    return out


def b_coefficients(spec: CoefficientSpec, where) -> np.ndarray:
    x = _points(where)
    dim = spec.dimension
    shape = x.shape[:-1] + (dim, dim)
    if spec.b_tensor is None:
        return np.broadcast_to(np.eye(dim), shape).copy()
    if callable(spec.b_tensor):
        return np.broadcast_to(np.asarray(spec.b_tensor(x), dtype=float), shape).copy()
    return float(spec.b_tensor) * np.broadcast_to(np.eye(dim), shape).copy()


def c_coefficients(spec: CoefficientSpec, where) -> np.ndarray:
    x = _points(where)
    if spec.c_vector is None:
        return x / _radius(x)[..., None]
    return np.broadcast_to(np.asarray(spec.c_vector(x), dtype=float), x.shape).copy()


def radial_trace(coeffs, points) -> np.ndarray:
    """``sum_jk x_j x_k a_jk(x) / |x|^2`` at the given points.

    ``coeffs`` is either a :class:`CoefficientSpec` or tensor samples matching
    ``points``.
    """
    x = np.asarray(points, dtype=float)
    tensor = build_coefficients(coeffs, x, check=False) if isinstance(coeffs, CoefficientSpec) else coeffs
    return np.einsum("...j,...jk,...k->...", x, tensor, x) / np.sum(x * x, axis=-1)


def trace_profile(spec: CoefficientSpec, r) -> np.ndarray:
    """The radial function ``h(r)`` of the trace property.

    Closed form ``a + d`` for the constructive families; evaluated along the
    first coordinate axis for unchecked custom tensors.
    """
    r = np.asarray(r, dtype=float)
    if spec.family == "custom":
        x = np.zeros(r.shape + (spec.dimension,))
        x[..., 0] = r
        return radial_trace(spec, x)
    if spec.family == "polynomial_series":
        return np.zeros_like(r)
    return spec.profile("a")(r) + spec.profile("d")(r)


def quadratic_form(tensor: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return np.einsum("...j,...jk,...k->...", xi, tensor, xi)


def ellipticity_bounds(spec: CoefficientSpec, points, directions, require_positive: bool = True):
    """Min and max of ``xi^T A(x) xi`` over paired samples of points and unit directions."""
    x = np.asarray(points, dtype=float)
    xi = np.asarray(directions, dtype=float)
    if x.size == 0 or xi.size == 0:
        raise ConfigurationError("ellipticity bounds need a nonempty sample")
    xi = xi / np.linalg.norm(xi, axis=-1, keepdims=True)
    values = quadratic_form(build_coefficients(spec, x, check=False), xi)
    lower, upper = float(np.min(values)), float(np.max(values))
    if require_positive and not lower > 0:
        idx = np.unravel_index(np.argmin(values), values.shape)
        raise AdmissibilityError(
            f"quadratic form {lower:.6g} <= 0 at x = {x[idx]} along xi = {xi[idx]}"
        )
    return lower, upper


@dataclass(frozen=True)
class SphericalRep:
    """Tensor rows projected on the spherical frame.

    Index ``j`` of each array runs over the frame ``(e_r, e_phi, e_theta)``
    (``(e_r, e_phi)`` in 2D): ``f[j]``, ``g[j]``, ``h[j]`` are the first,
    second and third Cartesian components of ``A e_j``; ``k[j] = e_r . A e_j``
    and ``l[j] = (cos phi, sin phi, 0) . A e_j``. ``h`` and ``l`` are ``None``
    in 2D.
    """

    f: np.ndarray
    g: np.ndarray
    h: np.ndarray | None
    k: np.ndarray
    l: np.ndarray | None


def spherical_frame(phi, theta=None):
    """Cartesian components of ``e_r, e_phi[, e_theta]``; shape ``(dim_frame, ...,dim)``."""
    phi = np.asarray(phi, dtype=float)
    cp, sp = np.cos(phi), np.sin(phi)
    if theta is None:
        er = np.stack([cp, sp], axis=-1)
        ephi = np.stack([-sp, cp], axis=-1)
        return np.stack([er, ephi])
    theta = np.asarray(theta, dtype=float)
    cp, sp, ct, st = np.broadcast_arrays(cp, sp, np.cos(theta), np.sin(theta))
    zero = np.zeros_like(cp)
    er = np.stack([cp * st, sp * st, ct], axis=-1)
    ephi = np.stack([-sp, cp, zero], axis=-1)
    eth = np.stack([cp * ct, sp * ct, -st], axis=-1)
    return np.stack([er, ephi, eth])


def spherical_rep(spec_or_tensor, r, phi, theta=None) -> SphericalRep:
    """Spherical representation at points given in polar/spherical coordinates.

    ``spec_or_tensor`` may be a :class:`CoefficientSpec` or tensor samples
    already evaluated at those points.
    """
    r, phi = np.asarray(r, dtype=float), np.asarray(phi, dtype=float)
    frame = spherical_frame(phi, theta)
    dim = frame.shape[-1]
    shape = frame.shape[1:-1]
    r = np.broadcast_to(r, shape)
    x = r[..., None] * frame[0]
    if isinstance(spec_or_tensor, CoefficientSpec):
        tensor = build_coefficients(spec_or_tensor, x, check=False)
    else:
        tensor = np.broadcast_to(spec_or_tensor, shape + (dim, dim))
    cols = np.einsum("...jk,i...k->i...j", tensor, frame)  # cols[i] = A e_i
    f, g = cols[..., 0], cols[..., 1]
    k = np.einsum("i...j,...j->i...", cols, frame[0])
    if dim == 2:
        return SphericalRep(f=f, g=g, h=None, k=k, l=None)
    h = cols[..., 2]
    cp, sp = np.cos(phi), np.sin(phi)
    l = f * cp + g * sp
    return SphericalRep(f=f, g=g, h=h, k=k, l=l)


def conormal_vector(spec: CoefficientSpec, shell: str, r_shell: float) -> float:
    """Signed multiple of ``x/|x|`` giving the conormal ``A n`` on a shell.

    The conormal on ``|x| = r_shell`` is ``(-1)^l (a + d)(r_shell) x/|x|`` with
    ``l = 1`` on the inner shell and ``l = 2`` on the outer one; the sign
    carries the outward orientation.
    """
    if spec.family not in ("radial_abcd", "sum"):
        raise UnsupportedFamilyError(f"conormal reduction not available for family {spec.family!r}")
    if shell not in ("inner", "outer"):
        raise ConfigurationError(f"shell must be 'inner' or 'outer', got {shell!r}")
    sign = -1.0 if shell == "inner" else 1.0
    r = np.asarray(float(r_shell))
    return float(sign * (spec.profile("a")(r) + spec.profile("d")(r)))
