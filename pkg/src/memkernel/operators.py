"""Finite-difference calculus on shell fields.

A shell field has trailing axes ``(radius, phi[, theta])`` matching a
:class:`~memkernel.grid.ShellGrid`; any leading axes (for instance time) are
carried along untouched.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .grid import ShellGrid, derivative_nonuniform, derivative_periodic, derivative_uniform
from .coefficients import spherical_frame


def _axes(shell: ShellGrid, field: np.ndarray) -> tuple[int, ...]:
    k = len(shell.shape)
    if field.shape[field.ndim - k:] != shell.shape:
        raise ShapeError(f"field shape {field.shape} does not end with grid shape {shell.shape}")
    return tuple(range(field.ndim - k, field.ndim))


def d_r(field, shell: ShellGrid) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    return derivative_uniform(field, shell.radial.spacing, axis=_axes(shell, field)[0])


def d_phi(field, shell: ShellGrid) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    return derivative_periodic(field, shell.angular.phi_step, axis=_axes(shell, field)[1])


def d_theta(field, shell: ShellGrid) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if shell.dimension == 2:
        return np.zeros_like(field)
    return derivative_nonuniform(field, shell.angular.theta, axis=_axes(shell, field)[2])


def frame(shell: ShellGrid) -> np.ndarray:
    """Spherical frame at the grid nodes, shape ``(dim, *shell.shape, dim)``."""
    if shell.dimension == 2:
        fr = spherical_frame(shell.phi)
    else:
        fr = spherical_frame(shell.phi, shell.theta)
    return fr


def gradient(field, shell: ShellGrid) -> np.ndarray:
    """Cartesian gradient, shape ``field.shape + (dim,)``."""
    field = np.asarray(field, dtype=float)
    fr = frame(shell)
    r = shell.r
    comps = [d_r(field, shell), d_phi(field, shell) / r]
    if shell.dimension == 3:
        comps[1] = comps[1] / np.sin(shell.theta)
        comps.append(d_theta(field, shell) / r)
    return sum(c[..., None] * e for c, e in zip(comps, fr))


def divergence(vector, shell: ShellGrid) -> np.ndarray:
    """Divergence of a Cartesian vector field (components on the last axis)."""
    vector = np.asarray(vector, dtype=float)
    fr = frame(shell)
    r = shell.r
    f_r = np.sum(vector * fr[0], axis=-1)
    f_phi = np.sum(vector * fr[1], axis=-1)
    if shell.dimension == 2:
        return d_r(f_r, shell) + f_r / r + d_phi(f_phi, shell) / r
    theta = shell.theta
    f_theta = np.sum(vector * fr[2], axis=-1)
    return (
        d_r(f_r, shell)
        + 2.0 * f_r / r
        + d_phi(f_phi, shell) / (r * np.sin(theta))
        + (d_theta(f_theta, shell) + f_theta / np.tan(theta)) / r
    )


def apply_divergence_form(tensor: np.ndarray, field, shell: ShellGrid) -> np.ndarray:
    """``div(T grad w)`` with ``T`` sampled on the grid (shape ``shell.shape + (dim, dim)``)."""
    flux = np.einsum("...jk,...k->...j", tensor, gradient(field, shell))
    return divergence(flux, shell)


def apply_first_order(vector: np.ndarray, field, shell: ShellGrid) -> np.ndarray:
    """``c . grad w`` with ``c`` sampled on the grid (shape ``shell.shape + (dim,)``)."""
    return np.sum(vector * gradient(field, shell), axis=-1)
