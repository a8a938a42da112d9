"""Fixed-point operators for the pair ``(h, q)`` on the shell.

With ``h(t) = k(t, R2)`` and ``q = D_r k`` the kernel is ``k = h - E q`` and the
identification problem becomes

    h = h0 + N3(v, h, q),        q = q0 + J2 N3(v, h, q) + N2(v, h, q),

where ``v = u - u1`` is the state and ``N1`` collects the memory convolutions.
This module evaluates those operators for a supplied state and performs
single substitution sweeps; solving the state equation for ``v`` is not
attempted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .functionals import JQuantities, e_apply, phi1_apply, phi_apply, psi1_apply, psi_apply
from .grid import TimeGrid, convolve_time
from .kernel_init import ProblemData, n1_source, n2_source

__all__ = [
    "ReductionState",
    "n1_eval",
    "SourceProfiles",
    "source_profiles",
    "picard_update",
    "initial_values_from_sources",
]


@dataclass(frozen=True)
class ReductionState:
    """State ``v`` and unknowns ``(h, q)`` on the time grid, with ``z0 = B D_t u1``, ``z1 = C D_t u1``."""

    tgrid: TimeGrid
    v: np.ndarray
    h: np.ndarray
    q: np.ndarray
    z0: np.ndarray
    z1: np.ndarray

    def __post_init__(self):
        n = self.tgrid.n_nodes
        for name in ("v", "h", "q", "z0", "z1"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape[0] != n:
                raise ShapeError(f"{name} has {arr.shape[0]} time slices, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if self.h.ndim != 1:
            raise ShapeError("h must be a time profile")
        if self.v.shape != self.z0.shape or self.v.shape != self.z1.shape:
            raise ShapeError("v, z0 and z1 must share a shape")

    @classmethod
    def from_data(cls, data: ProblemData, tgrid: TimeGrid, h, q, v=None) -> "ReductionState":
        """Build ``z0``, ``z1`` from ``D_t u1``.

        ``v`` defaults to ``v0`` at ``t = 0`` and zero afterwards, which is
        the exact state whenever ``u1`` is the solution itself.
        """
        du1 = np.stack([data.du1_field(t) for t in tgrid.nodes])
        z0 = data.apply_b(du1)
        z1 = data.apply_c(du1)
        if v is None:
            v = np.zeros_like(du1)
            v[0] = data.v0_field()
        return cls(tgrid=tgrid, v=np.asarray(v, dtype=float), h=h, q=q, z0=z0, z1=z1)

    def with_hq(self, h, q) -> "ReductionState":
        return ReductionState(self.tgrid, self.v, h, q, self.z0, self.z1)


def _radial_to_shell(profile: np.ndarray, n_angular_axes: int) -> np.ndarray:
    return profile[(...,) + (None,) * n_angular_axes]


def n1_eval(state: ReductionState, data: ProblemData) -> np.ndarray:
    """``N1 = -h * (Bv + z0) + K(Eq, Bv + z0) - K(q, Cv + z1)`` on the shell for every time node."""
    shell = data.shell
    n_ang = len(shell.angular.shape)
    bv = data.apply_b(state.v) + state.z0
    cv = data.apply_c(state.v) + state.z1
    eq = e_apply(state.q, shell.radial)
    kernel_b = _radial_to_shell(eq, n_ang) - state.h[(slice(None),) + (None,) * len(shell.shape)]
    return convolve_time(kernel_b, bv, state.tgrid) - convolve_time(_radial_to_shell(state.q, n_ang), cv, state.tgrid)


@dataclass(frozen=True)
class SourceProfiles:
    n1_0: np.ndarray
    n2_0: np.ndarray
    n3_0: np.ndarray
    n0: np.ndarray
    h0: np.ndarray
    q0: np.ndarray


def _psi_terms(data: ProblemData, jq: JQuantities, radial: np.ndarray) -> np.ndarray:
    """``Psi[p C u0] - Psi[E(p) B u0]`` for radial profiles ``p`` with leading axes."""
    shell = data.shell
    n_ang = len(shell.angular.shape)
    u0 = data.u0_field()
    cu0, bu0 = data.apply_c(u0), data.apply_b(u0)
    p = _radial_to_shell(radial, n_ang)
    ep = _radial_to_shell(e_apply(radial, shell.radial), n_ang)
    return psi_apply(data.measurement, p * cu0, shell) - psi_apply(data.measurement, ep * bu0, shell)


def source_profiles(data: ProblemData, tgrid: TimeGrid) -> SourceProfiles:
    """Data-only profiles ``N1^0, N2^0, N3^0 = J3 N1^0, N0, h0 = N0/J1, q0 = J2 h0 + N3^0``."""
    jq = data.j_quantities()
    n1 = np.stack([n1_source(data, t) for t in tgrid.nodes])
    n2 = np.array([n2_source(data, t) for t in tgrid.nodes])
    n3 = jq.j3(n1)
    n0 = n2 - _psi_terms(data, jq, n3)
    h0 = n0 / jq.j1
    q0 = jq.j2[None, :] * h0[:, None] + n3
    return SourceProfiles(n1_0=n1, n2_0=n2, n3_0=n3, n0=n0, h0=h0, q0=q0)


def _n2_n3(state: ReductionState, data: ProblemData, n1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shell, meas, spec = data.shell, data.measurement, data.coefficients
    jq = data.j_quantities()
    phi1_v = np.stack([phi1_apply(meas, spec, vt, shell) for vt in state.v])
    psi1_v = np.array([float(psi1_apply(meas, spec, vt, shell, bc=data.bc)) for vt in state.v])
    n2 = jq.j3(phi_apply(meas, n1, shell) - phi1_v)
    n3 = (psi_apply(meas, n1, shell) - _psi_terms(data, jq, n2) - psi1_v) / jq.j1
    return n2, n3


def picard_update(
    state: ReductionState, data: ProblemData, sources: SourceProfiles | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """One substitution sweep ``(h, q) -> (h0 + N3, q0 + J2 N3 + N2)``."""
    if sources is None:
        sources = source_profiles(data, state.tgrid)
    jq = data.j_quantities()
    n1 = n1_eval(state, data)
    n2, n3 = _n2_n3(state, data, n1)
    h_new = sources.h0 + n3
    q_new = sources.q0 + jq.j2[None, :] * n3[:, None] + n2
    return h_new, q_new


def initial_values_from_sources(data: ProblemData, sources: SourceProfiles) -> tuple[float, np.ndarray]:
    """``(h0(0) + J4, q0(0) + J2 J4 - J3 Phi1[v0])``: the starting values implied by the sweep at ``t = 0``."""
    shell, meas, spec = data.shell, data.measurement, data.coefficients
    jq = data.j_quantities()
    v0 = data.v0_field()
    j3_phi1 = jq.j3(phi1_apply(meas, spec, v0, shell))
    j4 = (float(_psi_terms(data, jq, j3_phi1)) - float(psi1_apply(meas, spec, v0, shell, bc=data.bc))) / jq.j1
    return float(sources.h0[0]) + j4, sources.q0[0] + jq.j2 * j4 - j3_phi1
