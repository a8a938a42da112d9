"""Fixed-point sweeps of the reduced system for the outer trace h(t) and the slope q(t, r)."""

import numpy as np

from memkernel import ReductionState, TimeGrid, picard_update, source_profiles

import shell_problem

data = shell_problem.build(2)
tgrid = TimeGrid(0.2, 8)
sources = source_profiles(data, tgrid)
state = ReductionState.from_data(data, tgrid, sources.h0, sources.q0)
exact_h = shell_problem.kernel_true(tgrid.nodes, 2.0)

for sweep in range(1, 5):
    h, q = picard_update(state, data, sources)
    step = np.max(np.abs(h - state.h)) + np.max(np.abs(q - state.q))
    state = state.with_hq(h, q)
    print(f"sweep {sweep}: update size {step:.3e}, |h - k(t, 2)| = {np.max(np.abs(h - exact_h)):.3e}")
