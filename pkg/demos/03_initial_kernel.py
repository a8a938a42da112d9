"""Recovering k(0, r) from the data at t = 0 and checking it against the known kernel."""

import numpy as np

from memkernel import compute_k0, initial_hq, validate_consistency
from memkernel.kernel_init import reconstruct_from_hq

import shell_problem

previous = None
for level in (1, 2, 4, 8):
    data = shell_problem.build(level)
    grid = data.shell.radial
    report = validate_consistency(data)
    worst = max(report.residuals.items(), key=lambda kv: kv[1])
    result = compute_k0(data)
    err = np.max(np.abs(result.k0 - shell_problem.kernel_true(0.0, grid.nodes)))
    ratio = f"  ratio {previous / err:.2f}" if previous else ""
    print(f"level {level}: largest consistency residual {worst[0]} = {worst[1]:.2e}; k0 error {err:.3e}{ratio}")
    previous = err

h0, q0 = initial_hq(result.k0, grid)
print(f"k0 at the outer shell h0 = {h0:.6f} (exact {shell_problem.kernel_true(0.0, 2.0):.6f})")
print("k0 rebuilt from (h0, q0):", np.max(np.abs(reconstruct_from_hq(h0, q0, grid) - result.k0)))
