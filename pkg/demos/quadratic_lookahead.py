#!/usr/bin/env python3
"""Ill-conditioned 2-D quadratic: vanilla descent zigzags, the lookahead
(extragradient) rules cut through. Writes trajectories.svg / .csv."""

import numpy as np

from latopt.quadratic import (
    DEFAULT_START,
    default_quadratic,
    eg_first_order_trajectory,
    eg_full_hessian_trajectory,
    eg_mode_factor,
    gd_mode_factor,
    gd_trajectory,
)
from latopt.render import write_outputs

q = default_quadratic()
lam = np.linalg.eigvalsh(q.A)
print(f"condition number: {q.condition_number():.1f}  (eigenvalues of A: {lam[1]:.3f}, {lam[0]:.4f})")
print(f"start: {DEFAULT_START}, minimizer: {q.minimizer()}")
print()

runs = [
    ("vanilla descent", gd_trajectory(q, DEFAULT_START, 0.025, 400)),
    ("lookahead, re-evaluated gradient", eg_first_order_trajectory(q, DEFAULT_START, 0.025, 0.01, 400)),
    ("lookahead, Hessian-corrected step", eg_full_hessian_trajectory(q, DEFAULT_START, 0.1, 0.01, 400)),
]

print(f"{'method':<36} {'eta':>6} {'gamma':>6} {'steps to |grad|<1e-3':>21}")
for name, traj in runs:
    reached = traj.steps_to()
    print(f"{name:<36} {traj.eta:>6} {traj.gamma:>6} {str(reached):>21}")

print()
print("predicted per-mode contraction factors (descent vs lookahead):")
for mode, l in enumerate(lam[::-1]):
    print(
        f"  mode {mode} (lambda={l:.4f}): descent {gd_mode_factor(l, 0.025):+.4f}, "
        f"lookahead@0.1 {eg_mode_factor(l, 0.1, 0.01):+.4f}"
    )
print("the steep mode's negative descent factor is the zigzag;")
print("the lookahead keeps |factor| < 1 even at the 4x larger step size.")

print()
print("descent at eta=0.1 for contrast:")
diverged = gd_trajectory(q, DEFAULT_START, 0.1, 400)
print(f"  truncated={diverged.truncated} after {len(diverged) - 1} steps "
      f"(final |grad| {diverged.grad_norms[-1]:.2e})")

write_outputs([t for _, t in runs], q, svg_path="trajectories.svg", csv_path="trajectories.csv")
print()
print("wrote trajectories.svg and trajectories.csv")
