"""Minimal time to reach 0 under ||u(t)|| <= R, and the bang-bang shape of the optimum.

Run:  python3 demos/time_optimal_walkthrough.py   (about 20 s)
"""

import numpy as np

from heatbang import SpectralState, TimeSet, build_basis, omega_gramian
from heatbang.timeoptimal import (
    ControlConstraint,
    TargetSet,
    bang_bang_report,
    min_norm_control,
    min_sup_norm,
    optimal_time,
)

basis = build_basis(32)
G = omega_gramian(basis, (0.3, 0.8))
rng = np.random.default_rng(3)
a = np.zeros(32)
a[:6] = rng.standard_normal(6)
y0 = SpectralState(a / np.linalg.norm(a), basis)
bound = ControlConstraint(1.0)

opt = optimal_time(y0, TargetSet(), bound, None, G, 100, tol=1e-6, seed=11)
print(f"T* = {opt.T_star:.5f}, terminal distance {opt.residual:.1e}")
print(f"fraction of steps with ||u|| within 1% of R: {opt.bang_bang.fraction:.3f}  (bang-bang)")

for factor in (1.25, 1.5, 2.0):
    T = factor * opt.T_star
    u, _ = min_norm_control(T, y0, TargetSet(), TimeSet.full(T), G, 100)
    frac = bang_bang_report(u, bound, 1e-2).fraction
    print(f"at {factor:.2f} T* the minimal L2 control saturates on {frac:.0%} of the steps")

print("\nminimal sup-norm N(T) needed to reach 0 by time T:")
for T in np.linspace(0.2, 0.5, 4):
    N = min_sup_norm(T, y0, TargetSet(), TimeSet.full(T), G, 100, r_hi=4.0, seed=0)[0]
    print(f"  T = {T:.2f}: N(T) = {N:.4f}")
