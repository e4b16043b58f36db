"""Observability on omega = (0.3, 0.8): the constant C(r) in
sum |a_j|^2 <= C(r) ||sum a_j X_j||^2_{L2(omega)} and its fit C1 exp(C2 sqrt r).

Run:  python3 demos/spectral_inequality_walkthrough.py
"""

import numpy as np

from heatbang import build_basis, omega_gramian
from heatbang.observability import fit_spectral_constants

basis = build_basis(32)
G = omega_gramian(basis, (0.3, 0.8))
rs = basis.eigenvalues[:16]
fit = fit_spectral_constants(G, rs)

print(f"{'modes':>5} {'r':>10} {'C(r)':>12} {'C1 exp(C2 sqrt r)':>18}")
for m, (r, C) in enumerate(zip(rs, fit.constants), 1):
    model = fit.c1_raw * np.exp(fit.c2_hat * np.sqrt(r))
    print(f"{m:>5} {r:>10.2f} {C:>12.4e} {model:>18.4e}")
print(f"\nleast-squares C1 = {fit.c1_raw:.4g} (reported as {fit.c1_hat:.4g}, clamped to >= 1), "
      f"C2 = {fit.c2_hat:.4f}; log-space residual {fit.residual:.3f}")
