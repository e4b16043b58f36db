"""Empirical spectral-inequality and observability constants.

``C(r) = 1 / lambda_min(G_r)`` is the best constant in
``sum a_i^2 <= C(r) * ∫_omega |sum a_i X_i|^2`` over modes ``lambda_i <= r``.
The observability constants compare ``||p(0)||`` of a backward heat
solution with its observation on ``omega`` over the time set ``E``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .nullcontrol import spd_solve
from .spectral import OmegaGramian, modes_below
from .timesets import TimeSet, exp_weight_integral

__all__ = [
    "SpectralIneqFit",
    "ObservabilityResult",
    "spectral_ineq_constant",
    "spectral_ineq_witness",
    "omega_factor",
    "fit_spectral_constants",
    "observability_constant_quadratic",
    "observability_constant_L1",
]


def omega_factor(G: OmegaGramian, m: int, panels: int | None = None, order: int = 24) -> np.ndarray:
    """Matrix ``F`` with ``F^T F = G[:m, :m]``, rows ``sqrt(w_q) X_i(x_q)`` at Gauss nodes on ``omega``.

    The quadrature is exact to rounding for the trigonometric products
    involved, and working with ``F`` instead of ``G`` squares the accuracy
    of the smallest eigenvalue.
    """
    alpha, beta = G.omega
    if panels is None:
        # about order/2 nodes per half-wavelength of the fastest product sin(k_i x) sin(k_j x)
        kmax = 2.0 * m * np.pi / G.basis.length
        panels = max(2, int(np.ceil(kmax * (beta - alpha) / order)) + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(alpha, beta, panels + 1)
    half = 0.5 * np.diff(edges)
    nodes = (0.5 * (edges[1:] + edges[:-1])[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    X = G.basis.eigenfunctions(nodes)[:m]
    return (X * np.sqrt(weights)[None, :]).T


def spectral_ineq_witness(G: OmegaGramian, r: float) -> tuple[float, np.ndarray]:
    """Return ``C(r)`` and a unit coefficient vector attaining it.

    ``C(r) = 1 / sigma_min(F)^2`` with ``F`` from :func:`omega_factor`.
    """
    m = modes_below(G.basis, r)
    if m == 0:
        raise ValueError(f"no eigenvalue <= r = {r}")
    _, sv, vt = np.linalg.svd(omega_factor(G, m), full_matrices=False)
    if sv[-1] <= 0:
        raise np.linalg.LinAlgError("restricted Gramian is singular")
    a = vt[-1]
    return float(1.0 / sv[-1] ** 2), a * (1.0 if a[np.argmax(np.abs(a))] > 0 else -1.0)


def spectral_ineq_constant(G: OmegaGramian, r: float) -> float:
    """Best constant ``C(r)`` of the spectral inequality on ``omega``."""
    return spectral_ineq_witness(G, r)[0]


@dataclass
class SpectralIneqFit:
    r_grid: np.ndarray
    constants: np.ndarray
    c1_hat: float
    c2_hat: float
    residual: float
    c1_raw: float

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.constants) >= 0))

    def to_dict(self) -> dict:
        return {
            "r_grid": self.r_grid.tolist(),
            "constants": self.constants.tolist(),
            "c1_hat": self.c1_hat,
            "c2_hat": self.c2_hat,
            "c1_raw": self.c1_raw,
            "residual": self.residual,
            "monotone": self.monotone,
        }


def fit_spectral_constants(G: OmegaGramian, r_grid) -> SpectralIneqFit:
    """Least-squares fit ``log C(r) ≈ log C1 + C2 sqrt(r)``.

    ``C1`` is clamped to at least 1 (``c1_raw`` keeps the unclamped value).
    The residual is the 2-norm of the misfit in ``log C``.
    """
    r = np.asarray(r_grid, dtype=float)
    if r.size < 4 or len(np.unique(r)) < 4:
        raise ValueError("need at least 4 distinct r values")
    if r.max() < 4.0 * r.min():
        raise ValueError("r grid must span at least a factor 4")
    C = np.array([spectral_ineq_constant(G, v) for v in r])
    A = np.column_stack([np.ones_like(r), np.sqrt(r)])
    coef, *_ = np.linalg.lstsq(A, np.log(C), rcond=None)
    resid = float(np.linalg.norm(A @ coef - np.log(C)))
    c1_raw = float(math.exp(coef[0]))
    return SpectralIneqFit(r, C, max(c1_raw, 1.0), float(coef[1]), resid, c1_raw)


# ---------------------------------------------------------------------------
# observability
# ---------------------------------------------------------------------------


@dataclass
class ObservabilityResult:
    value: float
    witness: np.ndarray
    iterations: int
    converged: bool
    residual: float = 0.0
    history: list | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "witness": self.witness.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
        }


def _lambda_E(E: TimeSet, G: OmegaGramian, T: float, M: int) -> np.ndarray:
    lam = G.basis.eigenvalues[:M]
    return G.matrix[:M, :M] * exp_weight_integral(E, (0.0, T), lam[:, None] + lam[None, :])


def observability_constant_quadratic(
    E: TimeSet,
    G: OmegaGramian,
    T: float,
    M: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> ObservabilityResult:
    """Largest ``mu`` with ``D p = mu Lambda_E p``.

    ``D = diag(exp(-2 lambda_i T))`` gives ``||p(0)||^2`` and ``Lambda_E``
    gives ``∫_E ||chi_omega p(t)||^2 dt`` for terminal data ``p``.  Power
    iteration on ``Lambda_E^{-1} D``; the witness is normalised in ``l2``.
    """
    M = G.M if M is None else int(M)
    if E.measure_in(0.0, T) <= 0:
        raise ValueError("E has no measure in [0, T]")
    lam = G.basis.eigenvalues[:M]
    d = np.exp(-2.0 * lam * T)
    LE = _lambda_E(E, G, T, M)
    # deterministic start that is not orthogonal to the top mode
    p = np.exp(-lam * T) + 1e-3
    p /= np.linalg.norm(p)
    mu = 0.0
    converged = False
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        q, _, _ = spd_solve(LE, d * p)
        nq = np.linalg.norm(q)
        if nq == 0:
            break
        p = q / nq
        Dp, Lp = d * p, LE @ p
        mu = float(p @ Dp / (p @ Lp))
        res = float(np.linalg.norm(Dp - mu * Lp))
        if res <= 1e-8 * mu * np.linalg.norm(Lp) and it > 1:
            converged = True
            if res <= tol * mu * np.linalg.norm(Lp):
                break
            # a couple of extra sweeps tighten the estimate at no risk
            if it > 3:
                break
    return ObservabilityResult(mu, p, it, converged, res)


def _l1_nodes(E: TimeSet, T: float, panels: int, order: int = 4):
    comps = E.clip(0.0, T)
    x, w = np.polynomial.legendre.leggauss(order)
    ts, ws = [], []
    for a, b in comps:
        edges = np.linspace(a, b, panels + 1)
        h = np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        ts.append((mid[:, None] + 0.5 * h[:, None] * x[None, :]).ravel())
        ws.append((0.5 * h[:, None] * w[None, :]).ravel())
    if not ts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(ts), np.concatenate(ws)


class _L1Objective:
    """``f(p) = ||p(0)|| / ∫_E ||chi_omega p(t)|| dt`` and its gradient."""

    def __init__(self, E: TimeSet, G: OmegaGramian, T: float, M: int, panels: int):
        lam = G.basis.eigenvalues[:M]
        self.d0 = np.exp(-lam * T)
        t, w = _l1_nodes(E, T, panels)
        self.decay = np.exp(-np.outer(T - t, lam))  # (n_nodes, M)
        self.w = w
        self.G = G.matrix[:M, :M]
        # factor G so ||chi_omega v||^2 = ||R v||^2
        ev, V = np.linalg.eigh(self.G)
        self.R = (V * np.sqrt(np.clip(ev, 0.0, None))).T

    def value_grad(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        num_v = self.d0 * p
        num = np.linalg.norm(num_v)
        P = self.decay * p[None, :]  # coefficients of p(t) at nodes
        RP = P @ self.R.T
        norms = np.linalg.norm(RP, axis=1)
        den = float(self.w @ norms)
        safe = np.where(norms > 0, norms, 1.0)
        gden = ((self.w / safe)[:, None] * (RP @ self.R)) * self.decay
        gden = gden.sum(axis=0)
        gnum = self.d0 * num_v / num if num > 0 else np.zeros_like(p)
        f = num / den
        return f, (gnum - f * gden) / den


def observability_constant_L1(
    E: TimeSet,
    G: OmegaGramian,
    T: float,
    M: int | None = None,
    iterations: int = 500,
    starts: int = 8,
    seed: int = 0,
    panels: int = 512,
    extra_starts: list | None = None,
) -> ObservabilityResult:
    """Multi-start projected gradient ascent of ``||p(0)|| / ∫_E ||chi_omega p|| dt``.

    The ascent runs on the unit sphere of terminal data in the first ``M``
    modes.  The returned value is attained by the witness, so it is a lower
    bound on the supremum.  The maximiser of the quadratic surrogate is
    always included as a start.
    """
    M = G.M if M is None else int(M)
    if E.measure_in(0.0, T) <= 0:
        raise ValueError("E has no measure in [0, T]")
    obj = _L1Objective(E, G, T, M, panels)
    rng = np.random.default_rng(seed)
    quad = observability_constant_quadratic(E, G, T, M)
    inits = [quad.witness] + [rng.standard_normal(M) for _ in range(starts)]
    if extra_starts:
        inits += [np.asarray(s, dtype=float) for s in extra_starts]
    best_f, best_p, total, hist = -math.inf, None, 0, []
    all_converged = True
    for p in inits:
        p = p / np.linalg.norm(p)
        f, g = obj.value_grad(p)
        step = 1.0 / max(f, 1e-300)
        done = False
        for _ in range(iterations):
            total += 1
            g_t = g - (g @ p) * p
            if np.linalg.norm(g_t) <= 1e-12 * max(f, 1e-300):
                done = True
                break
            while True:
                cand = p + step * g_t
                cand /= np.linalg.norm(cand)
                fc, gc = obj.value_grad(cand)
                if fc >= f or step < 1e-300:
                    break
                step *= 0.5
            if fc < f:
                done = True
                break
            gain = fc - f
            p, f, g = cand, fc, gc
            step *= 2.0
            if gain <= 1e-15 * f:
                done = True
                break
        all_converged &= done
        hist.append(f)
        if f > best_f:
            best_f, best_p = f, p
    return ObservabilityResult(float(best_f), best_p, total, all_converged, history=hist)
