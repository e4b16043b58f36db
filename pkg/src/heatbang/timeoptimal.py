"""Time-optimal control to a convex target under a ball constraint.

Controls are piecewise constant on ``K`` uniform steps of ``[0, T]``.  With
``c_k`` the coefficient row on step ``k`` the terminal state is

    y(T) = e^{-lambda T} y0 + sum_k w_k * (G c_k),
    w_{k,i} = e^{-lambda_i (T - t_{k+1})} ∫_{E ∩ step k} e^{-lambda_i (t_{k+1} - s)} ds,

an affine map ``y(T) = f + A c``.  Reaching the target is then a convex
problem ``min ||A c + f - z||`` over ``||c_k - v0|| <= R``.  Its dual

    g(mu) = mu.(A v0 + f - z) - R sum_k ||A_k^T mu|| - |mu|^2 / 2

is strongly concave, gives certified lower bounds, and at a maximiser
``mu*`` the primal solution is ``c_k = v0 - R A_k^T mu* / ||A_k^T mu*||``,
which sits on the sphere on every step that influences the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nullcontrol import (
    SingularGramianError,
    iterative_null_control,
    null_control_gain,
    spd_solve,
)
from .spectral import (
    ControlSignal,
    OmegaGramian,
    SpectralState,
    evolve_controlled,
)
from .timesets import DensitySequence, TimeSet, build_density_sequence, exp_weight_integral

__all__ = [
    "TargetSet",
    "ControlConstraint",
    "FeasibilityResult",
    "OptimalResult",
    "BangBangReport",
    "ImproveResult",
    "MidpointReport",
    "NotAdmissibleError",
    "NonConvergenceError",
    "reach_feasible",
    "min_distance_control",
    "min_norm_control",
    "min_sup_norm",
    "optimal_time",
    "bang_bang_report",
    "improve_control",
    "midpoint_uniqueness_check",
    "uniqueness_check",
]


class NotAdmissibleError(RuntimeError):
    """No admissible control was found inside the search bracket."""

    def __init__(self, msg: str, details: dict | None = None):
        super().__init__(msg)
        self.details = details or {}


class NonConvergenceError(RuntimeError):
    """A solver hit its iteration cap without a usable answer."""


@dataclass(frozen=True)
class TargetSet:
    """Closed ball ``{y : ||y - center|| <= radius}``; ``radius = 0`` is a point."""

    center: np.ndarray | None = None
    radius: float = 0.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("target radius must be nonnegative")

    @property
    def kind(self) -> str:
        return "point" if self.radius == 0 else "ball"

    def center_vector(self, M: int) -> np.ndarray:
        if self.center is None:
            return np.zeros(M)
        c = np.asarray(self.center, dtype=float)
        if c.shape != (M,):
            raise ValueError(f"target center has shape {c.shape}, expected ({M},)")
        return c

    def distance(self, y: SpectralState) -> float:
        return max(0.0, float(np.linalg.norm(y.coefficients - self.center_vector(y.basis.mode_count))) - self.radius)


@dataclass(frozen=True)
class ControlConstraint:
    """Ball ``B(v0, R)`` of admissible control values."""

    radius: float
    center: np.ndarray | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("control radius must be nonnegative")

    def center_vector(self, M: int) -> np.ndarray:
        if self.center is None:
            return np.zeros(M)
        c = np.asarray(self.center, dtype=float)
        if c.shape != (M,):
            raise ValueError(f"control center has shape {c.shape}, expected ({M},)")
        return c

    def with_radius(self, R: float) -> "ControlConstraint":
        return ControlConstraint(float(R), self.center)


# ---------------------------------------------------------------------------
# the affine terminal map
# ---------------------------------------------------------------------------


class _Reach:
    """``y(T) = f + A c`` for piecewise-constant controls on a uniform grid."""

    def __init__(self, T: float, y0: SpectralState, E: TimeSet, G: OmegaGramian, K: int):
        if not T > 0:
            raise ValueError("horizon must be positive")
        if K < 1:
            raise ValueError("K must be at least 1")
        basis = y0.basis
        lam = basis.eigenvalues
        self.T, self.K, self.M = float(T), int(K), basis.mode_count
        self.basis, self.G, self.E = basis, G.matrix, E
        self.grid = np.linspace(0.0, T, K + 1)
        W = np.empty((K, self.M))
        for k in range(K):
            W[k] = np.exp(-lam * (T - self.grid[k + 1])) * exp_weight_integral(
                E, (self.grid[k], self.grid[k + 1]), lam)
        self.W = W
        self.active = np.any(W > 0, axis=1)
        self.f = y0.coefficients * np.exp(-lam * T)

    def apply(self, C: np.ndarray) -> np.ndarray:
        """``A C`` (without the free part)."""
        return np.einsum("ki,ki->i", self.W, C @ self.G)

    def adjoint(self, mu: np.ndarray) -> np.ndarray:
        """Rows ``A_k^T mu = G (w_k * mu)``."""
        return (self.W * mu[None, :]) @ self.G

    def lipschitz(self) -> float:
        H = (self.G @ self.G) * (self.W.T @ self.W)
        return float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1])

    def control(self, C: np.ndarray) -> ControlSignal:
        return ControlSignal(self.grid, C, self.E)


def _project_ball(C: np.ndarray, v0: np.ndarray, R: float) -> np.ndarray:
    D = C - v0
    n = np.linalg.norm(D, axis=1)
    scale = np.where(n > R, R / np.where(n > 0, n, 1.0), 1.0)
    return v0 + D * scale[:, None]


def _dual_value(P: _Reach, mu: np.ndarray, b: np.ndarray, R: float) -> float:
    return float(mu @ b - R * np.linalg.norm(P.adjoint(mu), axis=1).sum() - 0.5 * mu @ mu)


def _dual_primal(P: _Reach, mu: np.ndarray, v0: np.ndarray, R: float) -> np.ndarray:
    U = P.adjoint(mu)
    n = np.linalg.norm(U, axis=1)
    C = np.tile(v0, (P.K, 1))
    ok = n > 0
    C[ok] -= R * U[ok] / n[ok, None]
    return C


def _dual_grad(P: _Reach, mu: np.ndarray, b: np.ndarray, R: float):
    U = P.adjoint(mu)
    n = np.linalg.norm(U, axis=1)
    ok = n > 0
    grad = b - mu
    Uk = None
    if R > 0 and np.any(ok):
        Uk = np.zeros_like(U)
        Uk[ok] = U[ok] / n[ok, None]
        grad = grad - R * P.apply(Uk)
    return grad, Uk, n


def _dual_hess(P: _Reach, R: float, Uk, n) -> np.ndarray:
    H = np.eye(P.M)
    if Uk is None:
        return H
    ok = n > 0
    inv = np.zeros_like(n)
    inv[ok] = 1.0 / n[ok]
    # sum_k A_k (I - u_k u_k^T) A_k^T / n_k with A_k = diag(w_k) G
    H1 = (P.G @ P.G) * ((P.W * inv[:, None]).T @ P.W)
    V = P.W * (Uk @ P.G)
    H2 = (V * inv[:, None]).T @ V
    H = H + R * (H1 - H2)
    return 0.5 * (H + H.T)


def _dual_newton(P: _Reach, b: np.ndarray, R: float, mu0: np.ndarray,
                 max_iter: int = 100) -> tuple[np.ndarray, float, bool]:
    """Maximise the strongly concave dual by damped Newton steps.

    The merit function is the gradient norm: near a maximiser with small
    ``mu`` the dual value itself is a difference of much larger terms and
    cannot resolve progress.  When ``mu`` collapses to zero (the target is
    reached exactly) the iteration stops early with ``converged`` False.
    """
    mu = np.array(mu0, dtype=float)
    bn = max(float(np.linalg.norm(b)), 1e-300)
    if not np.any(mu):
        mu = b.copy()
    grad, Uk, n = _dual_grad(P, mu, b, R)
    gn = float(np.linalg.norm(grad))
    converged = gn <= 1e-15 * bn
    for _ in range(max_iter):
        if converged or float(np.linalg.norm(mu)) <= 1e-13 * bn:
            break
        try:
            d = np.linalg.solve(_dual_hess(P, R, Uk, n), grad)
        except np.linalg.LinAlgError:
            break
        step, accepted = 1.0, False
        while step > 1e-10:
            cand = mu + step * d
            gc, Uc, nc = _dual_grad(P, cand, b, R)
            gcn = float(np.linalg.norm(gc))
            if gcn < (1.0 - 1e-4 * step) * gn:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = gn <= 1e-9 * bn
            break
        mu, grad, Uk, n, gn = cand, gc, Uc, nc, gcn
        converged = gn <= 1e-15 * bn or float(np.linalg.norm(step * d)) <= 1e-15 * float(np.linalg.norm(mu))
    return mu, _dual_value(P, mu, b, R), converged


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------


@dataclass
class FeasibilityResult:
    feasible: bool
    control: ControlSignal
    residual: float
    distance: float
    dual_bound: float
    certified_infeasible: bool
    iterations: int
    gradient_mapping: float
    converged: bool
    terminal: SpectralState | None = None

    def summary(self) -> dict:
        return {
            "feasible": self.feasible,
            "residual": self.residual,
            "distance": self.distance,
            "dual_bound": self.dual_bound,
            "certified_infeasible": self.certified_infeasible,
            "iterations": self.iterations,
            "gradient_mapping": self.gradient_mapping,
            "converged": self.converged,
        }


def _initial_controls(P: _Reach, v0: np.ndarray, R: float, init, rng) -> np.ndarray:
    if init is not None:
        C = np.array(init.coefficients if isinstance(init, ControlSignal) else init, dtype=float)
        if C.shape != (P.K, P.M):
            C = np.tile(v0, (P.K, 1))
    elif rng is not None:
        C = v0 + rng.standard_normal((P.K, P.M)) * (1e-2 * R / math.sqrt(P.M))
    else:
        C = np.tile(v0, (P.K, 1))
    return _project_ball(C, v0, R)


def _fista(P: _Reach, z: np.ndarray, v0: np.ndarray, R: float, C0: np.ndarray, stop_dist: float,
           max_iter: int, gtol: float, check_every: int = 25):
    """Accelerated projected gradient on ``1/2 ||A c + f - z||^2`` with restarts."""
    L = P.lipschitz()
    b = P.apply(np.tile(v0, (P.K, 1))) + P.f - z
    if L <= 0:
        e = P.apply(C0) + P.f - z
        return C0, e, 0, 0.0, _dual_value(P, e, b, R), True, False
    step = 1.0 / L
    x = C0
    e_x = P.apply(x) + P.f - z
    fx = 0.5 * e_x @ e_x
    y, t = x.copy(), 1.0
    best_dual = -math.inf
    gm = math.inf
    it = 0
    certified = False
    converged = False
    f_mark = fx
    for it in range(1, max_iter + 1):
        e_y = P.apply(y) + P.f - z
        x_new = _project_ball(y - step * P.adjoint(e_y), v0, R)
        e_new = P.apply(x_new) + P.f - z
        f_new = 0.5 * e_new @ e_new
        gm = float(np.linalg.norm(x_new - y)) / step
        if f_new > fx:
            # function-value restart
            y, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, e_x, fx, t = x_new, e_new, f_new, t_new
        if math.sqrt(2.0 * fx) <= stop_dist:
            converged = True
            break
        if gm <= gtol:
            converged = True
            break
        if it % check_every == 0:
            best_dual = max(best_dual, _dual_value(P, e_x, b, R))
            if best_dual > 0.5 * stop_dist**2:
                certified = True
                break
            # slow progress is handed over to the dual solve
            if fx > 0.99 * f_mark:
                break
            f_mark = fx
    best_dual = max(best_dual, _dual_value(P, e_x, b, R))
    return x, e_x, it, gm, best_dual, converged, certified or best_dual > 0.5 * stop_dist**2


def _witness_by_radius(P: _Reach, b, v0, R, stop, y0, target, G, mu0, steps: int = 60,
                       refine: bool = False):
    """Bisect on a reduced radius ``R' <= R`` for a control within ``stop`` of the centre.

    At radii where the minimum distance is positive the dual maximiser
    gives the unique minimiser.  With ``refine`` the bisection continues to
    the smallest such radius, whose control is then unique.  Returns
    ``(C, y(T), distance, R')`` or None.
    """
    lo, hi = 0.0, R
    # never warm-start from a collapsed multiplier: Newton from tiny mu is slow
    mu_lo = mu0 if np.linalg.norm(mu0) > 1e-3 * np.linalg.norm(b) else b
    best = None
    for _ in range(steps):
        if hi - lo <= 1e-14 * max(R, 1e-300):
            break
        mid = 0.5 * (lo + hi)
        mu, g, _ = _dual_newton(P, b, mid, mu_lo)
        if g > 0.5 * stop**2:
            lo, mu_lo = mid, mu
            continue
        Cm = _dual_primal(P, mu, v0, mid)
        ym, dm = _verified(P, Cm, y0, target, G)
        if dm <= stop - target.radius:
            best = (Cm, ym, dm, mid)
            if not refine:
                return best
        hi = mid
    return best


def _verified(P: _Reach, C: np.ndarray, y0: SpectralState, target: TargetSet, G: OmegaGramian):
    """Re-simulate through the exact integrator and measure the target distance."""
    yT = evolve_controlled(y0, P.control(C), None, G)
    return yT, target.distance(yT)


def reach_feasible(
    T: float,
    bound: ControlConstraint,
    y0: SpectralState,
    target: TargetSet,
    E: TimeSet,
    G: OmegaGramian,
    K: int,
    tol: float = 1e-6,
    max_iter: int = 5000,
    seed: int | None = None,
    init=None,
    gtol: float = 1e-13,
    polish: bool = True,
) -> FeasibilityResult:
    """Decide whether the target can be reached at time ``T`` within ``tol``.

    Projected accelerated gradient descent on the squared distance of
    ``y(T)`` to the target centre, from a seeded random start (or ``init``).
    Infeasibility is certified by a dual lower bound exceeding
    ``(radius + tol)^2 / 2``; feasibility by an explicit control whose
    re-simulated terminal state lies within ``tol`` of the target.  When
    neither is reached the dual maximiser is used as a final polish.
    """
    M = y0.basis.mode_count
    v0, R = bound.center_vector(M), float(bound.radius)
    z = target.center_vector(M)
    P = _Reach(T, y0, E, G, K)
    rng = np.random.default_rng(seed) if seed is not None else None
    C0 = _initial_controls(P, v0, R, init, rng)
    stop = target.radius + tol
    C, e, iters, gm, dual, conv, cert = _fista(P, z, v0, R, C0, stop, max_iter, gtol)
    yT, dist = _verified(P, C, y0, target, G)
    if dist > tol and not cert and polish:
        b = P.apply(np.tile(v0, (P.K, 1))) + P.f - z
        mu, g, _ = _dual_newton(P, b, R, e)
        dual = max(dual, g)
        cert = dual > 0.5 * stop**2
        Cd = _dual_primal(P, mu, v0, R)
        yd, dd = _verified(P, Cd, y0, target, G)
        if dd < dist:
            C, yT, dist = Cd, yd, dd
        if dist > tol and not cert:
            # the minimum distance is ~0, where the dual recovery is degenerate;
            # shrink the radius until the minimiser sits just inside the tolerance
            found = _witness_by_radius(P, b, v0, R, stop, y0, target, G, mu)
            if found is not None:
                C, yT, dist, _ = found
    feasible = dist <= tol
    return FeasibilityResult(
        feasible=feasible,
        control=P.control(C),
        residual=float(np.linalg.norm(yT.coefficients - z)),
        distance=dist,
        dual_bound=dual,
        certified_infeasible=bool(cert and not feasible),
        iterations=iters,
        gradient_mapping=gm,
        converged=conv or feasible or cert,
        terminal=yT,
    )


def min_distance_control(
    T: float,
    bound: ControlConstraint,
    y0: SpectralState,
    target: TargetSet,
    E: TimeSet,
    G: OmegaGramian,
    K: int,
    seed: int | None = None,
    max_iter: int = 5000,
) -> FeasibilityResult:
    """Minimiser of ``||y(T) - center||`` over admissible controls, solved to optimality.

    Unlike :func:`reach_feasible` there is no early stop at the tolerance.
    When the minimum distance is positive the minimiser is unique and is
    recovered from the dual maximiser.
    """
    M = y0.basis.mode_count
    v0, R = bound.center_vector(M), float(bound.radius)
    z = target.center_vector(M)
    P = _Reach(T, y0, E, G, K)
    rng = np.random.default_rng(seed) if seed is not None else None
    C0 = _initial_controls(P, v0, R, None, rng)
    C, e, iters, gm, dual, conv, _ = _fista(P, z, v0, R, C0, 0.0, max_iter, gtol=1e-14)
    b = P.apply(np.tile(v0, (P.K, 1))) + P.f - z
    mu, g, ok = _dual_newton(P, b, R, e)
    Cd = _dual_primal(P, mu, v0, R)
    ed = P.apply(Cd) + P.f - z
    # keep the primal iterate only if the dual reconstruction is clearly worse
    if np.linalg.norm(ed) <= np.linalg.norm(e) * (1.0 + 1e-9) or ok:
        C = Cd
    yT = evolve_controlled(y0, P.control(C), None, G)
    return FeasibilityResult(
        feasible=target.distance(yT) <= 0.0,
        control=P.control(C),
        residual=float(np.linalg.norm(yT.coefficients - z)),
        distance=target.distance(yT),
        dual_bound=max(dual, g),
        certified_infeasible=False,
        iterations=iters,
        gradient_mapping=gm,
        converged=bool(ok),
        terminal=yT,
    )


def _tight_control(T, bound, y0, target, E, G, K, tol):
    M = y0.basis.mode_count
    v0, R = bound.center_vector(M), float(bound.radius)
    z = target.center_vector(M)
    P = _Reach(T, y0, E, G, K)
    b = P.apply(np.tile(v0, (P.K, 1))) + P.f - z
    found = _witness_by_radius(P, b, v0, R, target.radius + tol, y0, target, G, b, refine=True)
    if found is None:
        return None
    C, yT, dist, r_used = found
    return FeasibilityResult(
        feasible=True, control=P.control(C),
        residual=float(np.linalg.norm(yT.coefficients - z)), distance=dist,
        dual_bound=_dual_value(P, yT.coefficients - z, b, R), certified_infeasible=False,
        iterations=0, gradient_mapping=0.0, converged=True, terminal=yT,
    ), r_used


def min_norm_control(
    T: float,
    y0: SpectralState,
    target: TargetSet,
    E: TimeSet,
    G: OmegaGramian,
    K: int,
    v0=None,
) -> tuple[ControlSignal, float]:
    """Unconstrained minimal-``L^2`` piecewise-constant control hitting the target centre.

    ``c_k = v0 + A_k^T nu / dt`` with ``(sum_k A_k A_k^T / dt) nu = z - f - A v0``,
    solved with the jittered Cholesky of the null-control module.  Returns
    the control and its re-simulated terminal distance to the target.
    """
    M = y0.basis.mode_count
    v0 = np.zeros(M) if v0 is None else np.asarray(v0, dtype=float)
    z = target.center_vector(M)
    P = _Reach(T, y0, E, G, K)
    dt = T / K
    V = np.tile(v0, (K, 1))
    rhs = z - P.f - P.apply(V)
    Ak = P.W[:, :, None] * P.G[None, :, :]
    Lam = np.einsum("kij,klj->il", Ak, Ak) / dt
    # modes the control cannot reach are left to the free evolution
    reach = np.diag(Lam) > 1e-300
    nu = np.zeros(M)
    if np.any(reach):
        try:
            nu[reach], _, _ = spd_solve(Lam[np.ix_(reach, reach)], rhs[reach])
        except SingularGramianError:
            nu[reach] = np.linalg.lstsq(Lam[np.ix_(reach, reach)], rhs[reach], rcond=None)[0]
    C = V + P.adjoint(nu) / dt
    yT = evolve_controlled(y0, P.control(C), None, G)
    return P.control(C), target.distance(yT)


def min_sup_norm(
    T: float,
    y0: SpectralState,
    target: TargetSet,
    E: TimeSet,
    G: OmegaGramian,
    K: int,
    tol: float = 1e-6,
    rel_tol: float = 1e-4,
    r_hi: float | None = None,
    v0=None,
    seed: int | None = None,
) -> tuple[float, FeasibilityResult | None]:
    """``N(T) = inf {R : reach_feasible}`` by bisection on ``R``.

    The upper end of the bracket is the largest step norm of the minimal
    ``L^2`` control (doubled until feasible).  Passing a common ``r_hi``
    to a family of calls puts all answers on the same dyadic grid.
    Returns the upper (feasible) endpoint and its feasibility result.
    """
    M = y0.basis.mode_count
    v0 = np.zeros(M) if v0 is None else np.asarray(v0, dtype=float)
    rng = np.random.default_rng(seed) if seed is not None else None

    def feas(R: float) -> FeasibilityResult:
        s = int(rng.integers(2**63)) if rng is not None else None
        return reach_feasible(T, ControlConstraint(R, v0), y0, target, E, G, K, tol=tol, seed=s)

    zero = feas(0.0)
    if zero.feasible:
        return 0.0, zero
    if r_hi is None:
        u, _ = min_norm_control(T, y0, target, E, G, K, v0)
        r_hi = float(np.max(u.step_deviation_norms(v0)))
    r_hi = max(r_hi, 1e-12)
    hi_res = feas(r_hi)
    doublings = 0
    while not hi_res.feasible:
        doublings += 1
        if doublings > 40:
            raise NotAdmissibleError(f"target unreachable at T = {T} even with R = {r_hi:.3g}")
        r_hi *= 2.0
        hi_res = feas(r_hi)
    lo, hi = 0.0, r_hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        res = feas(mid)
        if res.feasible:
            hi, hi_res = mid, res
        else:
            lo = mid
    return hi, hi_res


# ---------------------------------------------------------------------------
# bang-bang report
# ---------------------------------------------------------------------------


@dataclass
class BangBangReport:
    fraction: float
    weighted_fraction: float
    flags: np.ndarray
    deviations: np.ndarray
    omega_fraction: float | None = None
    omega_flags: np.ndarray | None = None

    def summary(self) -> dict:
        return {
            "fraction": self.fraction,
            "weighted_fraction": self.weighted_fraction,
            "omega_fraction": self.omega_fraction,
            "steps": int(len(self.flags)),
            "on_boundary": int(self.flags.sum()),
        }


def bang_bang_report(u: ControlSignal, bound: ControlConstraint, band: float = 1e-2,
                     G: OmegaGramian | None = None) -> BangBangReport:
    """Share of steps with ``| ||u(t_k) - v0|| - R | <= band R``.

    ``weighted_fraction`` weights steps by their length.  With ``G`` given,
    ``omega_fraction`` applies the same test to ``||chi_omega u(t_k)||``.
    """
    v0 = bound.center_vector(u.M)
    R = float(bound.radius)
    dev = u.step_deviation_norms(v0)
    flags = np.abs(dev - R) <= band * R
    lengths = u.step_lengths
    rep = BangBangReport(
        fraction=float(flags.mean()) if len(flags) else 0.0,
        weighted_fraction=float(lengths[flags].sum() / lengths.sum()) if len(flags) else 0.0,
        flags=flags,
        deviations=dev,
    )
    if G is not None:
        om = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", u.coefficients - v0, G.matrix,
                                          u.coefficients - v0), 0.0))
        oflags = np.abs(om - R) <= band * R
        rep.omega_fraction = float(oflags.mean())
        rep.omega_flags = oflags
    return rep


# ---------------------------------------------------------------------------
# optimal time
# ---------------------------------------------------------------------------


@dataclass
class OptimalResult:
    T_star: float
    control: ControlSignal | None
    step_norms: np.ndarray
    omega_norms: np.ndarray
    bang_bang: BangBangReport | None
    residual: float
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "T_star": self.T_star,
            "residual": self.residual,
            "bang_bang": None if self.bang_bang is None else self.bang_bang.summary(),
            "max_step_norm": float(self.step_norms.max()) if len(self.step_norms) else 0.0,
            "diagnostics": self.diagnostics,
        }


def _necessary_condition(y0: SpectralState, target: TargetSet, R: float) -> dict:
    lam1 = y0.basis.lambda1
    y1 = float(np.linalg.norm(target.center_vector(y0.basis.mode_count)))
    rhs = (1.0 + 1.0 / lam1) * (y0.norm() + 1.0) + R
    return {"target_norm": y1, "bound": rhs, "holds": bool(y1 <= rhs)}


def optimal_time(
    y0: SpectralState,
    target: TargetSet,
    bound: ControlConstraint,
    E: TimeSet | None,
    G: OmegaGramian,
    K: int,
    tol: float = 1e-6,
    tol_T: float | None = None,
    T_init: float = 1.0,
    T_cap: float = 1e3,
    seed: int = 0,
    band: float = 1e-2,
    max_iter: int = 5000,
) -> OptimalResult:
    """Smallest ``T`` at which the target is reachable, by bisection on ``T``.

    Feasibility at fixed ``R`` is monotone in ``T`` (zero control keeps the
    origin of a target containing it), so ``N(T) <= R`` is decided directly
    by :func:`reach_feasible`.  The bracket grows geometrically from
    ``T_init`` up to ``T_cap``.  The returned time is the feasible upper end
    of the final bracket, and the control there is the unique minimiser of
    the terminal distance.

    ``E = None`` means controls act at all times.

    Raises
    ------
    NotAdmissibleError
        No admissible control within ``T_cap``.
    """
    M = y0.basis.mode_count
    R = float(bound.radius)
    rng = np.random.default_rng(seed)
    if target.distance(y0) <= tol:
        return OptimalResult(0.0, None, np.zeros(0), np.zeros(0), None, target.distance(y0),
                             {"evaluations": 0, "reason": "initial state in target"})

    def support(T: float) -> TimeSet:
        return TimeSet.full(T) if E is None else TimeSet(E.clip(0.0, T), T)

    evals = []

    def feas(T: float) -> FeasibilityResult:
        res = reach_feasible(T, bound, y0, target, support(T), G, K, tol=tol,
                             seed=int(rng.integers(2**63)), max_iter=max_iter)
        evals.append((T, res.feasible, res.distance))
        return res

    lo, hi = 0.0, float(T_init)
    res = feas(hi)
    while not res.feasible:
        lo = hi
        hi *= 2.0
        if hi > T_cap:
            raise NotAdmissibleError(
                f"no admissible control found up to T = {T_cap}",
                {"necessary_condition": _necessary_condition(y0, target, R), "evaluations": evals},
            )
        res = feas(hi)
    tol_T = 1e-4 * hi if tol_T is None else float(tol_T)
    while hi - lo > tol_T:
        mid = 0.5 * (lo + hi)
        r = feas(mid)
        if r.feasible:
            hi, res = mid, r
        else:
            lo = mid
    final = min_distance_control(hi, bound, y0, target, support(hi), G, K,
                                 seed=int(rng.integers(2**63)), max_iter=max_iter)
    radius_used = R
    if final.distance > tol:
        # the target is hit exactly at hi, so the distance minimiser is not unique;
        # take the unique control of the smallest radius that still reaches tol
        tight = _tight_control(hi, bound, y0, target, support(hi), G, K, tol)
        if tight is not None:
            final, radius_used = tight
        else:
            final = res
    u = final.control
    v0 = bound.center_vector(M)
    return OptimalResult(
        T_star=hi,
        control=u,
        step_norms=u.step_deviation_norms(v0),
        omega_norms=u.restricted_step_norms(G),
        bang_bang=bang_bang_report(u, bound, band, G),
        residual=final.distance,
        diagnostics={
            "bracket": [lo, hi],
            "tol_T": tol_T,
            "evaluations": len(evals),
            "final_converged": final.converged,
            "dual_bound": final.dual_bound,
            "effective_radius": radius_used,
            "necessary_condition": _necessary_condition(y0, target, R),
        },
    )


# ---------------------------------------------------------------------------
# improving a non-bang-bang control
# ---------------------------------------------------------------------------


@dataclass
class ImproveResult:
    delta: float
    v_delta: list[ControlSignal]
    reconstruction_error: float
    null_sup: float
    cap: float
    gain: float
    h_norm: float
    certified_bound: float
    sampled_max: float
    attempts: int

    @property
    def admissible(self) -> bool:
        return self.certified_bound <= self.radius_limit

    radius_limit: float = math.inf

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "reconstruction_error": self.reconstruction_error,
            "null_sup": self.null_sup,
            "cap": self.cap,
            "gain": self.gain,
            "h_norm": self.h_norm,
            "certified_bound": self.certified_bound,
            "sampled_max": self.sampled_max,
            "attempts": self.attempts,
            "admissible": self.admissible,
        }


def _h_delta(u_star: ControlSignal, y0: SpectralState, G: OmegaGramian, delta: float) -> SpectralState:
    if delta == 0.0:
        return SpectralState.zeros(y0.basis)
    t0 = u_star.time_grid[0]
    return evolve_controlled(y0, u_star, None, G, (t0, t0 + delta)) - y0


def _merged_bound(u_shift: ControlSignal, u_null: ControlSignal, v0: np.ndarray) -> float:
    """Certified ``sup ||v(t) - v0||`` on the common refinement of the two grids and the null support."""
    pts = np.unique(np.concatenate([u_shift.time_grid, u_null.time_grid, u_null.support.intervals.ravel()]))
    pts = pts[(pts >= u_shift.time_grid[0]) & (pts <= u_shift.time_grid[-1])]
    worst = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        m = 0.5 * (a + b)
        base = float(np.linalg.norm(u_shift.values(m)[0] - v0))
        extra = 0.0
        if u_null.time_grid[0] <= m <= u_null.time_grid[-1] and u_null.support.measure_in(a, b) > 0:
            k = int(u_null.step_index(m))
            right = u_null.time_grid[k + 1]
            comps = u_null.support.clip(a, b)
            last = comps[-1, 1]
            extra = float(np.linalg.norm(u_null.coefficients[k] * np.exp(-u_null.rates[k] * (right - last))))
        worst = max(worst, base + extra)
    return worst


def improve_control(
    u_star: ControlSignal,
    T: float,
    y0: SpectralState,
    bound: ControlConstraint,
    E_slack: TimeSet,
    eps: float,
    G: OmegaGramian,
    seq: DensitySequence | None = None,
    schedule=None,
    stages: int = 6,
    stop_tol: float = 1e-12,
    delta_floor: float | None = None,
    samples: int = 4001,
) -> ImproveResult:
    """Reach ``y(T; u*)`` earlier, at ``T - delta``, with an admissible control.

    On ``E_slack`` the control ``u*`` keeps distance ``eps`` from the
    boundary of the ball.  With ``h = y(delta; u*) - y0`` the control
    ``v(t) = u*(t + delta) + chi_{E_delta}(t) u_delta(t)``, where
    ``u_delta`` steers ``-h`` to zero on ``[0, T - delta]``, reproduces
    ``y(T; u*)`` at ``T - delta``.  ``delta`` is the largest value (up to the
    start of the density sequence) with ``||h||^2 <= (eps/2)^2 / L``, where
    ``L`` is the measured gain of the null-control assembler; it is halved
    until ``sup ||u_delta|| <= eps/2``.

    Raises
    ------
    ValueError
        ``u*`` is not admissible or has no slack ``eps`` on ``E_slack``.
    NonConvergenceError
        ``delta`` fell below the floor without meeting the cap.
    """
    M = y0.basis.mode_count
    v0, R = bound.center_vector(M), float(bound.radius)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if E_slack.measure <= 0:
        raise ValueError("E_slack has zero measure")
    dev = u_star.step_deviation_norms(v0)
    if np.any(dev > R * (1.0 + 1e-12)):
        raise ValueError("u* is not admissible")
    g = u_star.time_grid
    touches = np.array([E_slack.measure_in(g[k], g[k + 1]) > 0 for k in range(u_star.K)])
    if not np.any(touches) or np.any(dev[touches] > R - eps + 1e-12 * max(R, 1.0)):
        raise ValueError("u* has no slack eps on E_slack")
    if seq is None:
        seq = build_density_sequence(E_slack)
    delta_floor = 1e-6 * T if delta_floor is None else delta_floor
    gain = null_control_gain(E_slack, T, 0.0, seq, G, schedule, stages)
    cap = 0.5 * eps
    target_h = cap**2 / gain
    d_max = float(seq.delta0)

    def hn(d: float) -> float:
        return _h_delta(u_star, y0, G, d).norm()

    if hn(d_max) ** 2 <= target_h:
        delta = d_max
    else:
        lo, hi = 0.0, d_max
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if hn(mid) ** 2 <= target_h:
                lo = mid
            else:
                hi = mid
        delta = lo
    y_target = evolve_controlled(y0, u_star, None, G)
    attempts = 0
    while True:
        attempts += 1
        if delta < delta_floor:
            raise NonConvergenceError(f"delta fell below {delta_floor:.3g} without meeting the cap")
        h = _h_delta(u_star, y0, G, delta)
        res = iterative_null_control(-h, E_slack, T, delta, seq, G, schedule=schedule,
                                     stop_tol=stop_tol, max_stages=stages) if h.norm() > 0 else None
        if res is None or res.sup_norm <= cap:
            break
        delta *= 0.5
    u_shift = u_star.shifted(delta)
    parts = [u_shift] if res is None else [u_shift, res.control]
    y_new = evolve_controlled(y0, parts, None, G, (0.0, T - delta))
    err = (y_new - y_target).norm()
    null_sup = 0.0 if res is None else res.sup_norm
    if res is None:
        certified = float(u_shift.step_deviation_norms(v0).max())
    else:
        certified = _merged_bound(u_shift, res.control, v0)
    ts = np.linspace(0.0, T - delta, samples)
    vals = u_shift.values(ts) - v0
    if res is not None:
        vals = vals + res.control.values(ts, effective=True)
    sampled = float(np.linalg.norm(vals, axis=1).max())
    out = ImproveResult(delta, parts, err, null_sup, cap, gain, h.norm(), certified, sampled, attempts)
    out.radius_limit = R
    return out


# ---------------------------------------------------------------------------
# uniqueness
# ---------------------------------------------------------------------------


@dataclass
class MidpointReport:
    identity_residual: float
    boundary_steps: np.ndarray
    differing_steps: np.ndarray
    max_interior_slack: float
    identity_ok: bool

    def summary(self) -> dict:
        return {
            "identity_residual": self.identity_residual,
            "boundary_steps": int(self.boundary_steps.sum()),
            "differing_steps": int(self.differing_steps.sum()),
            "max_interior_slack": self.max_interior_slack,
            "identity_ok": self.identity_ok,
        }


def midpoint_uniqueness_check(u1: ControlSignal, u2: ControlSignal, bound: ControlConstraint,
                              boundary_tol: float = 1e-12, diff_tol: float = 1e-12) -> MidpointReport:
    """Midpoint ``w = (u1 + u2)/2`` and ``||w - v0||^2 = R^2 - ||u1 - u2||^2 / 4`` on the boundary."""
    if u1.time_grid.shape != u2.time_grid.shape or not np.allclose(u1.time_grid, u2.time_grid, rtol=0, atol=1e-14):
        raise ValueError("controls live on different grids")
    v0 = bound.center_vector(u1.M)
    R = float(bound.radius)
    a, b = u1.coefficients - v0, u2.coefficients - v0
    w = 0.5 * (a + b)
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    on = (np.abs(na - R) <= boundary_tol * max(R, 1.0)) & (np.abs(nb - R) <= boundary_tol * max(R, 1.0))
    d2 = np.sum((a - b) ** 2, axis=1)
    lhs = np.sum(w**2, axis=1)
    resid = np.abs(lhs - (R**2 - 0.25 * d2))
    ident = float(resid[on].max()) if np.any(on) else 0.0
    slack = R - np.sqrt(lhs)
    return MidpointReport(
        identity_residual=ident,
        boundary_steps=on,
        differing_steps=np.sqrt(d2) > diff_tol * max(R, 1.0),
        max_interior_slack=float(slack.max()) if len(slack) else 0.0,
        identity_ok=ident <= 1e-10 * max(R**2, 1.0),
    )


def uniqueness_check(y0, target, bound, E, G, K, seeds=(1, 2), **kw) -> dict:
    """Two :func:`optimal_time` solves from independent seeds, compared."""
    r1 = optimal_time(y0, target, bound, E, G, K, seed=seeds[0], **kw)
    r2 = optimal_time(y0, target, bound, E, G, K, seed=seeds[1], **kw)
    if r1.control is None or r2.control is None:
        return {"T_diff": abs(r1.T_star - r2.T_star), "control_rel_diff": 0.0, "results": (r1, r2)}
    C1, C2 = r1.control.coefficients, r2.control.coefficients
    rel = float(np.linalg.norm(C1 - C2) / max(np.linalg.norm(C1), 1e-300))
    return {"T_diff": abs(r1.T_star - r2.T_star), "control_rel_diff": rel, "results": (r1, r2)}
