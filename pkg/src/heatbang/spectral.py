"""Spectral representation of the 1-D Dirichlet heat equation on ``(0, length)``.

States, adjoint states and controls are stored as coefficient vectors in the
orthonormal sine basis ``X_i(x) = sqrt(2/length) sin(i pi x / length)`` with
eigenvalues ``lambda_i = (i pi / length)**2``.  The semigroup is diagonal in
this basis, so every time integral used downstream has a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .timesets import TimeSet, exp_weight_integral, shift as shift_set

__all__ = [
    "EigenBasis",
    "SpectralState",
    "OmegaGramian",
    "ControlSignal",
    "build_basis",
    "omega_gramian",
    "free_evolve",
    "evolve_controlled",
    "adjoint_solve",
    "project",
    "modes_below",
    "tail_bound",
    "project_function",
]


@dataclass(frozen=True)
class EigenBasis:
    """First ``mode_count`` Dirichlet eigenpairs of ``-d^2/dx^2`` on ``(0, length)``."""

    mode_count: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.mode_count) != self.mode_count or self.mode_count < 1:
            raise ValueError(f"mode_count must be a positive integer, got {self.mode_count}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "mode_count", int(self.mode_count))
        object.__setattr__(self, "length", float(self.length))

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.mode_count + 1) * np.pi / self.length

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.wavenumbers**2

    @property
    def lambda1(self) -> float:
        return float((np.pi / self.length) ** 2)

    def eigenfunctions(self, x) -> np.ndarray:
        """Matrix ``X[i, j] = X_{i+1}(x_j)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.sqrt(2.0 / self.length) * np.sin(np.outer(self.wavenumbers, x))

    def evaluate(self, coefficients, x) -> np.ndarray:
        return np.asarray(coefficients, dtype=float) @ self.eigenfunctions(x)


def build_basis(M: int, length: float = 1.0) -> EigenBasis:
    return EigenBasis(M, length)


@dataclass(frozen=True, eq=False)
class SpectralState:
    """A function in ``L^2(0, length)`` given by its first ``M`` sine coefficients."""

    coefficients: np.ndarray
    basis: EigenBasis

    def __post_init__(self):
        a = np.array(self.coefficients, dtype=float).reshape(-1)
        if a.shape != (self.basis.mode_count,):
            raise ValueError(
                f"expected {self.basis.mode_count} coefficients, got {a.shape[0]}"
            )
        a.setflags(write=False)
        object.__setattr__(self, "coefficients", a)

    @classmethod
    def zeros(cls, basis: EigenBasis) -> "SpectralState":
        return cls(np.zeros(basis.mode_count), basis)

    @classmethod
    def unit(cls, basis: EigenBasis, i: int) -> "SpectralState":
        """The eigenfunction ``X_i`` (1-based)."""
        a = np.zeros(basis.mode_count)
        a[i - 1] = 1.0
        return cls(a, basis)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def __call__(self, x):
        return self.basis.evaluate(self.coefficients, x)

    def _check(self, other: "SpectralState"):
        if other.basis != self.basis:
            raise ValueError("states live in different bases")

    def __add__(self, other):
        self._check(other)
        return SpectralState(self.coefficients + other.coefficients, self.basis)

    def __sub__(self, other):
        self._check(other)
        return SpectralState(self.coefficients - other.coefficients, self.basis)

    def __neg__(self):
        return SpectralState(-self.coefficients, self.basis)

    def __mul__(self, scalar: float):
        return SpectralState(float(scalar) * self.coefficients, self.basis)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpectralState(M={self.basis.mode_count}, norm={self.norm():.6g})"


def _gramian_matrix(k: np.ndarray, alpha: float, beta: float, length: float) -> np.ndarray:
    # (2/L) ∫ sin(k_i x) sin(k_j x) dx = (1/L) ∫ [cos((k_i-k_j)x) - cos((k_i+k_j)x)] dx
    kp = k[:, None] + k[None, :]
    km = k[:, None] - k[None, :]
    same = np.isclose(km, 0.0)
    km_safe = np.where(same, 1.0, km)
    minus = np.where(same, beta - alpha, (np.sin(km_safe * beta) - np.sin(km_safe * alpha)) / km_safe)
    plus = (np.sin(kp * beta) - np.sin(kp * alpha)) / kp
    G = (minus - plus) / length
    return 0.5 * (G + G.T)


@dataclass(frozen=True, eq=False)
class OmegaGramian:
    """``G[i, j] = ∫_omega X_i X_j dx`` for an observation interval ``omega``."""

    basis: EigenBasis
    omega: tuple[float, float]
    matrix: np.ndarray

    @property
    def M(self) -> int:
        return self.basis.mode_count

    def quadratic_form(self, a) -> float:
        a = np.asarray(a, dtype=float)
        return float(a @ self.matrix @ a)

    def restricted_norm(self, a) -> float:
        """``||chi_omega u||`` for a coefficient vector ``a``."""
        return float(np.sqrt(max(self.quadratic_form(a), 0.0)))


def omega_gramian(basis: EigenBasis, omega: Sequence[float]) -> OmegaGramian:
    alpha, beta = float(omega[0]), float(omega[1])
    if not (0.0 <= alpha < beta <= basis.length):
        raise ValueError(f"omega must be a nonempty subinterval of (0, {basis.length}), got {omega}")
    G = _gramian_matrix(basis.wavenumbers, alpha, beta, basis.length)
    G.setflags(write=False)
    return OmegaGramian(basis, (alpha, beta), G)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise control ``u(., t)`` on the grid ``t_0 < ... < t_K``.

    On step ``k`` (``t_{k-1} <= t < t_k``) the control is

        u_i(t) = coefficients[k, i] * exp(-rates[k, i] * (t_k - t)),

    so ``coefficients[k]`` is the value at the right end of the step.  With
    ``rates`` omitted (all zero) this is the usual piecewise-constant
    control.  Nonzero rates let adjoint-shaped controls ``chi_E phi(t)`` be
    stored without discretisation error.  ``support`` is the time set ``E``
    multiplying the control in the state equation; ``None`` means the whole
    grid.
    """

    time_grid: np.ndarray
    coefficients: np.ndarray
    support: TimeSet | None = None
    rates: np.ndarray | None = None

    def __post_init__(self):
        grid = np.array(self.time_grid, dtype=float).reshape(-1)
        coef = np.array(self.coefficients, dtype=float)
        if coef.ndim != 2:
            raise ValueError("coefficients must be a K x M array")
        if grid.shape[0] != coef.shape[0] + 1:
            raise ValueError(f"grid has {grid.shape[0]} points for {coef.shape[0]} steps")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if self.rates is None:
            rates = np.zeros_like(coef)
        else:
            rates = np.broadcast_to(np.asarray(self.rates, dtype=float), coef.shape).copy()
            if np.any(rates < 0):
                raise ValueError("rates must be nonnegative")
        support = self.support
        if support is None:
            support = TimeSet(np.array([[grid[0], grid[-1]]]), grid[-1])
        for arr in (grid, coef, rates):
            arr.setflags(write=False)
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "support", support)

    @classmethod
    def zeros(cls, time_grid, M: int, support: TimeSet | None = None) -> "ControlSignal":
        grid = np.asarray(time_grid, dtype=float)
        return cls(grid, np.zeros((len(grid) - 1, M)), support)

    @classmethod
    def constant(cls, value, t0: float, t1: float, steps: int = 1,
                 support: TimeSet | None = None) -> "ControlSignal":
        value = np.asarray(value, dtype=float)
        return cls(np.linspace(t0, t1, steps + 1), np.tile(value, (steps, 1)), support)

    @property
    def K(self) -> int:
        return self.coefficients.shape[0]

    @property
    def M(self) -> int:
        return self.coefficients.shape[1]

    @property
    def is_piecewise_constant(self) -> bool:
        return not np.any(self.rates)

    @property
    def step_lengths(self) -> np.ndarray:
        return np.diff(self.time_grid)

    def step_index(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.time_grid, t, side="right") - 1
        return np.clip(k, 0, self.K - 1)

    def values(self, t, effective: bool = False) -> np.ndarray:
        """Coefficient vectors ``u(t)`` (rows); ``effective`` multiplies by ``chi_E``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = self.step_index(t)
        right = self.time_grid[k + 1]
        out = self.coefficients[k] * np.exp(-self.rates[k] * (right - t)[:, None])
        if effective:
            out = out * self.support.contains(t)[:, None]
        return out

    def step_norms(self) -> np.ndarray:
        """Sup of ``||u(t)||`` over each step (the right-end value, rates being >= 0)."""
        return np.linalg.norm(self.coefficients, axis=1)

    def step_deviation_norms(self, center) -> np.ndarray:
        """``||u(t_k) - center||`` per step, for piecewise-constant controls."""
        return np.linalg.norm(self.coefficients - np.asarray(center, dtype=float), axis=1)

    def restricted_step_norms(self, G: OmegaGramian) -> np.ndarray:
        """``||chi_omega u(t_k)||`` evaluated on the right-end values."""
        q = np.einsum("ki,ij,kj->k", self.coefficients, G.matrix, self.coefficients)
        return np.sqrt(np.maximum(q, 0.0))

    def active_steps(self) -> np.ndarray:
        """Steps whose intersection with the support has positive length."""
        g = self.time_grid
        return np.array([self.support.measure_in(g[k], g[k + 1]) > 0 for k in range(self.K)])

    def effective_step_sup(self) -> np.ndarray:
        """Exact ``sup ||chi_E u(t)||`` on each step (zero where the support misses it)."""
        g = self.time_grid
        out = np.zeros(self.K)
        for k in range(self.K):
            comps = self.support.clip(g[k], g[k + 1])
            if len(comps) == 0:
                continue
            last = comps[-1, 1]
            out[k] = np.linalg.norm(self.coefficients[k] * np.exp(-self.rates[k] * (g[k + 1] - last)))
        return out

    def sup_norm(self) -> float:
        """``||chi_E u||`` in ``L^inf(L^2)``, computed exactly."""
        s = self.effective_step_sup()
        return float(s.max()) if len(s) else 0.0

    def shifted(self, delta: float) -> "ControlSignal":
        """The control ``t -> u(t + delta)`` on ``[t_0, t_K - delta]`` (grid clipped at ``t_0``)."""
        delta = float(delta)
        if delta == 0.0:
            return self
        t0 = self.time_grid[0]
        g = self.time_grid - delta
        keep = np.nonzero(g[1:] > t0)[0]
        if len(keep) == 0:
            raise ValueError("shift removes the whole control")
        first = keep[0]
        grid = np.concatenate([[t0], g[first + 1:]])
        support = shift_set(self.support, delta)
        return ControlSignal(grid, self.coefficients[first:], support, self.rates[first:])

    def refined(self, factor: int) -> "ControlSignal":
        """Same control on a grid with every step split into ``factor`` equal pieces."""
        factor = int(factor)
        g = self.time_grid
        grid = [g[0]]
        coef, rates = [], []
        for k in range(self.K):
            sub = np.linspace(g[k], g[k + 1], factor + 1)[1:]
            for s in sub:
                grid.append(s)
                coef.append(self.coefficients[k] * np.exp(-self.rates[k] * (g[k + 1] - s)))
                rates.append(self.rates[k])
        return ControlSignal(np.array(grid), np.array(coef), self.support, np.array(rates))


ControlLike = Union[ControlSignal, Sequence[ControlSignal]]


def free_evolve(state: SpectralState, t: float) -> SpectralState:
    """Uncontrolled heat flow for time ``t``."""
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    lam = state.basis.eigenvalues
    return SpectralState(state.coefficients * np.exp(-lam * t), state.basis)


def adjoint_solve(terminal: SpectralState, T: float, t: float) -> SpectralState:
    """Backward heat equation ``phi_t + phi_xx = 0`` with ``phi(T) = terminal``, at time ``t``."""
    if not 0.0 <= t <= T:
        raise ValueError(f"t must lie in [0, {T}], got {t}")
    lam = terminal.basis.eigenvalues
    return SpectralState(terminal.coefficients * np.exp(-lam * (T - t)), terminal.basis)


def project(state: SpectralState, r: float) -> SpectralState:
    """Orthogonal projection onto ``span{X_i : lambda_i <= r}``."""
    mask = state.basis.eigenvalues <= r
    return SpectralState(np.where(mask, state.coefficients, 0.0), state.basis)


def modes_below(basis: EigenBasis, r: float) -> int:
    """Number of eigenvalues ``<= r`` among the retained modes."""
    return int(np.count_nonzero(basis.eigenvalues <= r))


def tail_bound(basis: EigenBasis, t: float, norm: float) -> float:
    """Decay factor bound ``exp(-lambda_{M+1} t) * norm`` for the discarded modes."""
    lam_next = ((basis.mode_count + 1) * np.pi / basis.length) ** 2
    return float(np.exp(-lam_next * t) * norm)


def project_function(basis: EigenBasis, f, nodes: int = 2048) -> SpectralState:
    """Sine coefficients of ``f`` by composite Gauss-Legendre quadrature."""
    xg, wg = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, basis.length, nodes // 8 + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    vals = np.asarray(f(x), dtype=float)
    return SpectralState(basis.eigenfunctions(x) @ (w * vals), basis)


def _as_parts(u: ControlLike) -> list[ControlSignal]:
    if isinstance(u, ControlSignal):
        return [u]
    return list(u)


def _step_forcing(a: np.ndarray, lam: np.ndarray, G: np.ndarray, c: np.ndarray,
                  nu: np.ndarray, right: float, s0: float, s1: float, E: TimeSet) -> np.ndarray:
    a = a * np.exp(-lam * (s1 - s0))
    if not np.any(c):
        return a
    if not np.any(nu):
        return a + exp_weight_integral(E, (s0, s1), lam) * (G @ c)
    # mode i picks up sum_j G_ij c_j exp(-nu_j (right - s1)) ∫ exp(-(lam_i + nu_j)(s1 - s)) ds
    W = exp_weight_integral(E, (s0, s1), lam[:, None] + nu[None, :])
    return a + (G * W) @ (c * np.exp(-nu * (right - s1)))


def evolve_controlled(
    state: SpectralState,
    u: ControlLike,
    E: TimeSet | None,
    G: OmegaGramian,
    window: tuple[float, float] | None = None,
) -> SpectralState:
    """Exact solution of ``y_t - y_xx = chi_E(t) chi_omega(x) u`` over ``window``.

    ``state`` is the value at the start of the window.  ``u`` may be a single
    :class:`ControlSignal` or a sequence of them, in which case the
    contributions are superposed (each with its own support unless ``E`` is
    given).  There is no time-stepping error: each step is integrated
    against the semigroup in closed form.
    """
    parts = _as_parts(u)
    basis = state.basis
    if G.basis != basis:
        raise ValueError("Gramian and state use different bases")
    for p in parts:
        if p.M != basis.mode_count:
            raise ValueError(f"control has {p.M} modes, state has {basis.mode_count}")
    if window is None:
        window = (min(p.time_grid[0] for p in parts), max(p.time_grid[-1] for p in parts))
    a0, b0 = float(window[0]), float(window[1])
    if b0 < a0:
        raise ValueError("window must satisfy a <= b")
    lam = basis.eigenvalues
    out = state.coefficients * np.exp(-lam * (b0 - a0))
    for p in parts:
        g = p.time_grid
        if a0 < g[0] - 1e-12 or b0 > g[-1] + 1e-12:
            raise ValueError(f"window {window} lies outside the control grid [{g[0]}, {g[-1]}]")
        support = p.support if E is None else E
        a = np.zeros(basis.mode_count)
        t = a0
        for k in range(p.K):
            s0, s1 = max(g[k], a0), min(g[k + 1], b0)
            if s1 <= s0:
                continue
            a = a * np.exp(-lam * (s0 - t))
            a = _step_forcing(a, lam, G.matrix, p.coefficients[k], p.rates[k], g[k + 1], s0, s1, support)
            t = s1
        out = out + a * np.exp(-lam * (b0 - t))
    return SpectralState(out, basis)
