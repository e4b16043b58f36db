"""Finite-rank null controls and the staged null-control assembler.

:func:`finite_rank_control` kills the low-frequency part ``P_r y`` of the
state over one window with the adjoint-shaped (minimal ``L^2``) control.
:func:`iterative_null_control` chains such windows along a density
sequence, alternating controlled intervals ``I_N`` with free intervals
``J_N``, and assembles the result into one :class:`ControlSignal`.
:func:`schedule_constants` evaluates the constants that bound these
controls; all of them depend on the sequence only through its gaps, which
is what makes them invariant under shifting the sequence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .spectral import (
    ControlSignal,
    EigenBasis,
    OmegaGramian,
    SpectralState,
    evolve_controlled,
    free_evolve,
    modes_below,
    project,
)
from .timesets import (
    DensitySequence,
    TimeSet,
    exp_weight_integral,
    shift,
    verify_density_sequence,
)

__all__ = [
    "SingularGramianError",
    "ConstantsLedger",
    "FiniteRankControl",
    "StageResult",
    "NullControlResult",
    "DeltaInvarianceReport",
    "spd_solve",
    "finite_rank_control",
    "schedule_constants",
    "practical_schedule",
    "iterative_null_control",
    "null_control_gain",
    "delta_invariance_check",
]

N_CAP = 64


class SingularGramianError(np.linalg.LinAlgError):
    """Raised when a control Gramian stays singular after jitter escalation."""

    def __init__(self, msg: str, condition: float):
        super().__init__(msg)
        self.condition = condition


def _condition(A: np.ndarray) -> float:
    w = np.linalg.eigvalsh(A)
    if w[0] <= 0:
        return math.inf
    return float(w[-1] / w[0])


def spd_solve(A: np.ndarray, rhs: np.ndarray, refine: int = 2) -> tuple[np.ndarray, float, float]:
    """Solve a symmetric positive definite system by Cholesky.

    A diagonal jitter of ``1e-14 * trace`` is added only if the plain
    factorisation fails, and escalated by factors of ten up to
    ``1e-8 * trace``.  The system is Jacobi-scaled first and the solution
    polished with a few steps of iterative refinement against the
    unregularised matrix.

    Returns
    -------
    x : ndarray
    jitter : float
        Diagonal shift that was needed (0.0 when none).
    condition : float
        Estimated 2-norm condition number of ``A``.
    """
    A = 0.5 * (A + A.T)
    d = np.sqrt(np.diag(A))
    if np.any(d <= 0):
        raise SingularGramianError("Gramian has a nonpositive diagonal entry", math.inf)
    As = A / np.outer(d, d)
    bs = rhs / d
    trace = float(np.trace(As))
    jitter = 0.0
    factor = None
    for level in [None] + [10.0**e for e in range(-14, -7)]:
        shift_ = 0.0 if level is None else level * trace
        try:
            factor = sla.cho_factor(As + shift_ * np.eye(len(As)), lower=True, check_finite=False)
            jitter = shift_
            break
        except np.linalg.LinAlgError:
            continue
    if factor is None:
        cond = _condition(A)
        raise SingularGramianError(f"control Gramian singular after jitter (cond ~ {cond:.3g})", cond)
    x = sla.cho_solve(factor, bs, check_finite=False)
    for _ in range(refine):
        x = x + sla.cho_solve(factor, bs - As @ x, check_finite=False)
    return x / d, jitter, _condition(As)


# ---------------------------------------------------------------------------
# Lemma-type finite-rank control
# ---------------------------------------------------------------------------


@dataclass
class FiniteRankControl:
    control: ControlSignal
    terminal: SpectralState
    final_state: SpectralState
    residual: float
    modes: int
    condition: float = 1.0
    jitter: float = 0.0
    sup_norm: float = 0.0
    bound: dict | None = None


def _lemma_bound(c1: float, c2: float, r: float, m_e: float, y_norm: float, sup_norm: float) -> dict:
    # the estimate reads ||u|| <= C1 e^{C2 sqrt r} / m(E)^2 * ||y0||^2; both readings are reported
    log_k = math.log(c1) + c2 * math.sqrt(r) - 2.0 * math.log(m_e)
    log_y = 2.0 * math.log(y_norm) if y_norm > 0 else -math.inf
    log_u = math.log(sup_norm) if sup_norm > 0 else -math.inf
    return {
        "log_bound": log_k + log_y,
        "linear_reading_holds": bool(log_u <= log_k + log_y),
        "squared_reading_holds": bool(2.0 * log_u <= log_k + log_y),
    }


def finite_rank_control(
    y_init: SpectralState,
    r: float,
    window: tuple[float, float],
    E: TimeSet,
    G: OmegaGramian,
    c1: float | None = None,
    c2: float | None = None,
) -> FiniteRankControl:
    """Control on ``E ∩ window`` that zeroes ``P_r y`` at the end of the window.

    The control is ``chi_E(t) phi(t)`` with ``phi`` the backward heat
    solution from a terminal datum ``phi_T`` in ``X_r``.  ``phi_T`` solves
    ``Lambda phi_T = -P_r G(b - a) y_init`` with
    ``Lambda_ij = G_ij ∫_{E ∩ [a, b]} exp(-(lambda_i + lambda_j)(b - t)) dt``,
    i.e. it is the minimal ``L^2(E; L^2)`` control with this property.

    Parameters
    ----------
    y_init : SpectralState
        State at ``window[0]``.
    r : float
        Frequency cut-off; modes with ``lambda_i <= r`` are annihilated.
    window : (float, float)
    E : TimeSet
        Admissible control times.
    G : OmegaGramian
    c1, c2 : float, optional
        Spectral-inequality constants; when given, the measured sup norm is
        compared against the corresponding estimate.

    Returns
    -------
    FiniteRankControl
    """
    basis = y_init.basis
    a, b = float(window[0]), float(window[1])
    if not b > a:
        raise ValueError("window must have positive length")
    m = modes_below(basis, r)
    M = basis.mode_count
    lam = basis.eigenvalues
    zero = ControlSignal(np.array([a, b]), np.zeros((1, M)), E)
    if m == 0 or not np.any(y_init.coefficients):
        final = free_evolve(y_init, b - a)
        return FiniteRankControl(zero, SpectralState.zeros(basis), final,
                                 project(final, r).norm(), m)
    m_e = E.measure_in(a, b)
    if m_e <= 0:
        raise ValueError(f"E has no measure inside the window [{a}, {b}]")
    free = y_init.coefficients[:m] * np.exp(-lam[:m] * (b - a))
    Lam = G.matrix[:m, :m] * exp_weight_integral(E, (a, b), lam[:m, None] + lam[None, :m])
    p, jitter, cond = spd_solve(Lam, -free)
    coef = np.zeros(M)
    coef[:m] = p
    control = ControlSignal(np.array([a, b]), coef[None, :], E, lam[None, :])
    final = evolve_controlled(y_init, control, None, G)
    sup = control.sup_norm()
    bound = None
    if c1 is not None and c2 is not None:
        bound = _lemma_bound(c1, c2, r, m_e, y_init.norm(), sup)
    return FiniteRankControl(
        control=control,
        terminal=SpectralState(coef, basis),
        final_state=final,
        residual=project(final, r).norm(),
        modes=m,
        condition=cond,
        jitter=jitter,
        sup_norm=sup,
        bound=bound,
    )


# ---------------------------------------------------------------------------
# Constants of the staged construction
# ---------------------------------------------------------------------------


def _exp_diff(log_x: float, log_y: float) -> float:
    """``x - y`` given logs, saturating to +-inf instead of producing nan."""
    with np.errstate(over="ignore"):
        x, y = math.exp(min(log_x, 709.0)), math.exp(min(log_y, 709.0))
    if log_x < 709.0 and log_y < 709.0:
        return x - y
    return math.inf if log_x > log_y else -math.inf


@dataclass(frozen=True)
class ConstantsLedger:
    """Every scalar of the staged null-control estimate.

    Large quantities are kept in log form as well (``log_*``); the linear
    values overflow to ``inf`` for realistic inputs.  ``r_schedule`` and
    ``alpha`` cover ``N = 1 .. n0``.
    """

    c1: float
    c2: float
    rho: float
    c0: float
    gap12: float
    gap23: float
    c_tilde: float
    r_schedule: tuple[float, ...]
    log_r_schedule: tuple[float, ...]
    alpha: tuple[float, ...]
    log_alpha: tuple[float, ...]
    n0: int
    n1: int
    n2: int
    big_l: float
    log_big_l: float
    delta0: float
    c1_clamped: bool = False

    def log_r(self, n: int) -> float:
        return 4.0 * (math.log(2.0 / self.gap23) + (n - 1) * math.log(self.c_tilde))

    def r(self, n: int) -> float:
        with np.errstate(over="ignore"):
            val = (2.0 / self.gap23 * self.c_tilde ** (n - 1)) ** 4
        return float(val) if math.isfinite(val) else math.inf

    def log_alpha_n(self, n: int) -> float:
        return _log_alpha(n, self.c2, self.gap23, self.c_tilde, self.c0)

    def log_product_bound(self, n: int) -> float:
        """``log( C~^{N(N-1)} alpha_1 ... alpha_N )``."""
        return n * (n - 1) * math.log(self.c_tilde) + sum(self.log_alpha_n(j) for j in range(1, n + 1))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _r_values(n: int, gap23: float, c_tilde: float) -> tuple[float, float]:
    a = 2.0 / gap23
    log_r = 4.0 * (math.log(a) + (n - 1) * math.log(c_tilde))
    with np.errstate(over="ignore"):
        try:
            r = (a * c_tilde ** (n - 1)) ** 4
        except OverflowError:
            r = math.inf
    return (float(r) if math.isfinite(r) else math.inf), log_r


def _log_alpha(n: int, c2: float, gap23: float, c_tilde: float, c0: float) -> float:
    r_n, log_r_n = _r_values(n, gap23, c_tilde)
    if math.isfinite(r_n):
        gain = c2 * math.sqrt(r_n)
    else:
        gain = math.exp(min(math.log(c2) + 0.5 * log_r_n, 709.0)) if c2 > 0 else 0.0
        if math.log(c2) + 0.5 * log_r_n >= 709.0:
            gain = math.inf
    if n == 1:
        return gain
    r_prev, log_r_prev = _r_values(n - 1, gap23, c_tilde)
    log_decay = math.log(2.0) + log_r_prev + math.log(gap23) - 2.0 * (n - 2) * math.log(c0)
    if math.isfinite(r_prev):
        decay = 2.0 * r_prev * gap23 * c0 ** (-2.0 * (n - 2))
        if math.isfinite(gain):
            return gain - decay
    log_gain = (math.log(c2) + 0.5 * log_r_n) if c2 > 0 else -math.inf
    return _exp_diff(log_gain, log_decay)


def schedule_constants(
    c1: float,
    c2: float,
    seq: DensitySequence,
    lambda1: float = math.pi**2,
    n_cap: int = N_CAP,
) -> ConstantsLedger:
    """Evaluate ``C~``, ``r_N``, ``alpha_N``, ``N_0`` and ``L`` for a density sequence.

    ``C~ = 2 C1 C0^2 / (rho^2 (t2 - t1)^2)``, ``r_N = (2 C~^{N-1} / (t3 - t2))^4``,
    ``alpha_1 = exp(C2 sqrt r_1)`` and for ``N >= 2``
    ``alpha_N = exp(C2 sqrt r_N) exp(-2 r_{N-1} (t3 - t2) C0^{-2(N-2)})``.
    ``N_0 = max(N_1, N_2)`` where ``N_1``/``N_2`` are the first indices from
    which the two decay conditions hold up to ``n_cap``, and
    ``L = max_{N <= N_0} C~^{N(N-1)} alpha_1 ... alpha_N``.

    ``C1 < 1`` is raised to 1 (recorded in ``c1_clamped``).
    """
    if c2 <= 0:
        raise ValueError("C2 must be positive")
    if len(seq.gaps) < 2:
        raise ValueError("density sequence needs at least three points")
    clamped = c1 < 1.0
    c1 = max(float(c1), 1.0)
    gap12, gap23 = float(seq.gaps[0]), float(seq.gaps[1])
    if not gap23 < 1.0:
        raise ValueError(f"t3 - t2 must be < 1, got {gap23}")
    if seq.span > min(lambda1, 1.0) * (1.0 + 1e-12):
        raise ValueError(f"t_tilde - t1 = {seq.span} exceeds min(lambda1, 1) = {min(lambda1, 1.0)}")
    rho, c0 = float(seq.rho), float(seq.c0)
    c_tilde = 2.0 * c1 * (c0 / (rho * gap12)) ** 2
    log_ct = math.log(c_tilde)

    holds1, holds2 = {}, {}
    for n in range(2, n_cap + 1):
        _, log_r_prev = _r_values(n - 1, gap23, c_tilde)
        _, log_r_n = _r_values(n, gap23, c_tilde)
        holds1[n] = math.log(n * (n - 1) * log_ct) <= 0.75 * log_r_prev
        holds2[n] = math.log(c2) + 0.5 * log_r_n <= 0.75 * log_r_prev

    def first_onward(holds: dict) -> int:
        if not holds[n_cap]:
            raise ValueError(f"N0 search exceeded the cap N = {n_cap}")
        n = n_cap
        while n > 2 and holds[n - 1]:
            n -= 1
        return n

    n1, n2 = first_onward(holds1), first_onward(holds2)
    n0 = max(n1, n2)
    r_s, log_r_s, alpha, log_alpha = [], [], [], []
    for n in range(1, n0 + 1):
        r_n, lr = _r_values(n, gap23, c_tilde)
        la = _log_alpha(n, c2, gap23, c_tilde, c0)
        r_s.append(r_n)
        log_r_s.append(lr)
        log_alpha.append(la)
        alpha.append(math.exp(la) if la < 709.0 else math.inf)
    cum = np.cumsum(log_alpha)
    logs = [n * (n - 1) * log_ct + cum[n - 1] for n in range(1, n0 + 1)]
    log_big_l = float(max(logs))
    return ConstantsLedger(
        c1=c1, c2=float(c2), rho=rho, c0=c0, gap12=gap12, gap23=gap23,
        c_tilde=c_tilde,
        r_schedule=tuple(r_s), log_r_schedule=tuple(log_r_s),
        alpha=tuple(alpha), log_alpha=tuple(float(v) for v in log_alpha),
        n0=n0, n1=n1, n2=n2,
        big_l=math.exp(log_big_l) if log_big_l < 709.0 else math.inf,
        log_big_l=log_big_l,
        delta0=float(seq.delta0),
        c1_clamped=clamped,
    )


def practical_schedule(basis: EigenBasis, stages: int, step: int = 4) -> list[float]:
    """``r_N = lambda_{min(M, step * N)}`` for ``N = 1 .. stages``."""
    lam = basis.eigenvalues
    return [float(lam[min(basis.mode_count, step * n) - 1]) for n in range(1, stages + 1)]


# ---------------------------------------------------------------------------
# Staged assembler
# ---------------------------------------------------------------------------


@dataclass
class StageResult:
    index: int
    control_window: tuple[float, float]
    free_window: tuple[float, float]
    r: float
    modes: int
    state_start: SpectralState
    state_controlled: SpectralState
    state_free: SpectralState
    residual: float
    sup_norm: float
    condition: float
    jitter: float
    decay_lhs: float
    decay_rhs: float
    log_bound_product: float | None = None
    log_bound_uniform: float | None = None

    @property
    def free_decay_ok(self) -> bool:
        return self.decay_lhs <= self.decay_rhs

    @property
    def product_bound_ok(self) -> bool | None:
        if self.log_bound_product is None:
            return None
        return 2.0 * _safe_log(self.sup_norm) <= self.log_bound_product

    @property
    def uniform_bound_ok(self) -> bool | None:
        if self.log_bound_uniform is None:
            return None
        return 2.0 * _safe_log(self.sup_norm) <= self.log_bound_uniform

    def summary(self) -> dict:
        return {
            "stage": self.index,
            "control_window": list(self.control_window),
            "free_window": list(self.free_window),
            "r": self.r,
            "modes": self.modes,
            "residual": self.residual,
            "sup_norm": self.sup_norm,
            "condition": self.condition,
            "jitter": self.jitter,
            "state_norm_start": self.state_start.norm(),
            "state_norm_controlled": self.state_controlled.norm(),
            "state_norm_free": self.state_free.norm(),
            "free_decay_ok": self.free_decay_ok,
            "log_bound_product": self.log_bound_product,
            "log_bound_uniform": self.log_bound_uniform,
            "product_bound_ok": self.product_bound_ok,
            "uniform_bound_ok": self.uniform_bound_ok,
        }


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@dataclass
class NullControlResult:
    control: ControlSignal
    stages: list[StageResult]
    final_state: SpectralState
    horizon: float
    delta: float
    initial_norm: float
    trajectory: list[tuple[float, SpectralState]] = field(default_factory=list)
    converged: bool = True

    @property
    def residual(self) -> float:
        return self.final_state.norm()

    @property
    def relative_residual(self) -> float:
        return self.residual / self.initial_norm if self.initial_norm > 0 else 0.0

    @property
    def sup_norm(self) -> float:
        return self.control.sup_norm()


def _resolve_schedule(schedule, basis: EigenBasis, stages: int) -> list[float]:
    if schedule is None or schedule == "practical":
        return practical_schedule(basis, stages)
    if isinstance(schedule, ConstantsLedger):
        return [schedule.r(n) for n in range(1, stages + 1)]
    rates = [float(v) for v in schedule]
    if len(rates) < stages:
        raise ValueError(f"schedule gives {len(rates)} rates for {stages} stages")
    if any(b <= a for a, b in zip(rates, rates[1:stages])):
        raise ValueError("schedule must be strictly increasing")
    return rates[:stages]


def iterative_null_control(
    y0: SpectralState,
    E: TimeSet,
    T: float,
    delta: float,
    seq: DensitySequence,
    G: OmegaGramian,
    schedule=None,
    stop_tol: float = 1e-8,
    max_stages: int | None = None,
    ledger: ConstantsLedger | None = None,
) -> NullControlResult:
    """Steer ``y0`` to (numerically) zero at ``T - delta`` with controls on ``E_delta``.

    The density sequence (built on ``E``) is shifted by ``delta``.  The state
    evolves freely up to ``t_{1,delta}``; then on every ``I_N`` a
    finite-rank control annihilates the modes with ``lambda <= r_N`` and on
    every ``J_N`` the state evolves freely.  The loop stops once
    ``||y(t_{2N+1})|| <= stop_tol ||y0||`` or after ``max_stages`` stages,
    and the control is extended by zero up to ``T - delta``.

    Parameters
    ----------
    schedule : None, "practical", ConstantsLedger or sequence of floats
        Frequency cut-offs ``r_N``.  ``None`` uses
        ``r_N = lambda_{min(M, 4N)}``; a ledger supplies the literal
        (usually astronomically large) schedule.
    ledger : ConstantsLedger, optional
        When given, each stage reports the product bound and the uniform
        bound ``L ||y~0||^2`` next to the measured squared sup norm.

    Returns
    -------
    NullControlResult
    """
    basis = y0.basis
    T, delta = float(T), float(delta)
    allowed = seq.delta0 - seq.offset
    if delta < 0 or delta > allowed * (1.0 + 1e-14):
        raise ValueError(f"delta must lie in [0, {allowed}], got {delta}")
    E_d = shift(E, delta)
    seq_d = seq.shifted(delta)
    check = verify_density_sequence(seq_d, E_d)
    if not check.ok:
        raise ValueError(f"density sequence does not match the shifted time set: {check.failures}")
    horizon = T - delta
    if seq_d.t_tilde > horizon:
        raise ValueError("density sequence extends past the horizon")
    n_avail = seq_d.max_stages
    n_max = n_avail if max_stages is None else min(int(max_stages), n_avail)
    if n_max < 1:
        raise ValueError("density sequence too short for a single stage")
    rates = _resolve_schedule(schedule, basis, n_max)
    M = basis.mode_count
    y0_norm = y0.norm()

    grid = [0.0]
    rows: list[np.ndarray] = []
    row_rates: list[np.ndarray] = []
    t1 = float(seq_d.points[0])
    trajectory = [(0.0, y0)]
    stages: list[StageResult] = []
    if y0_norm == 0.0:
        control = ControlSignal(np.array([0.0, horizon]), np.zeros((1, M)), E_d)
        return NullControlResult(control, [], y0, horizon, delta, 0.0, trajectory + [(horizon, y0)])

    state = free_evolve(y0, t1)
    if t1 > 0:
        grid.append(t1)
        rows.append(np.zeros(M))
        row_rates.append(np.zeros(M))
        trajectory.append((t1, state))
    y_tilde_norm = state.norm()
    zero = np.zeros(M)
    for n in range(1, n_max + 1):
        (a, b), (_, c) = seq_d.stage_windows(n)
        r_n = rates[n - 1]
        fr = finite_rank_control(state, r_n, (a, b), E_d, G)
        y_b = fr.final_state
        z_c = free_evolve(y_b, c - b)
        lhs = z_c.norm() ** 2
        rhs = math.exp(-2.0 * min(r_n, 1e300) * (c - b)) * y_b.norm() ** 2 * (1.0 + 1e-10)
        stage = StageResult(
            index=n, control_window=(a, b), free_window=(b, c), r=r_n, modes=fr.modes,
            state_start=state, state_controlled=y_b, state_free=z_c,
            residual=fr.residual, sup_norm=fr.sup_norm, condition=fr.condition,
            jitter=fr.jitter, decay_lhs=lhs, decay_rhs=rhs,
        )
        if ledger is not None and y_tilde_norm > 0:
            log_y = 2.0 * math.log(y_tilde_norm)
            stage.log_bound_product = ledger.log_product_bound(n) + log_y
            stage.log_bound_uniform = ledger.log_big_l + log_y
        stages.append(stage)
        grid += [b, c]
        rows += [fr.control.coefficients[0], zero]
        row_rates += [fr.control.rates[0], zero]
        trajectory += [(b, y_b), (c, z_c)]
        state = z_c
        if z_c.norm() <= stop_tol * y0_norm:
            break
    t_last = grid[-1]
    if horizon > t_last:
        grid.append(horizon)
        rows.append(zero)
        row_rates.append(zero)
    final = free_evolve(state, horizon - t_last)
    trajectory.append((horizon, final))
    control = ControlSignal(np.array(grid), np.array(rows), E_d, np.array(row_rates))
    converged = final.norm() <= stop_tol * y0_norm
    if not converged:
        warnings.warn(
            f"null control stopped after {len(stages)} stages with relative residual "
            f"{final.norm() / y0_norm:.3e} > {stop_tol:.1e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return NullControlResult(control, stages, final, horizon, delta, y0_norm, trajectory, converged)


def null_control_gain(
    E: TimeSet,
    T: float,
    delta: float,
    seq: DensitySequence,
    G: OmegaGramian,
    schedule=None,
    stages: int = 6,
) -> float:
    """Operator-norm constant ``L`` of the staged assembler on the retained modes.

    With a fixed number of stages the assembler is linear in its input, so
    ``sup_t ||u(t)||^2 <= L ||y0||^2`` holds with
    ``L = max_N ||U_N||_2^2`` where ``U_N`` maps ``y0`` to the control value
    at the last support point of ``I_N`` (where the sup is attained).
    """
    basis = G.basis
    M = basis.mode_count
    cols = []
    n_run = min(stages, seq.shifted(delta).max_stages)
    for i in range(1, M + 1):
        res = _run_quiet(SpectralState.unit(basis, i), E, T, delta, seq, G, schedule, stages)
        cols.append(_stage_peak_values(res, n_run))
    best = 0.0
    for s in range(n_run):
        U = np.column_stack([c[s] for c in cols])
        best = max(best, float(np.linalg.norm(U, 2)) ** 2)
    return best


def _run_quiet(y0, E, T, delta, seq, G, schedule, stages) -> NullControlResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return iterative_null_control(y0, E, T, delta, seq, G, schedule=schedule,
                                      stop_tol=0.0, max_stages=stages)


def _stage_peak_values(res: NullControlResult, stages: int) -> list[np.ndarray]:
    """Control value at the last support point of every ``I_N`` (zero for stages not run)."""
    u = res.control
    g = u.time_grid
    out = []
    for n in range(stages):
        if n >= len(res.stages):
            out.append(np.zeros(u.M))
            continue
        a, b = res.stages[n].control_window
        k = int(np.searchsorted(g, b)) - 1
        comps = u.support.clip(a, b)
        last = comps[-1, 1] if len(comps) else b
        out.append(u.coefficients[k] * np.exp(-u.rates[k] * (g[k + 1] - last)))
    return out


@dataclass
class DeltaInvarianceReport:
    deltas: list[float]
    ledgers: list[ConstantsLedger]
    mismatches: list[tuple[float, str]]

    @property
    def identical(self) -> bool:
        return not self.mismatches


def delta_invariance_check(
    seq: DensitySequence,
    c1: float,
    c2: float,
    deltas: Sequence[float],
    lambda1: float = math.pi**2,
) -> DeltaInvarianceReport:
    """Recompute the ledger on each shifted sequence and compare field by field (``==``)."""
    base = schedule_constants(c1, c2, seq, lambda1)
    ledgers, mismatches = [], []
    for d in deltas:
        led = schedule_constants(c1, c2, seq.shifted(d), lambda1)
        ledgers.append(led)
        for f in fields(ConstantsLedger):
            if getattr(led, f.name) != getattr(base, f.name):
                mismatches.append((float(d), f.name))
    return DeltaInvarianceReport([float(d) for d in deltas], ledgers, mismatches)
