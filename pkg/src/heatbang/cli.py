"""Command-line front end: ``heatbang <subcommand> --config run.toml --out DIR``.

Exit codes: 0 success, 2 invalid configuration or violated precondition,
3 solver non-convergence, 4 non-admissibility.  Every run writes
``summary.json`` (deterministic), CSV tables, ``plot.dat`` and a
``manifest.json`` with timestamps, timings and the file index.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .nullcontrol import (
    delta_invariance_check,
    iterative_null_control,
    schedule_constants,
)
from .observability import (
    fit_spectral_constants,
    observability_constant_L1,
    observability_constant_quadratic,
)
from .report import SCHEMA_VERSION, write_csv, write_json, write_manifest, write_plot_data
from .spectral import (
    ControlSignal,
    OmegaGramian,
    SpectralState,
    build_basis,
    evolve_controlled,
    omega_gramian,
    project_function,
)
from .timeoptimal import (
    ControlConstraint,
    NonConvergenceError,
    NotAdmissibleError,
    TargetSet,
    bang_bang_report,
    improve_control,
    min_norm_control,
    min_sup_norm,
    optimal_time,
)
from .timesets import TimeSet, build_density_sequence, shift, verify_density_sequence

__all__ = ["main", "run_subcommand", "Outcome", "COMMANDS", "EXIT_CODES"]

log = logging.getLogger("heatbang")

EXIT_CODES = {"ok": 0, "invalid": 2, "not_converged": 3, "not_admissible": 4}


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file name -> (header, rows)
    curves: list = field(default_factory=list)
    headline: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    reason: str | None = None


@contextmanager
def _timed(out: Outcome, name: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        out.timings[name] = time.perf_counter() - t0
        log.info("%s took %.3f s", name, out.timings[name])


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    G: OmegaGramian
    E: TimeSet
    T: float
    y0: SpectralState

    @property
    def basis(self):
        return self.G.basis


def _initial_state(cfg: RunConfig, basis) -> SpectralState:
    p = cfg["problem"]
    M = basis.mode_count
    spec = p["y0"]
    if isinstance(spec, list):
        return SpectralState(np.asarray(spec, dtype=float) * p["y0_scale"], basis)
    if spec == "random":
        rng = np.random.default_rng([cfg.seed, 1])
        a = rng.standard_normal(M) / np.arange(1, M + 1)
    elif spec == "first_mode":
        a = np.zeros(M)
        a[0] = 1.0
    elif spec == "decaying":
        a = 1.0 / np.arange(1, M + 1) ** 2
    else:  # bump
        L = basis.length
        a = project_function(basis, lambda x: x * (L - x)).coefficients
    return SpectralState(p["y0_scale"] * a / np.linalg.norm(a), basis)


def build_problem(cfg: RunConfig) -> Problem:
    p = cfg["problem"]
    basis = build_basis(p["modes"], p["length"])
    G = omega_gramian(basis, p["omega"])
    E = TimeSet.from_pairs(p["E"], p["T"])
    return Problem(G, E, p["T"], _initial_state(cfg, basis))


def _sequence(cfg: RunConfig, E: TimeSet, lambda1: float):
    s = cfg["solver"]
    anchor = None if s["anchor"] == "longest" else s["anchor"]
    return build_density_sequence(E, s["q"], s["depth"], anchor, s["start_fraction"], s["margin"], lambda1)


def _spectral_constants(cfg: RunConfig, G: OmegaGramian) -> tuple[float, float, str]:
    s = cfg["solver"]
    if s["c1"] is not None and s["c2"] is not None:
        return s["c1"], s["c2"], "config"
    fit = fit_spectral_constants(G, G.basis.eigenvalues[: s["r_modes"]])
    c1 = s["c1"] if s["c1"] is not None else fit.c1_hat
    c2 = s["c2"] if s["c2"] is not None else fit.c2_hat
    return c1, c2, "fit"


def _bound(cfg: RunConfig) -> ControlConstraint:
    c = cfg["constraint"]
    return ControlConstraint(c["R"], None if c["v0"] is None else np.asarray(c["v0"]))


def _target(cfg: RunConfig) -> TargetSet:
    c = cfg["constraint"]
    center = None if c["target_center"] is None else np.asarray(c["target_center"])
    return TargetSet(center, c["target_radius"])


def _state_trace(y0: SpectralState, parts, G: OmegaGramian, ts: np.ndarray) -> np.ndarray:
    norms = [y0.norm()]
    y = y0
    for a, b in zip(ts[:-1], ts[1:]):
        y = evolve_controlled(y, parts, None, G, (a, b))
        norms.append(y.norm())
    return np.array(norms)


def _step_curve(grid: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-constant values drawn as a staircase."""
    return np.repeat(grid, 2)[1:-1], np.repeat(vals, 2)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_constants(cfg: RunConfig) -> Outcome:
    out = Outcome()
    prob = build_problem(cfg)
    lam1 = prob.basis.lambda1
    with _timed(out, "sequence"):
        seq = _sequence(cfg, prob.E, lam1)
        rep = verify_density_sequence(seq, prob.E)
    delta = cfg["solver"]["delta"]
    if delta > seq.delta0:
        raise ConfigError(f"[solver] delta = {delta} exceeds delta0 = t_1 = {seq.delta0}")
    with _timed(out, "constants"):
        c1, c2, source = _spectral_constants(cfg, prob.G)
        ledger = schedule_constants(c1, c2, seq.shifted(delta), lam1)
        inv = delta_invariance_check(seq, c1, c2, [0.0, 0.5 * seq.delta0, seq.delta0], lam1)
    out.results = {
        "ledger": ledger.to_dict(),
        "constants_source": source,
        "delta": delta,
        "sequence": {
            "points": seq.points,
            "t_tilde": seq.t_tilde,
            "rho": seq.rho,
            "c0": seq.c0,
            "delta0": seq.delta0,
        },
        "verification": {
            "ok": rep.ok,
            "tightest_rho": rep.tightest_rho,
            "tightest_c0": rep.tightest_c0,
            "failures": [list(f) for f in rep.failures],
        },
        "delta_invariance": {"deltas": inv.deltas, "mismatches": [list(m) for m in inv.mismatches]},
    }
    out.invariants = {"density_sequence_verified": bool(rep.ok), "delta_invariant": inv.identical}
    rows = [[n, ledger.log_r_schedule[n - 1], ledger.r_schedule[n - 1], ledger.log_alpha[n - 1], ledger.alpha[n - 1]]
            for n in range(1, len(ledger.r_schedule) + 1)]
    out.tables["schedule.csv"] = (["N", "log_r", "r", "log_alpha", "alpha"], rows)
    ns = np.arange(1, len(ledger.r_schedule) + 1, dtype=float)
    out.curves.append(("N_vs_log_r", "N", "log_r_N", ns, np.array(ledger.log_r_schedule)))
    out.headline = {
        "L": ledger.big_l,
        "log_L": ledger.log_big_l,
        "c_tilde": ledger.c_tilde,
        "r_1": ledger.r_schedule[0] if ledger.r_schedule else None,
        "n0": ledger.n0,
    }
    return out


def cmd_null_control(cfg: RunConfig) -> Outcome:
    out = Outcome()
    prob = build_problem(cfg)
    s = cfg["solver"]
    lam1 = prob.basis.lambda1
    seq = _sequence(cfg, prob.E, lam1)
    delta = s["delta"]
    if delta > seq.delta0:
        raise ConfigError(f"[solver] delta = {delta} exceeds delta0 = t_1 = {seq.delta0}")
    c1, c2, source = _spectral_constants(cfg, prob.G)
    ledger = schedule_constants(c1, c2, seq, lam1)
    schedule = ledger if s["schedule"] == "literal" else None
    with _timed(out, "null_control"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        res = iterative_null_control(prob.y0, prob.E, prob.T, delta, seq, prob.G, schedule=schedule,
                                     stop_tol=s["stop_tol"], max_stages=s["max_stages"], ledger=ledger)
    t_end = prob.T - delta
    with _timed(out, "resimulation"):
        y_re = evolve_controlled(prob.y0, res.control, None, prob.G, (0.0, t_end))
        resim = float((y_re - res.final_state).norm())
    out.results = {
        "initial_norm": res.initial_norm,
        "final_norm": res.residual,
        "relative_residual": res.relative_residual,
        "sup_norm": res.sup_norm,
        "converged": res.converged,
        "horizon": res.horizon,
        "delta": delta,
        "schedule": s["schedule"],
        "constants_source": source,
        "c1": c1,
        "c2": c2,
        "stages": [st.summary() for st in res.stages],
        "resimulation_difference": resim,
        "warnings": [str(w.message) for w in caught],
    }
    out.invariants = {
        "free_decay_all_stages": all(st.free_decay_ok for st in res.stages),
        "resimulation_matches": resim <= 1e-12 * max(1.0, res.initial_norm),
        "converged": res.converged,
    }
    out.tables["stages.csv"] = (
        ["stage", "r", "modes", "control_start", "control_end", "residual", "sup_norm", "condition",
         "state_norm_start", "state_norm_free", "free_decay_ok"],
        [[st.index, st.r, st.modes, st.control_window[0], st.control_window[1], st.residual, st.sup_norm,
          st.condition, st.state_start.norm(), st.state_free.norm(), st.free_decay_ok] for st in res.stages],
    )
    u = res.control
    ts = np.unique(np.concatenate([np.linspace(0.0, t_end, 401), u.time_grid[(u.time_grid >= 0) & (u.time_grid <= t_end)]]))
    with _timed(out, "trace"):
        u_norm = np.linalg.norm(u.values(ts, effective=True), axis=1)
        y_norm = _state_trace(prob.y0, u, prob.G, ts)
    out.tables["trace.csv"] = (["t", "u_norm", "y_norm"], [[a, b, c] for a, b, c in zip(ts, u_norm, y_norm)])
    out.curves += [("t_vs_u_norm", "t", "norm_u", ts, u_norm), ("t_vs_y_norm", "t", "norm_y", ts, y_norm)]
    out.headline = {"relative_residual": res.relative_residual, "sup_norm": res.sup_norm, "stages": len(res.stages)}
    if not res.converged:
        out.status, out.reason = "not_converged", (
            f"relative residual {res.relative_residual:.3e} above stop_tol after {len(res.stages)} stages")
    return out


def cmd_time_optimal(cfg: RunConfig) -> Outcome:
    out = Outcome()
    prob = build_problem(cfg)
    s, c = cfg["solver"], cfg["constraint"]
    E = None if c["full_time"] else prob.E
    bound, target = _bound(cfg), _target(cfg)
    with _timed(out, "optimal_time"):
        res = optimal_time(prob.y0, target, bound, E, prob.G, s["K"], tol=s["tol"], tol_T=s["tol_T"],
                           T_init=s["T_init"], T_cap=s["T_cap"], seed=cfg.seed, band=s["band"],
                           max_iter=s["max_iter"])
    out.results = res.summary()
    bb = res.bang_bang
    out.invariants = {
        "target_reached": res.residual <= s["tol"],
        "bang_bang_95": None if bb is None else bb.fraction >= 0.95,
    }
    header = ["step", "t_start", "t_end", "u_norm", "u_omega_norm", "y_norm_end"]
    if res.control is None:
        out.tables["steps.csv"] = (header, [])
        out.curves.append(("t_vs_y_norm", "t", "norm_y", np.zeros(1), np.array([prob.y0.norm()])))
    else:
        u = res.control
        g = u.time_grid
        with _timed(out, "trace"):
            y_norm = _state_trace(prob.y0, u, prob.G, g)
        out.tables["steps.csv"] = (header, [[k, g[k], g[k + 1], res.step_norms[k], res.omega_norms[k], y_norm[k + 1]]
                                            for k in range(u.K)])
        out.curves += [("t_vs_u_norm", "t", "norm_u", *_step_curve(g, res.step_norms)),
                       ("t_vs_y_norm", "t", "norm_y", g, y_norm)]
    out.headline = {"T_star": res.T_star, "bang_bang_fraction": None if bb is None else bb.fraction}
    return out


def _minimal_norm_at_T(cfg: RunConfig) -> Outcome:
    """Sweep member for a ``T`` axis: ``N(T)`` and the bang-bang share of the minimal-norm control."""
    out = Outcome()
    prob = build_problem(cfg)
    s, c = cfg["solver"], cfg["constraint"]
    T = prob.T
    E = TimeSet.full(T) if c["full_time"] else prob.E
    bound, target = _bound(cfg), _target(cfg)
    v0 = bound.center_vector(prob.basis.mode_count)
    with _timed(out, "min_sup_norm"):
        N, _ = min_sup_norm(T, prob.y0, target, E, prob.G, s["K"], tol=s["tol"], v0=v0, seed=cfg.seed)
        u, dist = min_norm_control(T, prob.y0, target, E, prob.G, s["K"], v0)
    frac = bang_bang_report(u, bound, s["band"]).fraction if bound.radius > 0 else None
    out.results = {"N_T": N, "min_norm_distance": dist, "min_norm_bang_bang_fraction": frac}
    out.headline = {"N_T": N, "min_norm_bang_bang_fraction": frac}
    return out


def cmd_observability(cfg: RunConfig) -> Outcome:
    out = Outcome()
    prob = build_problem(cfg)
    s = cfg["solver"]
    delta = s["delta"]
    if delta >= prob.T:
        raise ConfigError("[solver] delta must be below [problem] T")
    E, T = (shift(prob.E, delta), prob.T - delta) if delta > 0 else (prob.E, prob.T)
    if E.is_empty:
        raise ConfigError(f"E shifted by {delta} is empty")
    with _timed(out, "quadratic"):
        quad = observability_constant_quadratic(E, prob.G, T)
    with _timed(out, "L1"):
        l1 = observability_constant_L1(E, prob.G, T, iterations=s["l1_iterations"], starts=s["l1_starts"],
                                       seed=cfg.seed, panels=s["panels"])
    out.results = {
        "delta": delta,
        "horizon": T,
        "L_quad": quad.value,
        "quad_iterations": quad.iterations,
        "quad_converged": quad.converged,
        "quad_residual": quad.residual,
        "L1_lower_bound": l1.value,
        "L1_iterations": l1.iterations,
        "L1_converged": l1.converged,
        "L1_start_values": l1.history,
    }
    out.invariants = {"quad_converged": quad.converged}
    lam = prob.basis.eigenvalues
    out.tables["witness.csv"] = (["mode", "lambda", "p_quad", "p_L1"],
                                 [[i + 1, lam[i], quad.witness[i], l1.witness[i]] for i in range(len(lam))])
    ts = np.linspace(0.0, T, 401)
    P = np.exp(-np.outer(T - ts, lam)) * l1.witness[None, :]
    obs = np.sqrt(np.maximum(np.einsum("ti,ij,tj->t", P, prob.G.matrix, P), 0.0)) * E.contains(ts)
    out.curves.append(("t_vs_observed_adjoint", "t", "norm_chi_omega_p", ts, obs))
    out.headline = {"L_quad": quad.value, "L1_lower_bound": l1.value}
    return out


def cmd_spectral_ineq(cfg: RunConfig) -> Outcome:
    out = Outcome()
    prob = build_problem(cfg)
    s = cfg["solver"]
    G = prob.G
    r_grid = prob.basis.eigenvalues[: s["r_modes"]]
    with _timed(out, "fit"):
        fit = fit_spectral_constants(G, r_grid)
    rng = np.random.default_rng([cfg.seed, 3])
    worst = -math.inf
    with _timed(out, "random_trials"):
        for r, C in zip(fit.r_grid, fit.constants):
            m = int(np.searchsorted(prob.basis.eigenvalues, r, side="right"))
            A = rng.standard_normal((s["trials"], m))
            lhs = np.sum(A * A, axis=1)
            rhs = C * np.einsum("ti,ij,tj->t", A, G.matrix[:m, :m], A)
            if len(lhs):
                worst = max(worst, float(np.max(lhs - rhs)))
    out.results = {"fit": fit.to_dict(), "trials_per_r": s["trials"], "worst_violation": worst}
    out.invariants = {
        "monotone": fit.monotone,
        "c2_positive": fit.c2_hat > 0,
        "no_violation": None if s["trials"] == 0 else worst <= 1e-12,
    }
    sq = np.sqrt(fit.r_grid)
    logc = np.log(fit.constants)
    fitted = math.log(fit.c1_raw) + fit.c2_hat * sq
    out.tables["spectral.csv"] = (["r", "sqrt_r", "C", "log_C", "log_C_fit"],
                                  [[a, b, c, d, e] for a, b, c, d, e in zip(fit.r_grid, sq, fit.constants, logc, fitted)])
    out.curves += [("sqrt_r_vs_log_C", "sqrt_r", "log_C", sq, logc), ("sqrt_r_vs_log_C_fit", "sqrt_r", "log_C_fit", sq, fitted)]
    out.headline = {"C_r_max": float(fit.constants[-1]), "c2_hat": fit.c2_hat, "fit_residual": fit.residual}
    return out


def _slack_profile(cfg: RunConfig, prob: Problem, E_slack: TimeSet) -> ControlSignal:
    """Admissible, non-bang-bang control: norm ``0.9 R`` off ``E_slack``, ``min(R/2, R - eps)`` on it."""
    s, c, imp = cfg["solver"], cfg["constraint"], cfg["improve"]
    R, eps, K, M = c["R"], imp["eps"], s["K"], prob.basis.mode_count
    if not 0 < eps <= R:
        raise ConfigError("[improve] eps must lie in (0, R]")
    g = np.linspace(0.0, prob.T, K + 1)
    rng = np.random.default_rng([cfg.seed, 2])
    C = rng.standard_normal((K, M))
    C /= np.linalg.norm(C, axis=1)[:, None]
    touches = np.array([E_slack.measure_in(g[k], g[k + 1]) > 0 for k in range(K)])
    C *= np.where(touches, min(0.5 * R, R - eps), 0.9 * R)[:, None]
    return ControlSignal(g, C + _bound(cfg).center_vector(M)[None, :])


def cmd_improve(cfg: RunConfig) -> Outcome:
    out = Outcome()
    prob = build_problem(cfg)
    s, imp = cfg["solver"], cfg["improve"]
    E_slack = TimeSet.from_pairs(imp["E_slack"], prob.T)
    u_star = _slack_profile(cfg, prob, E_slack)
    bound = _bound(cfg)
    try:
        with _timed(out, "improve"):
            res = improve_control(u_star, prob.T, prob.y0, bound, E_slack, imp["eps"], prob.G,
                                  stages=s["max_stages"], stop_tol=min(s["stop_tol"], 1e-12))
    except ValueError as exc:
        raise NotAdmissibleError(str(exc)) from exc
    R = bound.radius
    out.results = res.summary() | {"E_slack_measure": E_slack.measure, "radius": R}
    out.invariants = {
        "delta_positive": res.delta > 0,
        "reconstruction_1e-6": res.reconstruction_error <= 1e-6,
        "within_radius": res.certified_bound <= R + 1e-9,
    }
    v0 = bound.center_vector(prob.basis.mode_count)
    ts = np.linspace(0.0, prob.T - res.delta, 1001)
    vals = sum(p.values(ts, effective=True) for p in res.v_delta) - v0
    v_norm = np.linalg.norm(vals, axis=1)
    u_norm = np.linalg.norm(u_star.values(ts) - v0, axis=1)
    out.tables["control.csv"] = (["t", "v_delta_norm", "u_star_norm"], [[a, b, c] for a, b, c in zip(ts, v_norm, u_norm)])
    out.curves += [("t_vs_v_delta_norm", "t", "norm_v", ts, v_norm), ("t_vs_u_star_norm", "t", "norm_u", ts, u_norm)]
    out.headline = {"delta": res.delta, "reconstruction_error": res.reconstruction_error}
    if not res.admissible:
        out.status, out.reason = "not_admissible", f"certified bound {res.certified_bound:.6g} exceeds R = {R}"
    return out


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

HEADLINES = {
    "constants": ["L", "log_L", "c_tilde", "r_1", "n0"],
    "null-control": ["relative_residual", "sup_norm", "stages"],
    "time-optimal": ["T_star", "bang_bang_fraction"],
    "observability": ["L_quad", "L1_lower_bound"],
    "spectral-ineq": ["C_r_max", "c2_hat", "fit_residual"],
}


def _member_config(base: dict, axis: str, value: float) -> RunConfig:
    d = copy.deepcopy(base)
    if axis == "delta":
        d["solver"]["delta"] = value
    elif axis == "R":
        d["constraint"]["R"] = value
    elif axis == "M":
        if int(value) != value:
            raise ConfigError(f"mode count {value} is not an integer")
        d["problem"]["modes"] = int(value)
        d["solver"]["r_modes"] = min(d["solver"]["r_modes"], int(value))
    elif axis == "T":
        d["problem"]["T"] = value
        for sec, key in (("problem", "E"), ("improve", "E_slack")):
            d[sec][key] = [[a, min(b, value)] for a, b in d[sec][key] if a < value]
    elif axis == "omega_width":
        a, b = d["problem"]["omega"]
        mid = 0.5 * (a + b)
        d["problem"]["omega"] = [mid - 0.5 * value, mid + 0.5 * value]
    return parse_config(d)


def _sweep_member(payload: tuple) -> dict:
    base, command, axis, value = payload
    row = {"value": value, "status": "ok", "reason": None}
    try:
        cfg = _member_config(base, axis, value)
        if command == "time-optimal" and axis == "T":
            oc = _minimal_norm_at_T(cfg)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                oc = COMMANDS[command](cfg)
        row.update(oc.headline)
        row["status"], row["reason"] = oc.status, oc.reason
    except ConfigError as exc:
        row["status"], row["reason"] = "invalid", str(exc)
    except NotAdmissibleError as exc:
        row["status"], row["reason"] = "not_admissible", str(exc)
    except NonConvergenceError as exc:
        row["status"], row["reason"] = "not_converged", str(exc)
    except Exception as exc:  # recorded per row; the sweep keeps going
        row["status"], row["reason"] = "invalid", f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(cfg: RunConfig, workers: int | None = None) -> Outcome:
    out = Outcome()
    sw = cfg["sweep"]
    command, axis, values = sw["command"], sw["axis"], sw["values"]
    keys = ["N_T", "min_norm_bang_bang_fraction"] if (command == "time-optimal" and axis == "T") else HEADLINES[command]
    base = cfg.snapshot()
    payloads = [(base, command, axis, v) for v in values]
    workers = max(1, min(workers or os.cpu_count() or 1, len(values)))
    with _timed(out, "sweep"):
        if workers == 1:
            rows = [_sweep_member(p) for p in payloads]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_sweep_member, payloads))
    header = ["index", axis, "status", "reason"] + keys
    out.tables["sweep.csv"] = (header, [[i, r["value"], r["status"], r["reason"]] + [r.get(k) for k in keys]
                                        for i, r in enumerate(rows)])
    out.results = {"command": command, "axis": axis, "rows": rows}
    ok = [r for r in rows if r["status"] == "ok"]
    inv: dict = {"all_members_ok": len(ok) == len(rows)}
    if command == "constants" and axis == "delta":
        inv["L_identical"] = len({repr(r["L"]) for r in ok}) <= 1
    if command == "time-optimal" and axis == "T" and len(ok) > 1:
        order = sorted(ok, key=lambda r: r["value"])
        n = [r["N_T"] for r in order]
        inv["N_T_nonincreasing"] = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(n, n[1:]))
    out.invariants = inv
    xs = np.array([r["value"] for r in ok], dtype=float)
    for k in keys:
        ys = np.array([np.nan if r.get(k) is None else r[k] for r in ok], dtype=float)
        out.curves.append((f"{axis}_vs_{k}", axis, k, xs, ys))
    return out


COMMANDS = {
    "constants": cmd_constants,
    "null-control": cmd_null_control,
    "time-optimal": cmd_time_optimal,
    "observability": cmd_observability,
    "spectral-ineq": cmd_spectral_ineq,
    "improve": cmd_improve,
}

# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def run_subcommand(name: str, cfg: RunConfig, out_dir: Path, workers: int | None = None) -> int:
    """Run one subcommand, write its artefacts to ``out_dir`` and return the exit code."""
    started = _now()
    t0 = time.perf_counter()
    try:
        oc = cmd_sweep(cfg, workers) if name == "sweep" else COMMANDS[name](cfg)
    except NotAdmissibleError as exc:
        oc = Outcome(status="not_admissible", reason=str(exc), results={"details": exc.details})
    except NonConvergenceError as exc:
        oc = Outcome(status="not_converged", reason=str(exc))
    except (ConfigError, ValueError) as exc:
        oc = Outcome(status="invalid", reason=str(exc))
    code = EXIT_CODES[oc.status]
    formats = cfg["output"]["formats"]
    snapshot = {k: v for k, v in cfg.snapshot().items() if k != "output"}
    files = []
    if "json" in formats:
        write_json(out_dir / "summary.json", {
            "schema_version": SCHEMA_VERSION,
            "artifact_version": __version__,
            "command": name,
            "status": oc.status,
            "exit_code": code,
            "reason": oc.reason,
            "seed": cfg.seed,
            "config": snapshot,
            "results": oc.results,
            "invariants": oc.invariants,
        })
        files.append("summary.json")
    if "csv" in formats:
        for fname, (header, rows) in oc.tables.items():
            write_csv(out_dir / fname, header, rows)
            files.append(fname)
    if "plot" in formats and oc.curves:
        write_plot_data(out_dir / "plot.dat", oc.curves)
        files.append("plot.dat")
    write_manifest(out_dir, {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "command": name,
        "status": oc.status,
        "exit_code": code,
        "reason": oc.reason,
        "started": started,
        "finished": _now(),
        "wall_time": time.perf_counter() - t0,
        "timings": oc.timings,
        "invariants": oc.invariants,
        "config": cfg.snapshot(),
        "files": files,
    })
    level = logging.INFO if code == 0 else logging.WARNING
    log.log(level, "%s finished with status %s%s", name, oc.status, f": {oc.reason}" if oc.reason else "")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatbang", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*COMMANDS, "sweep"]:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="TOML run configuration")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] directory)")
        p.add_argument("--seed", type=int, default=None, help="overrides [solver] seed")
        p.add_argument("--workers", type=int, default=None, help="sweep pool width (default: CPU count)")
        p.add_argument("--verbose", "-v", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(solver={"seed": args.seed})
        if args.out is not None:
            cfg = cfg.with_overrides(output={"directory": str(args.out)})
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            write_manifest(args.out, {
                "schema_version": SCHEMA_VERSION, "artifact_version": __version__, "command": args.command,
                "status": "invalid", "exit_code": 2, "reason": str(exc), "started": _now(),
                "finished": _now(), "timings": {}, "invariants": {}, "config": None, "files": [],
            })
        return EXIT_CODES["invalid"]
    out_dir = Path(cfg["output"]["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    return run_subcommand(args.command, cfg, out_dir, args.workers)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
