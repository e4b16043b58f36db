"""Acceptance suite: twelve end-to-end criteria at their stated tolerances.

Each test records one ``criterion N: PASS|FAIL`` line and then asserts; the
lines are printed in the pytest terminal summary (see ``conftest.py``).
"""

import filecmp
import math
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from heatbang import (
    ControlSignal,
    SpectralState,
    TimeSet,
    adjoint_solve,
    build_basis,
    build_density_sequence,
    evolve_controlled,
    finite_rank_control,
    iterative_null_control,
    omega_gramian,
    project,
    schedule_constants,
)
from heatbang.nullcontrol import delta_invariance_check
from heatbang.observability import fit_spectral_constants, spectral_ineq_constant
from heatbang.timeoptimal import (
    ControlConstraint,
    TargetSet,
    bang_bang_report,
    improve_control,
    min_norm_control,
    min_sup_norm,
    uniqueness_check,
)

ROOT = Path(__file__).resolve().parents[1]
OMEGA = (0.3, 0.8)


RESULTS: list[str] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    assert ok, line


def two_piece(T=1.0):
    return TimeSet.from_pairs([(0.0, 0.4), (0.6, 1.0)], T)


# --------------------------------------------------------------------------- 1
def _pairing_rhs(u, E, G, phi_T, T):
    lam = G.basis.eigenvalues
    g = u.time_grid
    total = 0.0
    for k in range(u.K):
        for lo, hi in E.clip(g[k], g[k + 1]):
            w = (np.exp(-lam * (T - hi)) - np.exp(-lam * (T - lo))) / lam
            total += float((G.matrix @ u.coefficients[k]) @ (w * phi_T.coefficients))
    return total


def test_criterion_01_duality_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        M = int(rng.integers(1, 33))
        B = build_basis(M)
        a = rng.uniform(0.0, 0.9)
        G = omega_gramian(B, (a, rng.uniform(a + 0.05, 1.0)))
        T = rng.uniform(0.2, 2.0)
        cuts = np.sort(rng.uniform(0, T, 4))
        E = TimeSet.from_pairs([(cuts[0], cuts[1]), (cuts[2], cuts[3])], T)
        K = int(rng.integers(1, 12))
        u = ControlSignal(np.linspace(0, T, K + 1), rng.standard_normal((K, M)))
        y0 = SpectralState(rng.standard_normal(M), B)
        phi_T = SpectralState(rng.standard_normal(M), B)
        yT = evolve_controlled(y0, u, E, G)
        lhs = yT.coefficients @ phi_T.coefficients - y0.coefficients @ adjoint_solve(phi_T, T, 0.0).coefficients
        rhs = _pairing_rhs(u, E, G, phi_T, T)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-10 and dt < 5.0, f"worst relative mismatch {worst:.2e}, runtime {dt:.2f} s")


# --------------------------------------------------------------------------- 2
def test_criterion_02_finite_rank_annihilation():
    B = build_basis(64)
    G = omega_gramian(B, OMEGA)
    E = two_piece()
    r = B.eigenvalues[15]
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        y0 = SpectralState(rng.standard_normal(64), B)
        fr = finite_rank_control(y0, r, (0.0, 1.0), E, G)
        yT = evolve_controlled(y0, fr.control, None, G, (0.0, 1.0))
        worst = max(worst, project(yT, r).norm() / y0.norm())
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-8 and dt < 10.0, f"worst ||P_r y(T)||/||y0|| = {worst:.2e}, runtime {dt:.2f} s")


# --------------------------------------------------------------------------- 3, 4
@pytest.fixture(scope="module")
def staged():
    B = build_basis(64)
    G = omega_gramian(B, OMEGA)
    E = two_piece()
    seq = build_density_sequence(E)
    rng = np.random.default_rng(303)
    y0 = SpectralState(rng.standard_normal(64) / np.arange(1, 65), B)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = iterative_null_control(y0, E, 1.0, 0.0, seq, G, stop_tol=0.0, max_stages=6)
    return y0, G, res


def test_criterion_03_end_to_end(staged):
    y0, G, res = staged
    rel = res.residual / y0.norm()
    y_re = evolve_controlled(y0, res.control, None, G, (0.0, res.horizon))
    diff = (y_re - res.final_state).norm()
    ok = len(res.stages) == 6 and rel <= 1e-6 and diff <= 1e-12
    report(3, ok, f"{len(res.stages)} stages, ||y(T)||/||y0|| = {rel:.2e}, re-simulation difference {diff:.2e}")


def test_criterion_04_free_decay(staged):
    _, _, res = staged
    worst = -math.inf
    for st in res.stages:
        b, c = st.free_window
        lhs = st.state_free.norm() ** 2
        rhs = math.exp(-2.0 * st.r * (c - b)) * st.state_controlled.norm() ** 2 * (1 + 1e-10)
        worst = max(worst, (lhs - rhs) / max(rhs, 1e-300) if rhs > 0 else (0.0 if lhs == 0 else math.inf))
    report(4, worst <= 0.0, f"{len(res.stages)} stages checked, max (lhs - rhs)/rhs = {worst:.2e}")


# --------------------------------------------------------------------------- 5
def test_criterion_05_delta_invariance():
    seq = build_density_sequence(two_piece())
    G = omega_gramian(build_basis(32), OMEGA)
    fit = fit_spectral_constants(G, G.basis.eigenvalues[:16])
    deltas = [0.0, 0.5 * seq.delta0, seq.delta0]
    rep = delta_invariance_check(seq, fit.c1_hat, fit.c2_hat, deltas)
    dicts = [led.to_dict() for led in rep.ledgers]
    same = all(d == dicts[0] for d in dicts)
    report(5, rep.identical and same, f"deltas {deltas}, mismatching fields: {rep.mismatches or 'none'}")


# --------------------------------------------------------------------------- 6
def test_criterion_06_ledger_regression():
    seq = build_density_sequence(two_piece(), anchor=0, start_fraction=0.0)
    led = schedule_constants(1.0, 0.5, seq)
    ok = (led.rho, led.c0, led.gap12, led.gap23) == (1.0, 2.0, 0.2, 0.1) and led.c_tilde == 200.0 \
        and led.r(1) == 160000.0 == (2 / 0.1) ** 4
    report(6, ok, f"C~ = {led.c_tilde!r}, r_1 = {led.r(1)!r}")


# --------------------------------------------------------------------------- 7
def test_criterion_07_spectral_inequality():
    B = build_basis(32)
    G = omega_gramian(B, OMEGA)
    rs = B.eigenvalues[:16]
    fit = fit_spectral_constants(G, rs)
    rng = np.random.default_rng(707)
    worst = -math.inf
    for t in range(10_000):
        m = int(rng.integers(1, 17))
        a = rng.standard_normal(m)
        C = fit.constants[m - 1]
        worst = max(worst, float(a @ a - C * (a @ G.matrix[:m, :m] @ a)))
    ok = worst <= 1e-12 and fit.c2_hat > 0 and fit.monotone
    report(7, ok, f"max violation {worst:.2e}, C2_hat = {fit.c2_hat:.4f}, fit residual {fit.residual:.3e}, "
                  f"C(r) nondecreasing: {fit.monotone}")


# --------------------------------------------------------------------------- 8, 9, 11
@pytest.fixture(scope="module")
def desk():
    B = build_basis(32)
    G = omega_gramian(B, OMEGA)
    rng = np.random.default_rng(3)
    a = np.zeros(32)
    a[:6] = rng.standard_normal(6)
    y0 = SpectralState(a / np.linalg.norm(a), B)
    bound = ControlConstraint(1.0)
    uniq = uniqueness_check(y0, TargetSet(), bound, None, G, 100, seeds=(11, 22), tol=1e-6)
    return y0, G, bound, uniq


@pytest.mark.slow
def test_criterion_08_bang_bang(desk):
    y0, G, bound, uniq = desk
    opt = uniq["results"][0]
    T = opt.T_star
    frac = opt.bang_bang.fraction
    u15, d15 = min_norm_control(1.5 * T, y0, TargetSet(), TimeSet.full(1.5 * T), G, 100)
    frac15 = bang_bang_report(u15, bound, 1e-2).fraction
    ok = 0.2 <= T <= 1.0 and opt.residual <= 1e-6 and frac >= 0.95 and frac15 < 0.5 and d15 <= 1e-6
    report(8, ok, f"T* = {T:.5f}, boundary fraction {frac:.3f}; at 1.5 T* minimal-norm fraction {frac15:.3f}")


@pytest.mark.slow
def test_criterion_09_monotone_minimal_norm(desk):
    y0, G, _, _ = desk
    Ts = np.linspace(0.15, 0.6, 10)
    N = [min_sup_norm(T, y0, TargetSet(), TimeSet.full(T), G, 100, r_hi=4.0, seed=0)[0] for T in Ts]
    viol = [i for i in range(9) if N[i + 1] > N[i] * (1 + 1e-9)]
    report(9, not viol, f"N(T) = {[round(v, 5) for v in N]}, violations at {viol or 'none'}")


@pytest.mark.slow
def test_criterion_11_uniqueness(desk):
    _, _, _, uniq = desk
    ok = uniq["control_rel_diff"] <= 1e-3 and uniq["T_diff"] <= 1e-4
    report(11, ok, f"|T1 - T2| = {uniq['T_diff']:.2e}, relative control difference {uniq['control_rel_diff']:.2e}")


# --------------------------------------------------------------------------- 10
def test_criterion_10_improve_control():
    B = build_basis(32)
    G = omega_gramian(B, OMEGA)
    rng = np.random.default_rng(7)
    y0 = SpectralState(rng.standard_normal(32) / np.arange(1, 33), B)
    K, T, R = 50, 1.0, 1.0
    grid = np.linspace(0, T, K + 1)
    C = rng.standard_normal((K, 32))
    C /= np.linalg.norm(C, axis=1)[:, None]
    mid = 0.5 * (grid[1:] + grid[:-1])
    slack = (mid > 0.2) & (mid < 0.6)
    C[slack] *= 0.5
    u_star = ControlSignal(grid, C)
    E_slack = TimeSet.from_pairs([(0.2, 0.6)], T)
    assert E_slack.measure >= 0.2 * T
    assert bang_bang_report(u_star, ControlConstraint(R)).fraction < 1.0
    res = improve_control(u_star, T, y0, ControlConstraint(R), E_slack, 0.2 * R, G)
    d = res.delta
    y_ref = evolve_controlled(y0, u_star, None, G)
    y_new = evolve_controlled(y0, res.v_delta, None, G, (0.0, T - d))
    err = (y_new - y_ref).norm()
    ts = np.linspace(0.0, T - d, 20001)
    sampled = np.linalg.norm(sum(p.values(ts, effective=True) for p in res.v_delta), axis=1).max()
    ok = d > 0 and err <= 1e-6 and res.certified_bound <= R + 1e-9 and sampled <= R + 1e-9
    report(10, ok, f"delta = {d:.3e}, reconstruction error {err:.2e}, certified sup {res.certified_bound:.6f}, "
                   f"sampled sup {sampled:.6f}")


# --------------------------------------------------------------------------- 12
@pytest.mark.slow
def test_criterion_12_reproducibility(tmp_path):
    runs = [("time-optimal", "time_optimal.toml"), ("null-control", "null_control.toml"),
            ("sweep", "sweep_delta.toml")]
    diffs, compared = [], 0
    for cmd, cfg in runs:
        outs = []
        for k in range(2):
            out = tmp_path / f"{cmd}_{k}"
            proc = subprocess.run([sys.executable, "-m", "heatbang", cmd, "--config", str(ROOT / "configs" / cfg),
                                   "--out", str(out), "--seed", "0"], capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir() if p.suffix in (".csv", ".json") and p.name != "manifest.json")
        for name in names:
            compared += 1
            if not filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False):
                diffs.append(f"{cmd}/{name}")
    report(12, compared > 0 and not diffs, f"{compared} CSV/JSON files compared, differing: {diffs or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
