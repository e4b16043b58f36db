import math
import warnings

import numpy as np
import pytest

from heatbang import (
    ConstantsLedger,
    SpectralState,
    TimeSet,
    build_basis,
    build_density_sequence,
    evolve_controlled,
    finite_rank_control,
    iterative_null_control,
    omega_gramian,
    practical_schedule,
    project,
    schedule_constants,
)
from heatbang.nullcontrol import (
    SingularGramianError,
    delta_invariance_check,
    null_control_gain,
    spd_solve,
)

from .conftest import random_state


def test_spd_solve_matches_numpy():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((12, 12))
    A = A @ A.T + 12 * np.eye(12)
    b = rng.standard_normal(12)
    x, jitter, cond = spd_solve(A, b)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-12)
    assert jitter == 0.0 and cond >= 1.0


def test_spd_solve_ill_conditioned_hilbert():
    n = 10
    H = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
    b = H @ np.ones(n)
    x, _, cond = spd_solve(H, b)
    assert cond > 1e12
    assert np.linalg.norm(H @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_spd_solve_singular_raises():
    with pytest.raises(SingularGramianError):
        spd_solve(np.zeros((3, 3)), np.ones(3))


def test_finite_rank_one_mode_closed_form():
    B = build_basis(1)
    G = omega_gramian(B, (0.0, 1.0))
    lam, h, y = math.pi**2, 0.3, 0.8
    E = TimeSet.full(1.0)
    fr = finite_rank_control(SpectralState([y], B), lam, (0.2, 0.2 + h), E, G)
    gram = (1 - math.exp(-2 * lam * h)) / (2 * lam)
    p = -math.exp(-lam * h) * y / gram
    assert fr.terminal.coefficients[0] == pytest.approx(p, rel=1e-12)
    assert abs(fr.final_state.coefficients[0]) <= 1e-14
    assert fr.sup_norm == pytest.approx(abs(p), rel=1e-12)


def test_finite_rank_annihilates_low_modes(basis32, G32, two_piece):
    rng = np.random.default_rng(1)
    r = basis32.eigenvalues[9]
    for _ in range(5):
        y = random_state(basis32, rng)
        fr = finite_rank_control(y, r, (0.0, 1.0), two_piece, G32, c1=1.0, c2=0.5)
        y_end = evolve_controlled(y, fr.control, None, G32, (0.0, 1.0))
        assert project(y_end, r).norm() <= 1e-9 * y.norm()
        assert fr.modes == 10 and set(fr.bound) >= {"linear_reading_holds", "squared_reading_holds"}


def test_finite_rank_is_minimal_norm(basis32, G32):
    # adding any control whose low modes vanish at the end can only increase the L2 norm
    E = TimeSet.from_pairs([(0.1, 0.5)], 1.0)
    y = random_state(basis32, np.random.default_rng(2))
    r = basis32.eigenvalues[4]
    fr = finite_rank_control(y, r, (0.1, 0.5), E, G32)
    lam = basis32.eigenvalues
    t, w = np.polynomial.legendre.leggauss(200)
    t = 0.3 + 0.2 * t
    w = 0.2 * w
    U = fr.control.values(t, effective=True)
    base = float(w @ np.einsum("ti,ij,tj->t", U, G32.matrix, U))
    rng = np.random.default_rng(3)
    for _ in range(5):
        # perturbation pointing along high modes decays out of X_r only approximately, so project it
        V = rng.standard_normal((len(t), 32)) * 0.1
        moment = np.einsum("ti,t->i", (G32.matrix @ V.T).T * np.exp(-np.outer(0.5 - t, lam)), w)[:5]
        Lam = np.einsum("t,ti,tj->ij", w, np.exp(-np.outer(0.5 - t, lam[:5])), np.exp(-np.outer(0.5 - t, lam[:5])))
        Lam = G32.matrix[:5, :5] * Lam
        coef = np.linalg.solve(Lam, moment)
        V = V - np.exp(-np.outer(0.5 - t, lam[:5])) @ np.diag(coef) @ np.eye(5, 32)
        W = U + V
        assert float(w @ np.einsum("ti,ij,tj->t", W, G32.matrix, W)) >= base * (1 - 1e-9)


def test_ledger_regression_values(two_piece):
    seq = build_density_sequence(two_piece, anchor=0, start_fraction=0.0)
    led = schedule_constants(1.0, 0.5, seq)
    assert (led.gap12, led.gap23, led.rho, led.c0) == (0.2, 0.1, 1.0, 2.0)
    assert led.c_tilde == 200.0
    assert led.r(1) == 160000.0 and led.r_schedule[0] == 160000.0


def test_ledger_formulas_by_hand():
    E = TimeSet.from_pairs([(0.3, 0.9)], 1.0)
    seq = build_density_sequence(E, q=0.6, start_fraction=0.2)
    c1, c2 = 1.7, 0.3
    led = schedule_constants(c1, c2, seq)
    g12, g23 = seq.gaps[0], seq.gaps[1]
    ct = 2 * c1 * (seq.c0 / (seq.rho * g12)) ** 2
    assert led.c_tilde == pytest.approx(ct, rel=1e-14)
    for n in range(1, led.n0 + 1):
        assert led.log_r_schedule[n - 1] == pytest.approx(4 * math.log(2 * ct ** (n - 1) / g23), rel=1e-13)
    assert led.log_alpha[0] == pytest.approx(c2 * math.sqrt(led.r_schedule[0]), rel=1e-12)
    r1, r2 = led.r(1), led.r(2)
    assert led.log_alpha[1] == pytest.approx(c2 * math.sqrt(r2) - 2 * r1 * g23, rel=1e-12)
    # the defining conditions hold from n0 onward
    for n in range(max(led.n0, 2), 40):
        lr_prev, lr = led.log_r(n - 1), led.log_r(n)
        assert math.log(n * (n - 1) * math.log(ct)) <= 0.75 * lr_prev
        assert math.log(c2) + 0.5 * lr <= 0.75 * lr_prev
    logs = [n * (n - 1) * math.log(ct) + sum(led.log_alpha[:n]) for n in range(1, led.n0 + 1)]
    assert led.log_big_l == pytest.approx(max(logs), rel=1e-14)


def test_ledger_clamps_c1_and_rejects_bad_c2(two_piece):
    seq = build_density_sequence(two_piece)
    led = schedule_constants(0.5, 0.2, seq)
    assert led.c1 == 1.0 and led.c1_clamped
    with pytest.raises(ValueError):
        schedule_constants(1.0, 0.0, seq)
    assert isinstance(led, ConstantsLedger) and set(led.to_dict()) >= {"c_tilde", "n0", "big_l"}


def test_delta_invariance_exact(two_piece):
    seq = build_density_sequence(two_piece)
    rep = delta_invariance_check(seq, 1.0, 0.5, [0.0, 0.5 * seq.delta0, seq.delta0])
    assert rep.identical
    assert all(led == rep.ledgers[0] for led in rep.ledgers)


def test_practical_schedule():
    B = build_basis(10)
    assert practical_schedule(B, 3) == [B.eigenvalues[3], B.eigenvalues[7], B.eigenvalues[9]]


def _setup(M=32):
    B = build_basis(M)
    G = omega_gramian(B, (0.3, 0.8))
    E = TimeSet.from_pairs([(0.0, 0.4), (0.6, 1.0)], 1.0)
    return B, G, E, build_density_sequence(E)


def test_null_control_zero_state_and_bad_delta():
    B, G, E, seq = _setup()
    res = iterative_null_control(SpectralState.zeros(B), E, 1.0, 0.0, seq, G)
    assert res.residual == 0.0 and res.sup_norm == 0.0
    with pytest.raises(ValueError):
        iterative_null_control(SpectralState.unit(B, 1), E, 1.0, 2 * seq.delta0, seq, G)


def test_null_control_warns_when_not_converged():
    B, G, E, seq = _setup()
    with pytest.warns(RuntimeWarning):
        res = iterative_null_control(SpectralState.unit(B, 1), E, 1.0, 0.0, seq, G, stop_tol=1e-30, max_stages=1)
    assert not res.converged


def test_null_control_is_linear_with_fixed_stages():
    B, G, E, seq = _setup(16)
    rng = np.random.default_rng(4)
    y1, y2 = random_state(B, rng), random_state(B, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        run = lambda y: iterative_null_control(y, E, 1.0, 0.0, seq, G, stop_tol=0.0, max_stages=3)
        r1, r2, r12 = run(y1), run(y2), run(2.0 * y1 - y2)
    np.testing.assert_allclose(r12.control.coefficients, 2 * r1.control.coefficients - r2.control.coefficients,
                               atol=1e-9 * np.abs(r12.control.coefficients).max())


def test_gain_bounds_random_inputs():
    B, G, E, seq = _setup(16)
    L = null_control_gain(E, 1.0, 0.0, seq, G, stages=3)
    rng = np.random.default_rng(5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(5):
            y = random_state(B, rng, decay=False)
            res = iterative_null_control(y, E, 1.0, 0.0, seq, G, stop_tol=0.0, max_stages=3)
            assert res.sup_norm**2 <= L * y.norm() ** 2 * (1 + 1e-9)
