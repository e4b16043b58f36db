import math

import numpy as np
import pytest
import scipy.linalg as sla

from heatbang import TimeSet, build_basis, exp_weight_integral, omega_gramian, shift
from heatbang import observability as obs
from heatbang.observability import (
    fit_spectral_constants,
    observability_constant_L1,
    observability_constant_quadratic,
    spectral_ineq_constant,
    spectral_ineq_witness,
)


def test_full_domain_constant_is_one():
    B = build_basis(16)
    G = omega_gramian(B, (0.0, 1.0))
    for r in B.eigenvalues[[0, 5, 15]]:
        assert spectral_ineq_constant(G, r) == pytest.approx(1.0, abs=1e-12)
    fit = fit_spectral_constants(G, B.eigenvalues)
    assert fit.c1_hat == pytest.approx(1.0, abs=1e-10) and abs(fit.c2_hat) < 1e-10


def test_empty_family_raises(G32):
    with pytest.raises(ValueError):
        spectral_ineq_constant(G32, 1.0)


def test_two_by_two_closed_form():
    B = build_basis(2)
    G = omega_gramian(B, (0.0, 0.5))
    off = 4 / (3 * math.pi)
    assert spectral_ineq_constant(G, B.eigenvalues[1]) == pytest.approx(1 / (0.5 - off), rel=1e-12)


def test_inequality_on_random_vectors_and_witness(basis32, G32):
    rng = np.random.default_rng(0)
    for r in basis32.eigenvalues[[0, 3, 9, 15]]:
        C, a = spectral_ineq_witness(G32, r)
        m = len(a)
        # the quadratic form at the witness is tiny; evaluate it through an independent
        # square-root factor (finer quadrature) so rounding does not swamp it
        F = obs.omega_factor(G32, m, panels=40, order=30)
        np.testing.assert_allclose(F.T @ F, G32.matrix[:m, :m], atol=1e-14)
        assert np.sum(a**2) == pytest.approx(C * np.sum((F @ a) ** 2), rel=1e-9)
        A = rng.standard_normal((500, m))
        lhs = np.sum(A**2, axis=1)
        rhs = C * np.einsum("ti,ij,tj->t", A, G32.matrix[:m, :m], A)
        assert np.all(lhs <= rhs + 1e-12)


def test_constant_monotone_in_r_and_omega(basis32, G32):
    wider = omega_gramian(basis32, (0.2, 0.9))
    rs = basis32.eigenvalues[:16]
    C = [spectral_ineq_constant(G32, r) for r in rs]
    Cw = [spectral_ineq_constant(wider, r) for r in rs]
    assert np.all(np.diff(C) >= 0) and np.all(np.array(C) >= 1.0)
    assert np.all(np.array(Cw) <= np.array(C) * (1 + 1e-12))


def test_fit_regression_baseline(basis32, G32):
    fit = fit_spectral_constants(G32, basis32.eigenvalues[:16])
    assert fit.c2_hat > 0 and fit.monotone
    assert fit.c2_hat == pytest.approx(0.5638, abs=5e-4)


def test_fit_recovers_synthetic_model(monkeypatch, G32):
    monkeypatch.setattr(obs, "spectral_ineq_constant", lambda G, r: 3.0 * math.exp(0.7 * math.sqrt(r)))
    fit = obs.fit_spectral_constants(G32, [1.0, 4.0, 9.0, 16.0, 25.0])
    assert fit.c1_hat == pytest.approx(3.0, rel=1e-12) and fit.c2_hat == pytest.approx(0.7, rel=1e-12)
    assert fit.residual < 1e-12


def test_fit_rejects_degenerate_grid(G32):
    with pytest.raises(ValueError):
        fit_spectral_constants(G32, [10.0, 10.0, 20.0, 30.0])
    with pytest.raises(ValueError):
        fit_spectral_constants(G32, [10.0, 11.0, 12.0, 13.0])


def test_quadratic_one_mode_closed_form():
    B = build_basis(1)
    G = omega_gramian(B, (0.0, 1.0))
    lam, T = math.pi**2, 1.0
    q = observability_constant_quadratic(TimeSet.full(T), G, T)
    assert q.value == pytest.approx(math.exp(-2 * lam * T) * 2 * lam / (1 - math.exp(-2 * lam * T)), rel=1e-12)


def test_quadratic_matches_generalised_eigh(G32, two_piece):
    lam = G32.basis.eigenvalues[:8]
    q = observability_constant_quadratic(two_piece, G32, 1.0, 8)
    LE = G32.matrix[:8, :8] * exp_weight_integral(two_piece, (0, 1), lam[:, None] + lam[None, :])
    ref = sla.eigh(np.diag(np.exp(-2 * lam)), LE, eigvals_only=True)[-1]
    assert q.converged and q.value == pytest.approx(ref, rel=1e-9)
    D = np.exp(-2 * lam)
    assert np.linalg.norm(D * q.witness - q.value * LE @ q.witness) <= 1e-8 * q.value * np.linalg.norm(LE @ q.witness)


def test_quadratic_monotone_under_shrinking_E(G32, two_piece):
    small = TimeSet.from_pairs([(0.0, 0.3), (0.7, 1.0)], 1.0)
    assert observability_constant_quadratic(small, G32, 1.0, 8).value >= \
        observability_constant_quadratic(two_piece, G32, 1.0, 8).value


def test_quadratic_vanishes_for_long_horizon():
    B = build_basis(1)
    G = omega_gramian(B, (0.0, 1.0))
    vals = [observability_constant_quadratic(TimeSet.full(T), G, T).value for T in (1.0, 3.0, 6.0)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-40


def test_L1_one_mode_closed_form():
    B = build_basis(1)
    G = omega_gramian(B, (0.0, 1.0))
    lam = math.pi**2
    val = observability_constant_L1(TimeSet.full(1.0), G, 1.0).value
    assert val == pytest.approx(math.exp(-lam) * lam / (1 - math.exp(-lam)), rel=1e-9)


def _l1_ratio(E, G, T, p, panels=512):
    f = obs._L1Objective(E, G, T, len(p), panels)
    return f.value_grad(p / np.linalg.norm(p))[0]


def test_L1_not_below_quadratic_witness(G32, two_piece):
    q = observability_constant_quadratic(two_piece, G32, 1.0, 6)
    r = observability_constant_L1(two_piece, G32, 1.0, 6, iterations=150, starts=3)
    assert r.value >= _l1_ratio(two_piece, G32, 1.0, q.witness) * (1 - 1e-14)


def test_L1_panel_doubling(G32, two_piece):
    p = np.random.default_rng(1).standard_normal(6)
    a = _l1_ratio(two_piece, G32, 1.0, p, 512)
    b = _l1_ratio(two_piece, G32, 1.0, p, 1024)
    assert abs(a - b) <= 1e-10 * abs(b)


def test_L1_monotone_under_shrinking_E(G32, two_piece):
    small = TimeSet.from_pairs([(0.0, 0.3), (0.7, 1.0)], 1.0)
    big = observability_constant_L1(two_piece, G32, 1.0, 6, iterations=100, starts=2)
    sm = observability_constant_L1(small, G32, 1.0, 6, iterations=100, starts=2, extra_starts=[big.witness])
    assert sm.value >= big.value


def test_L1_shift_consistency(G32, two_piece):
    d = 0.1
    shifted = shift(two_piece, d)
    scratch = TimeSet.from_pairs([(0.0, 0.3), (0.5, 0.9)], 0.9)
    a = observability_constant_L1(shifted, G32, 1.0 - d, 5, iterations=60, starts=2)
    b = observability_constant_L1(scratch, G32, 1.0 - d, 5, iterations=60, starts=2)
    assert a.value == pytest.approx(b.value, rel=1e-12)
