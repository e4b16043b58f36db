import numpy as np
import pytest

from heatbang import ControlSignal, SpectralState, TimeSet, build_basis, evolve_controlled, omega_gramian
from heatbang.timeoptimal import (
    ControlConstraint,
    NotAdmissibleError,
    TargetSet,
    bang_bang_report,
    improve_control,
    midpoint_uniqueness_check,
    min_distance_control,
    min_norm_control,
    min_sup_norm,
    optimal_time,
    reach_feasible,
)

M, K = 12, 40


@pytest.fixture(scope="module")
def small():
    B = build_basis(M)
    G = omega_gramian(B, (0.3, 0.8))
    rng = np.random.default_rng(3)
    a = np.zeros(M)
    a[:4] = rng.standard_normal(4)
    return B, G, SpectralState(a / np.linalg.norm(a), B)


@pytest.fixture(scope="module")
def optimum(small):
    B, G, y0 = small
    return optimal_time(y0, TargetSet(), ControlConstraint(1.0), None, G, K, seed=5)


def test_target_and_constraint_validation(small):
    B, _, y0 = small
    with pytest.raises(ValueError):
        TargetSet(radius=-1.0)
    with pytest.raises(ValueError):
        ControlConstraint(-0.5)
    tgt = TargetSet(np.ones(M), 0.5)
    assert tgt.distance(y0) == pytest.approx(max(0.0, np.linalg.norm(y0.coefficients - 1) - 0.5))
    assert TargetSet(radius=2.0).distance(y0) == 0.0


def _terminal_map(T, y0, G, K):
    """Brute-force affine map ``y(T) = f + A c`` from unit controls."""
    grid = np.linspace(0.0, T, K + 1)
    zero = SpectralState.zeros(y0.basis)
    f = evolve_controlled(y0, ControlSignal.zeros(grid, M), None, G).coefficients
    cols = []
    for k in range(K):
        for i in range(M):
            C = np.zeros((K, M))
            C[k, i] = 1.0
            cols.append(evolve_controlled(zero, ControlSignal(grid, C), None, G).coefficients)
    return f, np.array(cols).T


def test_min_norm_matches_pseudoinverse(small):
    B, G, y0 = small
    T, Kc = 0.3, 8
    f, A = _terminal_map(T, y0, G, Kc)
    u, dist = min_norm_control(T, y0, TargetSet(), TimeSet.full(T), G, Kc)
    dt = T / Kc
    # minimal L2(0,T) norm: weighted least norm with weight dt on every coefficient
    c_ref = np.linalg.lstsq(A, -f, rcond=None)[0]
    assert dist <= 1e-8
    assert np.sum(u.coefficients**2) * dt <= np.sum(c_ref**2) * dt * (1 + 1e-6)
    np.testing.assert_allclose(u.coefficients.ravel(), c_ref, rtol=1e-5, atol=1e-6 * np.abs(c_ref).max())


def test_infeasible_is_certified(small):
    B, G, y0 = small
    far = TargetSet(np.r_[5.0, np.zeros(M - 1)], 0.1)
    res = reach_feasible(0.2, ControlConstraint(0.5), y0, far, TimeSet.full(0.2), G, K, seed=0)
    assert not res.feasible and res.certified_infeasible
    # weak duality: the certificate never exceeds half the squared attained distance
    assert res.dual_bound <= 0.5 * (res.distance + far.radius) ** 2 * (1 + 1e-9)


def test_feasible_with_large_radius(small):
    B, G, y0 = small
    res = reach_feasible(0.5, ControlConstraint(50.0), y0, TargetSet(), TimeSet.full(0.5), G, K, seed=0)
    assert res.feasible and res.distance <= 1e-6
    re = evolve_controlled(y0, res.control, None, G)
    assert np.linalg.norm(re.coefficients) == pytest.approx(res.residual, abs=1e-12)
    assert res.control.step_norms().max() <= 50.0 * (1 + 1e-12)


def test_min_distance_positive_gap_is_bang_bang(small):
    B, G, y0 = small
    res = min_distance_control(0.05, ControlConstraint(0.3), y0, TargetSet(), TimeSet.full(0.05), G, K, seed=1)
    assert res.distance > 1e-3
    assert bang_bang_report(res.control, ControlConstraint(0.3), 1e-6).fraction == 1.0


def test_bang_bang_report_handmade(G32):
    C = np.zeros((4, 32))
    C[0, 0] = 1.0
    C[1, 1] = 0.995
    C[2, 2] = 0.5
    r = bang_bang_report(ControlSignal(np.linspace(0, 1, 5), C), ControlConstraint(1.0), 1e-2, G32)
    np.testing.assert_array_equal(r.flags, [True, True, False, False])
    assert r.fraction == 0.5 and r.omega_fraction is not None


def test_initial_state_in_target(small):
    B, G, y0 = small
    res = optimal_time(y0, TargetSet(radius=2.0), ControlConstraint(1.0), None, G, K)
    assert res.T_star == 0.0 and res.control is None


def test_zero_radius_unreachable_raises(small):
    B, G, y0 = small
    far = TargetSet(np.r_[0.5, np.zeros(M - 1)], 0.1)
    with pytest.raises(NotAdmissibleError) as info:
        optimal_time(y0, far, ControlConstraint(0.0), None, G, K, T_cap=64.0)
    assert "necessary_condition" in info.value.details


def test_optimal_time_is_sharp(small, optimum):
    B, G, y0 = small
    T = optimum.T_star
    assert optimum.residual <= 1e-6
    assert optimum.bang_bang.fraction >= 0.95
    lo = optimum.diagnostics["bracket"][0]
    early = reach_feasible(lo, ControlConstraint(1.0), y0, TargetSet(), TimeSet.full(lo), G, K, seed=9)
    assert not early.feasible
    assert T - lo <= optimum.diagnostics["tol_T"]


def test_min_sup_norm_monotone(small):
    B, G, y0 = small
    Ts = [0.2, 0.3, 0.45]
    N = [min_sup_norm(T, y0, TargetSet(), TimeSet.full(T), G, K, seed=0)[0] for T in Ts]
    assert N[0] >= N[1] >= N[2] > 0


def test_midpoint_identity():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 4))
    a /= np.linalg.norm(a, axis=1)[:, None]
    b = rng.standard_normal((5, 4))
    b /= np.linalg.norm(b, axis=1)[:, None]
    g = np.linspace(0, 1, 6)
    rep = midpoint_uniqueness_check(ControlSignal(g, a), ControlSignal(g, b), ControlConstraint(1.0))
    assert rep.identity_ok and rep.boundary_steps.all() and rep.differing_steps.all()
    assert rep.max_interior_slack > 0


def test_improve_rejects_control_without_slack(small):
    B, G, y0 = small
    g = np.linspace(0, 1, 11)
    C = np.tile(np.eye(M)[0], (10, 1))
    with pytest.raises(ValueError, match="slack"):
        improve_control(ControlSignal(g, C), 1.0, y0, ControlConstraint(1.0),
                        TimeSet.from_pairs([(0.2, 0.6)], 1.0), 0.2, G)
    with pytest.raises(ValueError, match="admissible"):
        improve_control(ControlSignal(g, 2 * C), 1.0, y0, ControlConstraint(1.0),
                        TimeSet.from_pairs([(0.2, 0.6)], 1.0), 0.2, G)
