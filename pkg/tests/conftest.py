import sys

import numpy as np
import pytest

from heatbang import SpectralState, TimeSet, build_basis, omega_gramian


def gauss_integral(f, a, b, panels=64, order=10):
    """Composite Gauss-Legendre quadrature of a vector-valued ``f`` on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        total = total + 0.5 * (hi - lo) * sum(wi * f(ti) for wi, ti in zip(w, t))
    return total


@pytest.fixture(scope="session")
def basis32():
    return build_basis(32)


@pytest.fixture(scope="session")
def G32(basis32):
    return omega_gramian(basis32, (0.3, 0.8))


@pytest.fixture(scope="session")
def two_piece():
    return TimeSet.from_pairs([(0.0, 0.4), (0.6, 1.0)], 1.0)


def random_state(basis, rng, decay=True):
    a = rng.standard_normal(basis.mode_count)
    if decay:
        a = a / np.arange(1, basis.mode_count + 1)
    return SpectralState(a, basis)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = sorted(getattr(mod, "RESULTS", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
