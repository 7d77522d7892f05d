import numpy as np
import pytest
from scipy.optimize import brentq

from sitplan.control import ControlConfig, h
from sitplan.wild import homogeneous_model

B, MU1, MU2, MUS, GAMMA, ALPHA = 6.60, 0.01238, 0.001, 0.0241, 0.6, 1e-4
HET_MU2 = [0.001, 0.0005, 0.001]


def complete_flows(n, rate):
    F = np.full((n, n), rate)
    np.fill_diagonal(F, 0.0)
    return F


def chain_flows(n, rate):
    F = np.zeros((n, n))
    for i in range(n - 1):
        F[i, i + 1] = F[i + 1, i] = rate
    return F


def random_metzler(rng, n, density=1.0, irreducible=True):
    """Random Metzler matrix; with ``irreducible`` a directed cycle is added."""
    A = rng.uniform(0, 1, (n, n)) * (rng.uniform(0, 1, (n, n)) < density)
    if irreducible:
        for i in range(n):
            A[(i + 1) % n, i] = rng.uniform(0.1, 1)
    np.fill_diagonal(A, rng.uniform(-3, 1, n))
    return A


def random_instance(rng, n=None):
    n = n or int(rng.integers(1, 6))
    F = rng.uniform(0.005, 0.05, (n, n))
    m = homogeneous_model(n, F, a=rng.uniform(0, 200, n), mu2=rng.uniform(5e-4, 2e-3, n),
                          mus=rng.uniform(0.015, 0.04, n))
    subset = [i for i in range(n) if rng.uniform() < 0.6] or [0]
    cfg = ControlConfig.simple(n, subset, rho=rng.uniform(0, 0.05, n) * (rng.uniform() < 0.5))
    lam = np.zeros(n)
    lam[subset] = rng.uniform(50, 3000, len(subset))
    return m, cfg, lam


def fd_grad(m, cfg, lam):
    out = np.zeros(lam.size)
    for i in range(lam.size):
        step = 1e-4 * (1 + lam[i])
        e = np.zeros(lam.size)
        e[i] = step
        out[i] = (h(m, cfg, lam + e) - h(m, cfg, np.maximum(lam - e, 0))) / (lam[i] + step - max(lam[i] - step, 0))
    return out


def random_reducible(rng, n):
    F = rng.uniform(0, 0.1, (n, n)) * (rng.uniform(size=(n, n)) < rng.uniform(0.05, 0.4))
    return F


def bisection_oracle(m, cfg, i):
    e = np.zeros(m.n)
    e[i] = 1.0
    return brentq(lambda t: h(m, cfg, t * e) + cfg.alpha, 0.0, 1e7, xtol=1e-12, rtol=1e-14)


@pytest.fixture
def complete3():
    return homogeneous_model(3, complete_flows(3, 0.02))


@pytest.fixture
def chain3():
    return homogeneous_model(3, chain_flows(3, 0.02))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
