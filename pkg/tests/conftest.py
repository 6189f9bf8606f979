import math

import numpy as np
import pytest

from streamqos import TrafficMix
from streamqos import lte

# Five classes on a 0.05 lattice, total traffic 3 Erlang; a margin of 1
# makes heavier classes eligible for best effort.
J5_PHI = [0.05, 0.1, 0.15, 0.3, 0.7]
J5_RHO = [1.0, 0.8, 0.6, 0.4, 0.2]


@pytest.fixture(scope="session")
def j5_mix():
    return TrafficMix.from_demands(J5_PHI, J5_RHO)


@pytest.fixture(scope="session")
def lte_class_probs():
    samples = lte.generate_sinr_samples(lte.RadioScenario(), seed=0)
    grid = lte.ClassGrid()
    return lte.discretize_classes(lte.EmpiricalCdf.from_samples(samples), grid)


@pytest.fixture(scope="session")
def lte_mix_900(lte_class_probs):
    return lte.build_traffic_mix(lte_class_probs, 900.0, lte.ClassGrid())


def poisson_cdf(n, rho):
    """P(X <= n) for X ~ Poisson(rho), summed directly."""
    if n < 0:
        return 0.0
    term = math.exp(-rho)
    total = term
    for i in range(1, int(n) + 1):
        term *= rho / i
        total += term
    return total


def enumerate_cdf(t, weights, masses, cap=60):
    """P(sum w_j X_j <= t) by brute-force enumeration of truncated Poisson counts."""
    from scipy import stats

    pmfs = [stats.poisson.pmf(np.arange(cap), m) for m in masses]
    grid = np.zeros(1)
    prob = np.ones(1)
    for w, pmf in zip(weights, pmfs):
        grid = (grid[:, None] + w * np.arange(cap)[None, :]).ravel()
        prob = (prob[:, None] * pmf[None, :]).ravel()
        keep = grid <= t + 1e-9
        grid, prob = grid[keep], prob[keep]
    return float(prob.sum())


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in __import__("sys").modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
