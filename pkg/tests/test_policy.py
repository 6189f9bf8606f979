import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamqos import (
    ClassState,
    PolicyParams,
    TrafficMix,
    best_effort_rates,
    class_states,
    cutoff,
    outage_sinr_interval,
)

DELTAS = [0.0, 0.1, 0.5, 1.0, math.inf]


def brute_cutoff(x, phi, delta):
    """Largest k whose lighter load plus the eligible heavier users fits."""
    K = 0
    for k in range(len(phi)):
        load = sum(phi[j] * x[j] for j in range(k))
        load += phi[k] * sum(x[j] for j in range(k, len(phi)) if phi[j] <= phi[k] * (1 + delta) * (1 + 1e-9))
        if load <= 1 + 1e-9:
            K = k + 1
    return K


@st.composite
def instances(draw):
    J = draw(st.integers(1, 8))
    phi = sorted(set(draw(st.lists(st.floats(0.01, 1.2), min_size=J, max_size=J))))
    mix = TrafficMix.from_demands(phi, np.ones(len(phi)))
    x = draw(st.lists(st.integers(0, 10), min_size=mix.J, max_size=mix.J))
    delta = draw(st.sampled_from(DELTAS))
    return mix, np.array(x), delta


@settings(max_examples=300, deadline=None)
@given(instances())
def test_cutoff_matches_brute_force(inst):
    mix, x, delta = inst
    assert cutoff(x, mix, PolicyParams(delta)) == brute_cutoff(x, mix.phi, delta)


@settings(max_examples=300, deadline=None)
@given(instances())
def test_capacity_conserved(inst):
    mix, x, delta = inst
    params = PolicyParams(delta)
    states = np.array(class_states(x, mix, params))
    rates = best_effort_rates(x, mix, params)
    served = states == ClassState.SERVED
    used = np.dot(mix.phi[served], x[served]) + np.dot(rates / mix.peak, x)
    assert np.all(rates >= 0)
    assert used <= 1 + 1e-9
    eligible = (states == ClassState.OUTAGE) & (x > 0)
    if eligible.any():
        assert used == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(instances(), st.data())
def test_departure_never_lowers_cutoff(inst, data):
    mix, x, delta = inst
    params = PolicyParams(delta)
    present = np.flatnonzero(x)
    if present.size == 0:
        return
    j = data.draw(st.sampled_from(list(present)))
    y = x.copy()
    y[j] -= 1
    assert cutoff(y, mix, params) >= cutoff(x, mix, params)


def test_cutoff_non_increasing_in_delta():
    rng = np.random.default_rng(3)
    for _ in range(500):
        J = rng.integers(1, 9)
        mix = TrafficMix.from_demands(np.sort(rng.uniform(0.01, 1.0, J)), np.ones(J))
        x = rng.integers(0, 11, J)
        Ks = [cutoff(x, mix, PolicyParams(d)) for d in DELTAS]
        assert all(a >= b for a, b in zip(Ks, Ks[1:]))


def test_empty_configuration_serves_everyone(j5_mix):
    assert cutoff(np.zeros(5, int), j5_mix, PolicyParams(0.0)) == 5


def test_single_heavy_user_deep_outage():
    mix = TrafficMix.from_demands([1.5], [1.0])
    assert cutoff([1], mix, PolicyParams(0.0)) == 0
    assert class_states([1], mix, PolicyParams(math.inf)) == [ClassState.DEEP_OUTAGE]
    assert best_effort_rates([1], mix, PolicyParams(math.inf))[0] == 0.0


def test_states_and_rates_small_example():
    mix = TrafficMix.from_demands([0.2, 0.3, 0.5], [1.0, 1.0, 1.0])
    x = np.array([2, 2, 1])
    # delta=0: 0.4 + 0.6 = 1 serves classes 1 and 2; class 3 is not eligible
    assert cutoff(x, mix, PolicyParams(0.0)) == 2
    assert class_states(x, mix, PolicyParams(0.0))[2] == ClassState.DEEP_OUTAGE
    # delta=inf: class 2 needs 0.4 + 0.3 * 3 > 1, so only class 1 is served
    p = PolicyParams(math.inf)
    assert cutoff(x, mix, p) == 1
    rates = best_effort_rates(x, mix, p)
    share = (1 - 0.4) / 3
    np.testing.assert_allclose(rates[1:], share * mix.peak[1:])


def test_policy_params_parse():
    assert math.isinf(PolicyParams.parse("inf").delta)
    assert PolicyParams.parse("0.5").delta == 0.5
    assert PolicyParams(math.inf).label == "inf"
    with pytest.raises(ValueError):
        PolicyParams(-0.1)
    with pytest.raises(ValueError):
        PolicyParams(math.nan)


def test_outage_sinr_interval():
    specs = [
        {"sinr_db": s, "requested_rate_bps": 256e3, "arrival_rate": 1.0, "mean_duration": 1.0}
        for s in (10.0, 5.0, 0.0)
    ]
    mix = TrafficMix.from_specs(specs)
    lo, hi = outage_sinr_interval(mix, 2, PolicyParams(1.0))
    assert hi == pytest.approx(10 ** 0.5)
    assert lo == pytest.approx(math.sqrt(1 + 10**0.5) - 1)
    assert outage_sinr_interval(mix, 2, PolicyParams(math.inf)) == (0.0, pytest.approx(10**0.5))
