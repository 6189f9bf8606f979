import math

import numpy as np
import pytest

from streamqos import PolicyParams, TrafficMix, class_metrics
from streamqos.desim import ArrivalModel, ServiceModel, compare_to_analytic, run

P0 = PolicyParams(0.0)


@pytest.fixture(scope="module")
def single():
    return TrafficMix.from_demands([0.6], [1.0])


@pytest.fixture(scope="module")
def single_run(single):
    return run(single, P0, horizon=100_000, seed=1)


def test_single_class_closed_form(single_run):
    c = single_run.classes[0]
    # outage iff another user is present at arrival; every arrival during the call hits it once
    assert abs(c.p_outage.value - (1 - math.exp(-1))) <= 3 * c.p_outage.half_width
    assert abs(c.incidents.value - math.exp(-1)) <= 3 * c.incidents.half_width
    assert c.calls > 90_000
    assert single_run.departure_exits == 0


def test_deterministic_service_same_outage(single, single_run):
    det = run(single, P0, service=ServiceModel("deterministic"), horizon=100_000, seed=2)
    a, b = single_run.classes[0].p_outage, det.classes[0].p_outage
    assert abs(a.value - b.value) <= a.half_width + b.half_width


def test_server_side_intensity(single, single_run):
    ref = class_metrics(single, P0)[0]
    c = single_run.classes[0]
    assert abs(c.incident_intensity.value - ref.incident_intensity) <= 3 * c.incident_intensity.half_width
    assert c.mean_uptime == pytest.approx(ref.mean_uptime, rel=0.05)
    assert c.mean_outage_spell == pytest.approx(ref.mean_outage_spell, rel=0.05)


def test_per_call_bounds(j5_mix):
    sim = run(j5_mix, PolicyParams(1.0), horizon=5_000, seed=4)
    for c in sim.classes:
        assert 0.0 <= c.norm_outage_time.value <= 1.0
        assert c.incidents.value >= 0.0
        assert 0.0 <= c.deep_outage_fraction.value <= 1.0
    assert sim.departure_exits == 0
    assert sim.events_processed >= 2 * sim.calls_completed


def test_poisson_run_passes_comparison(j5_mix):
    p = PolicyParams(1.0)
    sim = run(j5_mix, p, horizon=50_000, seed=8)
    rows = compare_to_analytic(sim, class_metrics(j5_mix, p))
    assert len(rows) == 15
    assert sum(r.status == "fail" for r in rows) <= 1


def test_deterministic_arrivals_reported_as_differences(j5_mix):
    p = PolicyParams(1.0)
    sim = run(j5_mix, p, arrivals=ArrivalModel("deterministic"), horizon=5_000, seed=8)
    assert sim.metadata["arrivals"] == "deterministic"
    assert len(sim.metadata["phases"]) == 5
    rows = compare_to_analytic(sim, class_metrics(j5_mix, p))
    assert {r.status for r in rows} <= {"difference", "insufficient data"}


def test_no_arrivals_gives_insufficient_data():
    mix = TrafficMix.from_demands([0.3, 0.5], [0.0, 0.0])
    sim = run(mix, P0, horizon=100.0, seed=0)
    assert sim.calls_completed == 0
    rows = compare_to_analytic(sim, class_metrics(mix, P0))
    assert all(r.status == "insufficient data" for r in rows)


def test_mismatched_classes_rejected(single_run, j5_mix):
    with pytest.raises(ValueError):
        compare_to_analytic(single_run, class_metrics(j5_mix, P0))


@pytest.mark.parametrize("horizon, warmup", [(0.0, None), (10.0, 20.0), (math.inf, None)])
def test_bad_horizon(single, horizon, warmup):
    with pytest.raises(ValueError):
        run(single, P0, horizon=horizon, warmup=warmup)


def test_event_guard(single):
    with pytest.raises(ValueError):
        run(single, P0, horizon=1e6, max_events=1000)


def test_same_seed_same_result(j5_mix):
    a = run(j5_mix, PolicyParams(math.inf), horizon=2_000, seed=5)
    b = run(j5_mix, PolicyParams(math.inf), horizon=2_000, seed=5)
    assert a.classes == b.classes


def test_lognormal_mean_exact():
    rng = np.random.default_rng(0)
    x = ServiceModel("lognormal", 1.0).sample(rng, 2.5, 400_000)
    assert x.mean() == pytest.approx(2.5, rel=0.01)


@pytest.mark.slow
def test_confidence_interval_coverage(single):
    target = 1 - math.exp(-1)
    hits = 0
    for seed in range(100):
        c = run(single, P0, horizon=3_000, seed=1000 + seed, batches=20).classes[0].p_outage
        hits += abs(c.value - target) <= c.half_width
    assert hits >= 90
