import math

import numpy as np
import pytest
from scipy import stats

from streamqos import lte


@pytest.fixture(scope="module")
def samples():
    return lte.generate_sinr_samples(lte.RadioScenario(), seed=0)


def test_sinr_capped_by_cosited_sectors(samples):
    # two co-sited sectors 20 dB down cap the SIR at 10 log10(50) ~ 17 dB
    assert samples.max() <= 10 * math.log10(50) + 1e-9
    assert samples.max() > 15.0
    assert -15.0 < np.median(samples) < 10.0


def test_hand_link_budget():
    sc = lte.RadioScenario(lattice=2, shadowing_sigma_db=0.0)
    user = lte.site_positions(sc)[0] + np.array([[0.1, 0.0]])
    power = lte.received_power_dbm(user, np.zeros((1, 4)), sc)
    pl = 128.1 + 37.6 * math.log10(0.1)
    assert power[0, 0] == pytest.approx(60 - pl - 20)
    # sectors at 120 and 240 degrees are 120 degrees off: pattern floor of 20 dB
    assert power[0, 1] == pytest.approx(60 - pl - 20 - 20)
    assert power[0, 2] == pytest.approx(60 - pl - 20 - 20)


def test_antenna_pattern():
    sc = lte.RadioScenario()
    assert sc.antenna_gain_db(0.0) == 0.0
    assert sc.antenna_gain_db(35.0) == pytest.approx(-3.0)
    assert sc.antenna_gain_db(180.0) == -20.0


def test_torus_wraps_to_nearest_image():
    sc = lte.RadioScenario(lattice=6)
    L = 6 * sc.inter_site_km
    sites = np.zeros((1, 2))
    users = np.array([[L - 0.1, 0.0], [0.5 * L, math.sqrt(3) / 2 * L - 0.05]])
    d = lte.torus_displacement(users, sites, sc)
    np.testing.assert_allclose(np.hypot(d[..., 0], d[..., 1]).ravel(), [0.1, 0.05], atol=1e-12)


def test_shadowing_mean_one_offset():
    sc = lte.RadioScenario()
    off = sc.shadowing_offset_db()
    z = np.random.default_rng(0).standard_normal(1_000_000)
    assert np.mean(10 ** ((off + 8 * z) / 10)) == pytest.approx(1.0, rel=0.02)
    assert lte.RadioScenario(shadowing_mean="median_one").shadowing_offset_db() == 0.0


def test_cdf_stable_across_seeds(samples):
    other = lte.generate_sinr_samples(lte.RadioScenario(), seed=1)
    assert stats.ks_2samp(samples, other).statistic < 0.05


def test_class_probabilities_sum_to_one(samples):
    p = lte.discretize_classes(lte.EmpiricalCdf.from_samples(samples), lte.ClassGrid())
    assert p.shape == (100,)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)


def test_point_mass_goes_to_one_class():
    grid = lte.ClassGrid()
    p = lte.discretize_classes(lte.EmpiricalCdf.point_mass(3.0), grid)
    k = np.argmin(np.abs(grid.points - 3.0))
    assert p[k] == 1.0 and p.sum() == 1.0


def test_uniform_cdf_gives_equal_inner_classes():
    grid = lte.ClassGrid(J=10, x_first=0.0, x_last=9.0)
    cdf = lte.EmpiricalCdf.from_samples(np.linspace(0.0, 9.0, 90_001)[:-1] + 0.5e-4)
    p = lte.discretize_classes(cdf, grid)
    np.testing.assert_allclose(p[1:-1], 1 / 9, atol=1e-4)
    np.testing.assert_allclose(p[[0, -1]], 0.5 / 9, atol=1e-4)


def test_traffic_mix_totals(samples):
    grid = lte.ClassGrid()
    p = lte.discretize_classes(lte.EmpiricalCdf.from_samples(samples), grid)
    mix = lte.build_traffic_mix(p, 900.0, grid)
    assert mix.rho.sum() == pytest.approx(900 * math.sqrt(3) / 2 * 0.25 / 3)
    assert mix.rho.sum() == pytest.approx(64.95, abs=0.01)
    assert lte.build_traffic_mix(p, 600.0, grid).rho.sum() == pytest.approx(43.3, abs=0.01)
    i17 = np.argmax(mix.sinr_db)
    assert mix.sinr_db[i17] == 17.0
    assert mix.phi[i17] == pytest.approx(256e3 / (5e6 * math.log2(1 + 10**1.7)))
    assert mix.phi[i17] == pytest.approx(0.00902, abs=1e-5)


def test_all_demands_above_capacity_warns():
    grid = lte.ClassGrid(J=2, x_first=-40.0, x_last=-35.0)
    with pytest.warns(UserWarning):
        lte.build_traffic_mix(np.array([0.5, 0.5]), 900.0, grid)


def test_cdf_csv_roundtrip_bit_exact(tmp_path):
    sc = lte.RadioScenario(n_users=500)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    lte.generate_sinr_cdf(sc, seed=3).to_csv(a)
    lte.generate_sinr_cdf(sc, seed=3).to_csv(b)
    assert a.read_bytes() == b.read_bytes()
    back = lte.EmpiricalCdf.from_csv(a)
    c = tmp_path / "c.csv"
    back.to_csv(c)
    assert c.read_bytes() == a.read_bytes()


def test_cdf_validation(tmp_path):
    with pytest.raises(ValueError):
        lte.EmpiricalCdf([1.0, 0.0], [0.5, 1.0])
    with pytest.raises(ValueError):
        lte.EmpiricalCdf([0.0, 1.0], [0.7, 0.5])
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,1\n")
    with pytest.raises(ValueError):
        lte.EmpiricalCdf.from_csv(bad)


def test_scenario_fields():
    sc = lte.RadioScenario()
    assert sc.cell_area_km2 == pytest.approx(0.0722, abs=1e-4)
    assert lte.RadioScenario.from_dict(sc.to_dict()) == sc
    with pytest.raises(ValueError):
        lte.RadioScenario.from_dict({"lattices": 6})
    with pytest.raises(ValueError):
        lte.RadioScenario(inter_site_km=0.0)
