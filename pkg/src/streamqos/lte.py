"""3GPP calibration-case SINR distribution and the traffic mix built from it.

Base stations sit on a hexagonal lattice wrapped on a torus; every site
carries three sector antennas. Users are dropped uniformly, attach to the
antenna with the strongest received power and see every other antenna as
interference.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from streamqos.traffic import RadioLink, TrafficMix


@dataclass(frozen=True)
class RadioScenario:
    lattice: int = 6
    sectors_per_site: int = 3
    inter_site_km: float = 0.5
    theta3db_deg: float = 70.0
    backoff_db: float = 20.0
    tx_power_dbm: float = 60.0
    pathloss_const_db: float = 128.1
    pathloss_slope_db: float = 37.6
    penetration_db: float = 20.0
    shadowing_sigma_db: float = 8.0
    shadowing_mean: Literal["one", "median_one"] = "one"
    noise_dbm: float = -95.0
    n_users: int = 3600
    min_distance_km: float = 0.035

    def __post_init__(self):
        for name in ("lattice", "sectors_per_site", "n_users"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("inter_site_km", "theta3db_deg", "min_distance_km"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.shadowing_sigma_db < 0 or self.backoff_db < 0:
            raise ValueError("shadowing_sigma_db and backoff_db must be >= 0")
        if self.shadowing_mean not in ("one", "median_one"):
            raise ValueError("shadowing_mean must be 'one' or 'median_one'")

    @property
    def cell_area_km2(self) -> float:
        """Area served by one sector antenna."""
        return math.sqrt(3.0) / 2.0 * self.inter_site_km**2 / self.sectors_per_site

    @classmethod
    def from_dict(cls, doc: dict) -> "RadioScenario":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def pathloss_db(self, r_km):
        return self.pathloss_const_db + self.pathloss_slope_db * np.log10(r_km)

    def antenna_gain_db(self, angle_deg):
        return -np.minimum(12.0 * (np.asarray(angle_deg) / self.theta3db_deg) ** 2, self.backoff_db)

    def shadowing_offset_db(self) -> float:
        """Mean of the dB shadowing so that the linear gain has mean one."""
        if self.shadowing_mean == "median_one":
            return 0.0
        return -(self.shadowing_sigma_db**2) * math.log(10.0) / 20.0


class EmpiricalCdf:
    """Right-continuous step CDF of SINR in dB, given by knots (x, F(x))."""

    def __init__(self, x, F):
        x = np.asarray(x, dtype=float)
        F = np.asarray(F, dtype=float)
        if x.ndim != 1 or x.shape != F.shape:
            raise ValueError("x and F must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(np.diff(F) < 0) or (F.size and (F[0] < 0 or F[-1] > 1)):
            raise ValueError("CDF values must be non-decreasing within [0, 1]")
        self.x = x
        self.F = F

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalCdf":
        s = np.sort(np.asarray(samples, dtype=float))
        if s.size == 0:
            raise ValueError("no samples")
        x, counts = np.unique(s, return_counts=True)
        return cls(x, np.cumsum(counts) / s.size)

    @classmethod
    def point_mass(cls, x0: float) -> "EmpiricalCdf":
        return cls([x0], [1.0])

    def __call__(self, x):
        idx = np.searchsorted(self.x, np.asarray(x, dtype=float), side="right") - 1
        return np.where(idx >= 0, self.F[np.maximum(idx, 0)], 0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sinr_db", "cdf"])
            for xi, fi in zip(self.x, self.F):
                w.writerow([repr(float(xi)), repr(float(fi))])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalCdf":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows or rows[0] != ["sinr_db", "cdf"]:
            raise ValueError(f"{path}: expected header 'sinr_db,cdf'")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class ClassGrid:
    J: int = 100
    x_first: float = -10.0
    x_last: float = 17.0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.J > 1 and not self.x_last > self.x_first:
            raise ValueError("x_last must exceed x_first")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_first, self.x_last, self.J)


def site_positions(sc: RadioScenario) -> np.ndarray:
    d = sc.inter_site_km
    i, j = np.meshgrid(np.arange(sc.lattice), np.arange(sc.lattice), indexing="ij")
    i, j = i.ravel(), j.ravel()
    return np.column_stack((d * (i + 0.5 * j), d * (math.sqrt(3.0) / 2.0) * j))


def torus_displacement(users: np.ndarray, sites: np.ndarray, sc: RadioScenario) -> np.ndarray:
    """Shortest displacement (users x sites x 2) from each site to each user on the torus."""
    L = sc.lattice * sc.inter_site_km
    A = np.array([[L, 0.0], [0.5 * L, math.sqrt(3.0) / 2.0 * L]])  # torus periods (rows)
    delta = users[:, None, :] - sites[None, :, :]
    coef = delta @ np.linalg.inv(A)
    coef -= np.round(coef)
    delta = coef @ A
    best = delta
    best_r2 = np.sum(delta**2, axis=-1)
    # reduced lattice coordinates can miss the nearest image of a 60 degree cell
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            if a == 0 and b == 0:
                continue
            cand = delta + a * A[0] + b * A[1]
            r2 = np.sum(cand**2, axis=-1)
            better = r2 < best_r2
            best = np.where(better[..., None], cand, best)
            best_r2 = np.where(better, r2, best_r2)
    return best


def received_power_dbm(users: np.ndarray, shadow_db: np.ndarray, sc: RadioScenario) -> np.ndarray:
    """Received power (users x antennas) with site-major antenna ordering."""
    sites = site_positions(sc)
    disp = torus_displacement(users, sites, sc)
    r = np.maximum(np.hypot(disp[..., 0], disp[..., 1]), sc.min_distance_km)
    azimuth = np.degrees(np.arctan2(disp[..., 1], disp[..., 0]))
    boresights = np.arange(sc.sectors_per_site) * 360.0 / sc.sectors_per_site
    off = (azimuth[..., None] - boresights + 180.0) % 360.0 - 180.0
    link = sc.tx_power_dbm - sc.pathloss_db(r) - sc.penetration_db + shadow_db
    power = link[..., None] + sc.antenna_gain_db(off)
    return power.reshape(users.shape[0], -1)


def sinr_db_from_power(power_dbm: np.ndarray, noise_dbm: float) -> np.ndarray:
    mw = 10.0 ** (power_dbm / 10.0)
    serving = mw.max(axis=1)
    interference = mw.sum(axis=1) - serving
    return 10.0 * np.log10(serving / (10.0 ** (noise_dbm / 10.0) + interference))


def generate_sinr_samples(sc: RadioScenario, seed: int = 0) -> np.ndarray:
    """SINR (dB) of ``sc.n_users`` users dropped uniformly on the torus.

    Shadowing is drawn once per user and site, so the co-sited sectors of a
    site share it; the antenna pattern then caps the SIR of a user by the
    two co-sited sectors.
    """
    rng = np.random.default_rng(seed)
    L = sc.lattice * sc.inter_site_km
    u, v = rng.random(sc.n_users), rng.random(sc.n_users)
    users = np.column_stack((L * (u + 0.5 * v), L * math.sqrt(3.0) / 2.0 * v))
    n_sites = sc.lattice**2
    shadow = sc.shadowing_offset_db() + sc.shadowing_sigma_db * rng.standard_normal((sc.n_users, n_sites))
    return sinr_db_from_power(received_power_dbm(users, shadow, sc), sc.noise_dbm)


def generate_sinr_cdf(sc: RadioScenario, seed: int = 0) -> EmpiricalCdf:
    return EmpiricalCdf.from_samples(generate_sinr_samples(sc, seed))


def discretize_classes(cdf: EmpiricalCdf, grid: ClassGrid) -> np.ndarray:
    """Probability of each SINR class; class k covers the dB interval between
    the midpoints to its neighbours, the outer classes extend to infinity."""
    x = grid.points
    edges = np.concatenate(([0.0], cdf((x[1:] + x[:-1]) / 2.0), [1.0]))
    return np.diff(edges)


def build_traffic_mix(
    p,
    density_erl_km2: float,
    grid: ClassGrid,
    link: RadioLink | None = None,
    requested_rate_bps: float = 256e3,
    mean_duration: float = 1.0,
    cell_area_km2: float = RadioScenario().cell_area_km2,
) -> TrafficMix:
    """Per-cell traffic mix with traffic ``p_k * density * cell area`` in class k."""
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.J,):
        raise ValueError("p does not match the class grid")
    if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("p must be a probability vector")
    link = link or RadioLink()
    rho = p * density_erl_km2 * cell_area_km2
    specs = [
        {
            "sinr_db": float(x),
            "requested_rate_bps": requested_rate_bps,
            "arrival_rate": float(r / mean_duration),
            "mean_duration": mean_duration,
        }
        for x, r, pk in zip(grid.points, rho, p)
        if pk > 0
    ]
    mix = TrafficMix.from_specs(specs, link)
    if mix.J and np.all(mix.phi > 1.0):
        warnings.warn("requested rate exceeds every peak rate; all classes are permanently in outage", stacklevel=2)
    return mix


def load_scenario(path) -> RadioScenario:
    return RadioScenario.from_dict(json.loads(Path(path).read_text()))
