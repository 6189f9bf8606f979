"""Closed-form outage metrics through the distribution of linear Poisson functionals.

For a target class k and margin delta, the class is served iff the reduced
load ``S_k = sum_{j<k} phi_j X_j + phi_k * (eligible users in classes >= k)``
does not exceed one. ``S_k`` is a weighted sum of independent Poisson
variables, so its CDF ``F_k`` has an explicit Laplace transform. Outage
probability, outage time, outage incidents and the server-side (virtual)
metrics are all differences of ``F_k`` at a few thresholds.

``F_k`` is recovered from its transform by the trapezoidal discretisation of
the Bromwich integral. When the contributing weights are commensurate the
resulting series is periodic and is summed exactly with digamma functions;
otherwise it is summed with binomial (Euler) averaging of partial sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Literal

import numpy as np
from numba import njit
from scipy.special import comb, psi

from streamqos.policy import CAP_TOL, PolicyParams, eligibility_end
from streamqos.traffic import TrafficMix

Increments = Literal["printed", "lesf"]

# Thresholds are shifted up by the policy's capacity slack, so an atom lying
# on a threshold up to rounding is counted exactly as the policy counts it.


@dataclass(frozen=True)
class InversionParams:
    """Bromwich damping ``a`` (aliasing error about exp(-a)) and Euler sum sizes."""

    a: float = 18.4
    euler_n: int = 4000
    euler_m: int = 200
    lattice: bool = True
    max_period: int = 400_000

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.euler_n < 0 or self.euler_m < 0:
            raise ValueError("euler_n and euler_m must be non-negative")


def reduced_mix(k: int, mix: TrafficMix, params: PolicyParams) -> tuple[np.ndarray, np.ndarray]:
    """Weights and Poisson masses of ``S_k`` (``k`` is 1-based).

    Classes ``j < k`` keep their own weight and mass; eligible classes
    ``j >= k`` are lumped into class k's weight.
    """
    _check_class(k, mix)
    end = eligibility_end(mix.phi, params.delta)[k - 1]
    weights = np.array(mix.phi[:k])
    masses = np.array(mix.rho[:k])
    masses[k - 1] = mix.rho[k - 1 : end + 1].sum()
    return weights, masses


def arrival_increments(k: int, mix: TrafficMix, params: PolicyParams, kind: Increments) -> np.ndarray:
    """Increase of ``S_k`` caused by one arrival of each class.

    ``"printed"`` uses phi_j for every class. ``"lesf"`` uses the actual
    increment under the policy: phi_j for lighter classes, phi_k for
    eligible heavier ones and 0 for the rest (they never disturb class k).
    """
    if kind == "printed":
        return np.array(mix.phi)
    if kind != "lesf":
        raise ValueError(f"unknown increments {kind!r}")
    end = eligibility_end(mix.phi, params.delta)[k - 1]
    inc = np.zeros(mix.J)
    inc[: k - 1] = mix.phi[: k - 1]
    inc[k - 1 : end + 1] = mix.phi[k - 1]
    return inc


def _check_class(k: int, mix: TrafficMix) -> None:
    if not 1 <= k <= mix.J:
        raise ValueError(f"class index {k} outside 1..{mix.J}")


def laplace_F(theta: complex, k: int, mix: TrafficMix, params: PolicyParams) -> complex:
    """Laplace transform of ``F_k`` at ``theta`` (Re(theta) > 0)."""
    theta = complex(theta)
    if theta.real <= 0:
        raise ValueError("theta must have a positive real part")
    w, m = reduced_mix(k, mix, params)
    return complex(_transform(np.array([theta]), w, m)[0] / theta)


def _transform(theta: np.ndarray, weights: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Laplace-Stieltjes transform E[exp(-theta S)] for an array of theta."""
    expo = np.exp(-theta[..., None] * weights) - 1.0
    return np.exp(expo @ masses)


def _lattice_span(weights: np.ndarray, max_den: int = 10_000) -> float | None:
    """Common span of the weights if their ratios are simple rationals."""
    base = float(weights.min())
    fracs = []
    for w in weights:
        r = w / base
        f = Fraction(r).limit_denominator(max_den)
        if abs(r - f) > CAP_TOL * r:
            return None
        fracs.append(f)
    lcm = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs), 1)
    g = reduce(math.gcd, (f.numerator * (lcm // f.denominator) for f in fracs))
    return base * g / lcm


def _lattice_cdf(t: np.ndarray, weights, masses, span: float, a: float) -> np.ndarray:
    """Exact sum of the trapezoidal Bromwich series on a lattice of atoms.

    F is constant between atoms, so it is evaluated at the midpoint of the
    cell containing t. There ``exp(-theta_n * w)`` is periodic in n, and the
    series ``sum (-1)^n (1 - g_n) / theta_n`` splits into finitely many
    Hurwitz-type sums with closed forms in the digamma function.
    """
    out = np.empty(t.size)
    beta = -1j * a / (2.0 * math.pi)
    for i, ti in enumerate(t):
        m = math.floor((ti + CAP_TOL) / span)
        tm = (m + 0.5) * span
        period = 2 * (2 * m + 1)
        n = np.arange(period)
        theta = (a + 2j * math.pi * n) / (2.0 * tm)
        c = np.where(n % 2 == 0, 1.0, -1.0) * (1.0 - _transform(theta, weights, masses))
        total = -np.sum(c * psi((n + beta) / period)) / period - c[0] / (2.0 * beta)
        out[i] = 1.0 - math.exp(a / 2.0) / math.pi * (-1j * total).real
    return out


@njit(cache=True)
def _euler_kernel(t, weights, masses, a, N, M, binom):
    # exp(-theta_n w) = r_w z_w^n, so the terms follow from running products.
    out = np.empty(t.shape[0])
    J = weights.shape[0]
    cur = np.empty(J, dtype=np.complex128)
    z = np.empty(J, dtype=np.complex128)
    scale = math.exp(a / 2.0)
    for i in range(t.shape[0]):
        ti = t[i]
        for j in range(J):
            cur[j] = math.exp(-a * weights[j] / (2.0 * ti))
            z[j] = complex(math.cos(math.pi * weights[j] / ti), -math.sin(math.pi * weights[j] / ti))
        partial = 0.0
        acc = 0.0
        for n in range(N + M + 1):
            s = 0.0j
            for j in range(J):
                s += masses[j] * (cur[j] - 1.0)
                cur[j] *= z[j]
            theta = complex(a, 2.0 * math.pi * n) / (2.0 * ti)
            h = scale / ti * ((1.0 - np.exp(s)) / theta).real
            if n == 0:
                h *= 0.5
            elif n % 2 == 1:
                h = -h
            partial += h
            if n >= N:
                acc += binom[n - N] * partial
        out[i] = 1.0 - acc
    return out


def _euler_cdf(t: np.ndarray, weights, masses, inv: InversionParams) -> np.ndarray:
    binom = comb(inv.euler_m, np.arange(inv.euler_m + 1)) / 2.0**inv.euler_m
    return _euler_kernel(t, weights, masses, float(inv.a), int(inv.euler_n), int(inv.euler_m), binom)


def cdf_linear_poisson(t, weights, masses, inv: InversionParams | None = None):
    """CDF of ``sum_j weights_j X_j`` with independent ``X_j ~ Poisson(masses_j)``.

    Returns ``(values, method)``; ``method`` names the route taken for the
    points that needed a transform inversion (``"lattice"`` is exact up to
    exp(-a), ``"euler"`` is an approximation that degrades next to atoms),
    or ``"exact"`` when every point was resolved in closed form.
    """
    inv = inv or InversionParams()
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    t, back = np.unique(t, return_inverse=True)
    weights = np.asarray(weights, dtype=float)
    masses = np.asarray(masses, dtype=float)
    active = masses > 0
    w, m = weights[active], masses[active]
    out = np.zeros(t.size)
    nonneg = t + CAP_TOL >= 0.0
    if w.size == 0:
        out[nonneg] = 1.0
        return out[back.reshape(-1)], "exact"
    # Below the smallest weight the only atom is at zero.
    below = nonneg & (t + CAP_TOL < w.min())
    out[below] = math.exp(-m.sum())
    rest = nonneg & ~below
    method = "exact"
    if rest.any():
        span = _lattice_span(w) if inv.lattice else None
        tr = t[rest]
        if span is not None and 2 * (2 * math.floor(tr.max() / span) + 1) <= inv.max_period:
            out[rest] = _lattice_cdf(tr, w, m, span, inv.a)
            method = "lattice"
        else:
            out[rest] = _euler_cdf(tr, w, m, inv)
            method = "euler"
    return np.clip(out, 0.0, 1.0)[back.reshape(-1)], method


def eval_F(t: float, k: int, mix: TrafficMix, params: PolicyParams, inv: InversionParams | None = None) -> float:
    """``F_k(t) = P(S_k <= t)`` under the stationary law."""
    w, m = reduced_mix(k, mix, params)
    values, _ = cdf_linear_poisson([t], w, m, inv)
    return float(values[0])


def outage_probability(k: int, mix: TrafficMix, params: PolicyParams, inv: InversionParams | None = None) -> float:
    """Probability that an arriving class-k call finds its class in outage."""
    return 1.0 - eval_F(1.0 - mix.phi[k - 1], k, mix, params, inv)


def mean_outage_time(
    k: int, mix: TrafficMix, params: PolicyParams, inv: InversionParams | None = None
) -> tuple[float, float]:
    """Mean time in outage per call and its value normalised by the mean duration."""
    p = outage_probability(k, mix, params, inv)
    return p / mix.mu[k - 1], p


@njit(cache=True)
def _kr_occupancy(units, masses, capacity):
    """Unnormalised occupancy distribution of a multi-rate loss system.

    ``n q(n) = sum_i masses_i units_i q(n - units_i)``; rescaled on the fly,
    only ratios are meaningful.
    """
    q = np.zeros(capacity + 1)
    q[0] = 1.0
    for n in range(1, capacity + 1):
        s = 0.0
        for i in range(units.shape[0]):
            d = units[i]
            if d <= n:
                s += masses[i] * d * q[n - d]
        q[n] = s / n
        if q[n] > 1e250:
            q[: n + 1] *= 1e-250
    return q


def _quantize(x, quantum: float) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) / quantum + 0.5).astype(np.int64)


def kr_grid(k: int, mix: TrafficMix, quantum: float) -> tuple[float, int]:
    """Effective quantum and capacity (in units) of the loss system for class k.

    The quantum is shrunk to ``phi_k / ceil(phi_k / quantum)`` so that the
    demand of class k, which carries all the lumped heavier users, is an exact
    multiple of it; the rounding error then only affects lighter classes.
    """
    if not quantum > 0:
        raise ValueError("quantum must be positive")
    phi_k = float(mix.phi[k - 1])
    units_k = math.ceil(phi_k / quantum - 1e-9)
    q = phi_k / units_k
    return q, int(_quantize(1.0, q)) - units_k


def kr_blocking(
    k: int,
    mix: TrafficMix,
    params: PolicyParams,
    quantum: float = 1e-4,
    increments: Increments = "lesf",
) -> np.ndarray:
    """Blocking probability of each arriving class in the loss system that
    admits configurations with ``S_k <= 1 - phi_k``.

    Demands are rounded half-up to multiples of the effective quantum
    returned by :func:`kr_grid`, which is never larger than ``quantum``.
    """
    _check_class(k, mix)
    w, m = reduced_mix(k, mix, params)
    q, capacity = kr_grid(k, mix, quantum)
    if quantum > w.min():
        raise ValueError("quantum exceeds the smallest resource demand")
    inc = _quantize(arrival_increments(k, mix, params, increments), q)
    b = np.ones(mix.J)
    if capacity < 0:
        return b
    active = m > 0
    occ = _kr_occupancy(_quantize(w[active], q), m[active], capacity)
    cum = np.cumsum(occ)
    total = cum[-1]
    for j, d in enumerate(inc):
        if d <= 0:
            b[j] = 0.0
        elif d <= capacity:
            b[j] = (total - cum[capacity - d]) / total
    return b


def mean_incidents(
    k: int,
    mix: TrafficMix,
    params: PolicyParams,
    inv: InversionParams | None = None,
    method: Literal["direct", "kaufman_roberts"] = "direct",
    increments: Increments = "lesf",
    quantum: float = 1e-4,
) -> float:
    """Mean number of outage incidents a class-k call suffers after arriving.

    ``increments="printed"`` charges every arrival its own demand phi_j,
    ``"lesf"`` charges the increase it actually causes to ``S_k``; only the
    latter matches simulated LESF dynamics when heavier classes are present.
    """
    _check_class(k, mix)
    thr = 1.0 - mix.phi[k - 1]
    if method == "direct":
        inc = arrival_increments(k, mix, params, increments)
        w, m = reduced_mix(k, mix, params)
        vals, _ = cdf_linear_poisson(np.concatenate(([thr], thr - inc)), w, m, inv)
        diff = np.where(inc > 0, vals[0] - vals[1:], 0.0)
        return float(np.dot(mix.lam, np.maximum(diff, 0.0)) / mix.mu[k - 1])
    if method == "kaufman_roberts":
        f = eval_F(thr, k, mix, params, inv)
        b = kr_blocking(k, mix, params, quantum, increments)
        return float(f * np.dot(mix.lam, b) / mix.mu[k - 1])
    raise ValueError(f"unknown method {method!r}")


def virtual_metrics(
    k: int, mix: TrafficMix, params: PolicyParams, inv: InversionParams | None = None
) -> tuple[float, float, float]:
    """Server-side view of class k: (incident intensity, mean uptime, mean outage spell).

    An arrival of class j takes the configuration out of the feasibility set
    of class k when it lifts ``S_k`` above one; its increment is the LESF
    one (see :func:`arrival_increments`).
    """
    inc = arrival_increments(k, mix, params, "lesf")
    w, m = reduced_mix(k, mix, params)
    vals, _ = cdf_linear_poisson(np.concatenate(([1.0], 1.0 - inc)), w, m, inv)
    in_set = vals[0]
    diff = np.where(inc > 0, vals[0] - vals[1:], 0.0)
    lam_k = float(np.dot(mix.lam, np.maximum(diff, 0.0)))
    if lam_k <= 0.0:
        return 0.0, math.inf, math.inf
    return lam_k, in_set / lam_k, (1.0 - in_set) / lam_k


@dataclass(frozen=True)
class ClassMetrics:
    """Analytic metrics of one class; throughput fields are filled by Monte Carlo."""

    k: int
    sinr_db: float
    phi: float
    p_outage: float
    mean_outage_time: float
    norm_outage_time: float
    mean_incidents: float
    mean_incidents_kr: float
    incident_intensity: float
    mean_uptime: float
    mean_outage_spell: float
    method: str
    throughput: float | None = None
    outage_throughput: float | None = None
    deep_outage_fraction: float | None = None


def class_metrics(
    mix: TrafficMix,
    params: PolicyParams,
    inv: InversionParams | None = None,
    quantum: float | None = 1e-4,
    increments: Increments = "lesf",
) -> list[ClassMetrics]:
    """Sweep every class of ``mix``. ``quantum=None`` skips the KR route."""
    inv = inv or InversionParams()
    out = []
    for k in range(1, mix.J + 1):
        w, m = reduced_mix(k, mix, params)
        thr = 1.0 - mix.phi[k - 1]
        inc = arrival_increments(k, mix, params, increments)
        vinc = arrival_increments(k, mix, params, "lesf")
        points = np.concatenate(([thr, 1.0], thr - inc, 1.0 - vinc))
        vals, method = cdf_linear_poisson(points, w, m, inv)
        f_thr, f_one = vals[0], vals[1]
        mu_k = mix.mu[k - 1]
        p = 1.0 - f_thr
        d_inc = np.where(inc > 0, np.maximum(f_thr - vals[2 : 2 + mix.J], 0.0), 0.0)
        m_direct = float(np.dot(mix.lam, d_inc) / mu_k)
        if quantum is None:
            m_kr = math.nan
        else:
            b = kr_blocking(k, mix, params, quantum, increments)
            m_kr = float(f_thr * np.dot(mix.lam, b) / mu_k)
        v_inc = np.where(vinc > 0, np.maximum(f_one - vals[2 + mix.J :], 0.0), 0.0)
        lam_k = float(np.dot(mix.lam, v_inc))
        if lam_k > 0:
            up, down = f_one / lam_k, (1.0 - f_one) / lam_k
        else:
            up = down = math.inf
        out.append(
            ClassMetrics(
                k=k,
                sinr_db=float(mix.sinr_db[k - 1]),
                phi=float(mix.phi[k - 1]),
                p_outage=p,
                mean_outage_time=p / mu_k,
                norm_outage_time=p,
                mean_incidents=m_direct,
                mean_incidents_kr=m_kr,
                incident_intensity=lam_k,
                mean_uptime=up,
                mean_outage_spell=down,
                method=method,
            )
        )
    return out
