"""Least-effort-served-first policies with a fairness margin delta.

Classes are served in order of increasing resource demand. The cutoff K is
the last class whose users, together with every lighter class and every
heavier user whose demand is within ``(1 + delta)`` of it, fit in the
unit capacity. Users of classes above K are in outage; those within the
margin share the leftover capacity as best-effort rate, the others are in
deep outage.

The numba kernels at the bottom are the single implementation used by the
public functions, the Monte Carlo estimators and the event simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from streamqos.traffic import TrafficMix, as_configuration

# Slack on the unit capacity and on the eligibility threshold so that
# configurations sitting exactly on a boundary are not split by rounding
# (demands read back from dB values carry relative errors near 1e-13).
CAP_TOL = 1e-9
ELIG_RTOL = 1e-9

SERVED, OUTAGE, DEEP_OUTAGE = 0, 1, 2


class ClassState(IntEnum):
    SERVED = SERVED
    OUTAGE = OUTAGE
    DEEP_OUTAGE = DEEP_OUTAGE


@dataclass(frozen=True)
class PolicyParams:
    """Fairness margin; ``math.inf`` gives the fair policy, 0 the optimal one."""

    delta: float = 0.0

    def __post_init__(self):
        d = float(self.delta)
        if math.isnan(d) or d < 0:
            raise ValueError(f"delta must be in [0, inf], got {self.delta!r}")
        object.__setattr__(self, "delta", d)

    @classmethod
    def parse(cls, text) -> "PolicyParams":
        return cls(float(str(text).strip().lower().replace("infinity", "inf")))

    @property
    def label(self) -> str:
        return "inf" if math.isinf(self.delta) else f"{self.delta:g}"


def eligibility_end(phi: np.ndarray, delta: float) -> np.ndarray:
    """For each class k (0-based), the last index j with phi_j <= (1+delta) phi_k."""
    thresholds = phi * (1.0 + delta) * (1.0 + ELIG_RTOL)
    return (np.searchsorted(phi, thresholds, side="right") - 1).astype(np.int64)


@njit(cache=True)
def _cutoff_kernel(x, phi, elig_end):
    J = phi.shape[0]
    cum_x = np.zeros(J + 1, dtype=np.int64)
    for j in range(J):
        cum_x[j + 1] = cum_x[j] + x[j]
    lighter = 0.0
    K = 0
    for k in range(J):
        load = lighter + phi[k] * (cum_x[elig_end[k] + 1] - cum_x[k])
        if load <= 1.0 + CAP_TOL:
            K = k + 1
        lighter += phi[k] * x[k]
    return K


@njit(cache=True)
def _states_kernel(K, phi, delta, out):
    J = phi.shape[0]
    for k in range(J):
        if k < K:
            out[k] = SERVED
        elif K == 0:
            out[k] = DEEP_OUTAGE
        elif phi[k] <= (1.0 + delta) * phi[K - 1] * (1.0 + ELIG_RTOL):
            out[k] = OUTAGE
        else:
            out[k] = DEEP_OUTAGE


@njit(cache=True)
def _best_effort_share(x, K, phi, states):
    """Fraction of capacity given to each eligible user in outage (0 if none)."""
    J = phi.shape[0]
    used = 0.0
    for j in range(K):
        used += phi[j] * x[j]
    eligible = 0
    for j in range(K, J):
        if states[j] == OUTAGE:
            eligible += x[j]
    if eligible == 0:
        return 0.0
    return (1.0 - used) / eligible


@njit(cache=True)
def _evaluate_kernel(x, phi, peak, delta, elig_end, states, rates):
    """Cutoff, class states and best-effort rates for one configuration."""
    K = _cutoff_kernel(x, phi, elig_end)
    _states_kernel(K, phi, delta, states)
    share = _best_effort_share(x, K, phi, states)
    for k in range(phi.shape[0]):
        rates[k] = peak[k] * share if states[k] == OUTAGE else 0.0
    return K


def cutoff(x, mix: TrafficMix, params: PolicyParams) -> int:
    """Number K of fully served classes (1..K served, 0 when none qualifies)."""
    x = as_configuration(x, mix)
    return int(_cutoff_kernel(x, mix.phi, eligibility_end(mix.phi, params.delta)))


def class_states(x, mix: TrafficMix, params: PolicyParams) -> list[ClassState]:
    x = as_configuration(x, mix)
    K = _cutoff_kernel(x, mix.phi, eligibility_end(mix.phi, params.delta))
    out = np.empty(mix.J, dtype=np.int64)
    _states_kernel(K, mix.phi, params.delta, out)
    return [ClassState(int(s)) for s in out]


def best_effort_rates(x, mix: TrafficMix, params: PolicyParams) -> np.ndarray:
    """Best-effort rate (bit/s) of each class; zero for served and deep-outage classes."""
    x = as_configuration(x, mix)
    states = np.empty(mix.J, dtype=np.int64)
    rates = np.empty(mix.J)
    _evaluate_kernel(
        x, mix.phi, mix.peak, params.delta, eligibility_end(mix.phi, params.delta), states, rates
    )
    return rates


def outage_sinr_interval(mix: TrafficMix, K: int, params: PolicyParams) -> tuple[float, float]:
    """Linear SINR range of users in outage but not in deep outage when class K
    is the last served one. Only defined when every class requests the same rate."""
    if not 1 <= K <= mix.J:
        raise ValueError(f"K must be in 1..{mix.J}")
    if not np.allclose(mix.rate, mix.rate[0], rtol=1e-12, atol=0.0):
        raise ValueError("outage SINR interval requires equal requested rates")
    sinr_K = mix.classes[K - 1].sinr_lin
    if math.isinf(params.delta):
        return 0.0, sinr_K
    return (1.0 + sinr_K) ** (1.0 / (1.0 + params.delta)) - 1.0, sinr_K
