"""Monte Carlo estimates of non-linear functionals of the stationary configuration.

A class-k call arriving in steady state sees ``X + e_k`` with ``X`` Poisson.
Its best-effort throughput and its deep-outage indicator are non-linear in
``X`` and are averaged over draws. Draws for class ``k`` and batch ``b`` come
from their own counter-based substream keyed by ``(seed, k, b)``, so results
do not depend on the order in which classes or batches are processed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from streamqos.analytic import InversionParams, eval_F
from streamqos.policy import DEEP_OUTAGE, SERVED, PolicyParams, _evaluate_kernel, eligibility_end
from streamqos.traffic import TrafficMix


@dataclass(frozen=True)
class McParams:
    samples: int = 20_000
    seed: int = 0
    batches: int = 100

    def __post_init__(self):
        if self.samples < 1 or self.batches < 1:
            raise ValueError("samples and batches must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class ThroughputEstimate:
    k: int
    throughput: float
    outage_throughput: float
    deep_outage_fraction: float
    outage_fraction: float
    stderr_throughput: float
    stderr_outage_throughput: float
    stderr_deep: float
    stderr_outage: float


def substream(seed: int, k: int, batch: int) -> np.random.Generator:
    """Philox generator for class ``k`` (1-based) and batch ``batch``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k, batch))))


@njit(cache=True)
def _tagged_kernel(X, k0, phi, peak, delta, elig_end):
    n, J = X.shape
    rate = np.zeros(n)
    deep = np.zeros(n)
    outage = np.zeros(n)
    states = np.empty(J, dtype=np.int64)
    rates = np.empty(J)
    x = np.empty(J, dtype=np.int64)
    for i in range(n):
        for j in range(J):
            x[j] = X[i, j]
        x[k0] += 1
        _evaluate_kernel(x, phi, peak, delta, elig_end, states, rates)
        if states[k0] != SERVED:
            outage[i] = 1.0
            rate[i] = rates[k0]
        if states[k0] == DEEP_OUTAGE:
            deep[i] = 1.0
    return rate, deep, outage


def _batch_sizes(mc: McParams) -> list[int]:
    nb = min(mc.batches, mc.samples)
    base, extra = divmod(mc.samples, nb)
    return [base + (1 if b < extra else 0) for b in range(nb)]


def _batch_means(k: int, mix: TrafficMix, params: PolicyParams, mc: McParams):
    elig = eligibility_end(mix.phi, params.delta)
    sizes = _batch_sizes(mc)
    means = np.empty((len(sizes), 3))
    for b, size in enumerate(sizes):
        X = substream(mc.seed, k, b).poisson(mix.rho, size=(size, mix.J)).astype(np.int64)
        rate, deep, outage = _tagged_kernel(X, k - 1, mix.phi, mix.peak, params.delta, elig)
        means[b] = rate.mean(), deep.mean(), outage.mean()
    return np.asarray(sizes, dtype=float), means


def _mean_and_stderr(weights, values):
    mean = float(np.dot(weights, values) / weights.sum())
    nb = values.size
    if nb < 2:
        return mean, math.nan
    # Batch means with unequal sizes differ by at most one sample; treat them as equal.
    return mean, float(values.std(ddof=1) / math.sqrt(nb))


def throughput(
    k: int,
    mix: TrafficMix,
    params: PolicyParams,
    mc: McParams | None = None,
    inv: InversionParams | None = None,
) -> ThroughputEstimate:
    """Mean throughput of a class-k call and the part earned while in outage.

    The served part ``r_k * F_k(1 - phi_k)`` is analytic; only the
    best-effort part is sampled, so its standard error is the one of T_k.
    """
    mc = mc or McParams()
    if not 1 <= k <= mix.J:
        raise ValueError(f"class index {k} outside 1..{mix.J}")
    sizes, means = _batch_means(k, mix, params, mc)
    tp, se_tp = _mean_and_stderr(sizes, means[:, 0])
    deep, se_deep = _mean_and_stderr(sizes, means[:, 1])
    out, se_out = _mean_and_stderr(sizes, means[:, 2])
    served = mix.rate[k - 1] * eval_F(1.0 - mix.phi[k - 1], k, mix, params, inv)
    return ThroughputEstimate(
        k=k,
        throughput=served + tp,
        outage_throughput=tp,
        deep_outage_fraction=deep,
        outage_fraction=out,
        stderr_throughput=se_tp,
        stderr_outage_throughput=se_tp,
        stderr_deep=se_deep,
        stderr_outage=se_out,
    )


def deep_outage_fraction(k: int, mix: TrafficMix, params: PolicyParams, mc: McParams | None = None) -> float:
    """Long-run fraction of a class-k call spent in deep outage."""
    mc = mc or McParams()
    sizes, means = _batch_means(k, mix, params, mc)
    return _mean_and_stderr(sizes, means[:, 1])[0]


def throughput_sweep(
    mix: TrafficMix,
    params: PolicyParams,
    mc: McParams | None = None,
    inv: InversionParams | None = None,
) -> list[ThroughputEstimate]:
    return [throughput(k, mix, params, mc, inv) for k in range(1, mix.J + 1)]
