"""Quality of real-time streaming under least-effort-served-first policies.

Analytic (transform inversion, Kaufman-Roberts), Monte Carlo and
discrete-event evaluation of outage metrics for multi-class streaming
calls sharing one server with a multi-rate linear capacity constraint.
"""

from streamqos.traffic import (
    RadioLink,
    ServiceClass,
    TrafficMix,
    sample_stationary,
    total_resource_demand,
)
from streamqos.policy import (
    ClassState,
    PolicyParams,
    best_effort_rates,
    class_states,
    cutoff,
    outage_sinr_interval,
)
from streamqos.analytic import (
    ClassMetrics,
    InversionParams,
    class_metrics,
    eval_F,
    kr_blocking,
    laplace_F,
    mean_incidents,
    mean_outage_time,
    outage_probability,
    virtual_metrics,
)

__version__ = "0.1.0"

__all__ = [
    "ClassMetrics",
    "ClassState",
    "InversionParams",
    "PolicyParams",
    "RadioLink",
    "ServiceClass",
    "TrafficMix",
    "best_effort_rates",
    "class_metrics",
    "class_states",
    "cutoff",
    "eval_F",
    "kr_blocking",
    "laplace_F",
    "mean_incidents",
    "mean_outage_time",
    "outage_probability",
    "outage_sinr_interval",
    "sample_stationary",
    "total_resource_demand",
    "virtual_metrics",
]
