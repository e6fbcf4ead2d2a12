"""Link adaptation and PF scheduling under HARQ Chase combining in multi-cell downlinks.

The analytical side approximates the aggregate inter-cell interference (GA or
IPLA), inverts the resulting characteristic function to get outage
probabilities, and picks throughput-optimal source rates.  The simulation
side checks those choices against exact Monte Carlo and compares five
cross-layer scheduling policies.
"""
from .bessel import bessel_k
from .cfmath import Approx, CfSpec, QuadratureConfig, QuadratureError, gil_pelaez_cdf
from .channel import SinrModel
from .dlt import DltCurve, RateDecision, SearchConfig, dlt, dlt_curve, optimize_rate, outage_probability
from .geometry import CellTopology, build_user
from .policies import PolicyDecision, PolicyKind
from .sim import MetricsReport, ScenarioConfig, SingleLinkConfig, run_scenario

__all__ = [
    "Approx",
    "CellTopology",
    "CfSpec",
    "DltCurve",
    "MetricsReport",
    "PolicyDecision",
    "PolicyKind",
    "QuadratureConfig",
    "QuadratureError",
    "RateDecision",
    "ScenarioConfig",
    "SearchConfig",
    "SinrModel",
    "SingleLinkConfig",
    "bessel_k",
    "build_user",
    "dlt",
    "dlt_curve",
    "gil_pelaez_cdf",
    "optimize_rate",
    "outage_probability",
    "run_scenario",
]
