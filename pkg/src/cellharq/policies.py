"""Cross-layer policies: a rate-selection rule paired with an effective-rate mapping.

Each policy returns the source rate the BS transmits with and the effective
rate the PF scheduler ranks users by.  The three conventional policies use
the source rate itself; the GA and IPLA policies rank by the expected
throughput S(R*) of the chosen rate.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cfmath import DEFAULT_QUADRATURE, Approx, CfSpec, QuadratureConfig
from .channel import SinrModel
from .dlt import DEFAULT_SEARCH, DltTable, RateSearchWarning, SearchConfig, optimize_rate


class PolicyKind(str, Enum):
    GENIE = "genie"
    ISINR = "isinr"
    AVGX = "avgx"
    GA = "ga"
    IPLA = "ipla"

    @property
    def expected_throughput(self) -> bool:
        return self in (PolicyKind.GA, PolicyKind.IPLA)

    @property
    def approx(self):
        return {PolicyKind.GA: Approx.GA, PolicyKind.IPLA: Approx.IPLA}.get(self)

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            ids = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {name!r}; expected one of {ids}") from None


@dataclass(frozen=True)
class PolicyDecision:
    user: int
    r_source: float
    r_eff: float
    flags: tuple = ()

    def __post_init__(self):
        if not (self.r_source >= 0 and self.r_eff >= 0):
            raise ValueError("rates must be non-negative")


def capacity(sinr):
    """log2(1 + sinr)."""
    return np.log2(1.0 + np.asarray(sinr, dtype=float)) if np.ndim(sinr) else math.log2(1.0 + sinr)


def _plain(user, rate, flags=()):
    rate = float(rate)
    return PolicyDecision(user, rate, rate, tuple(flags))


def rs_genie(model: SinrModel, ici_now, user=0) -> PolicyDecision:
    """Capacity at the true SINR of the coming slot.  The MAC never lets it fail."""
    return _plain(user, capacity(model.sinr(ici_now)))


def rs_inst_sinr(model: SinrModel, ici_delayed, delta=1, user=0) -> PolicyDecision:
    """Capacity at the SINR observed ``delta`` slots ago.

    ``ici_delayed=None`` means nothing has been observed yet; the decision then
    falls back to the average-interference rule and is flagged.
    """
    if delta < 0:
        raise ValueError("feedback delay must be non-negative")
    if ici_delayed is None:
        d = rs_avg_x(model, user)
        return PolicyDecision(user, d.r_source, d.r_eff, ("cold_start",))
    return _plain(user, capacity(model.sinr(ici_delayed)))


def rs_avg_x(model: SinrModel, user=0) -> PolicyDecision:
    """Capacity with the interference replaced by its mean sum_k L_k."""
    return _plain(user, capacity(model.s / (model.mean_interference + model.noise)))


@functools.lru_cache(maxsize=4096)
def _memo_decision(kind, order, beta_key, n_max, q, search):
    # the CDF depends on (s, scale) only through beta = s/scale
    spec = CfSpec(kind=kind, s=beta_key, scale=1.0, K=order if kind is Approx.IPLA else 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RateSearchWarning)
        d = optimize_rate(spec, n_max, q, search)
    flags = []
    if d.capped:
        flags.append("rate_cap")
    if not d.unimodal:
        flags.append("non_unimodal")
    return d.r_star, d.s_at_r_star, tuple(flags), len(caught)


def _quantise(beta):
    # six significant digits: well below the golden-section tolerance on R*
    return float(f"{beta:.6g}")


def _expected_policy(kind: Approx, model, n_max, q, search, engine, user, memo):
    spec = CfSpec.from_model(model, kind, 1)
    if engine is not None:
        if engine.order != spec.order or engine.n_max != n_max:
            raise ValueError("rate table does not match the policy's CF order or N_max")
        r, s = engine.decide(spec.beta)
        r, s = float(r), float(s)
        flags = ("rate_cap",) if r >= engine.search.r_max else ()
    elif memo:
        r, s, flags, _ = _memo_decision(kind, spec.order, _quantise(spec.beta), n_max, q, search)
    else:
        d = optimize_rate(spec, n_max, q, search)
        r, s = d.r_star, d.s_at_r_star
        flags = (("rate_cap",) if d.capped else ()) + (() if d.unimodal else ("non_unimodal",))
    return PolicyDecision(user, r, min(max(s, 0.0), r), flags)


def rs_ga(model: SinrModel, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE,
          search: SearchConfig = DEFAULT_SEARCH, user=0, engine: DltTable | None = None,
          memo=False) -> PolicyDecision:
    """GA-optimal source rate; effective rate S_GA(R*)."""
    return _expected_policy(Approx.GA, model, n_max, q, search, engine, user, memo)


def rs_ipla(model: SinrModel, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE,
            search: SearchConfig = DEFAULT_SEARCH, user=0, engine: DltTable | None = None,
            memo=False) -> PolicyDecision:
    """IPLA-optimal source rate; effective rate S_IPLA(R*)."""
    return _expected_policy(Approx.IPLA, model, n_max, q, search, engine, user, memo)


def decide(kind: PolicyKind, model: SinrModel, *, user=0, ici_now=None, ici_delayed=None,
           delta=1, n_max=4, q=DEFAULT_QUADRATURE, search=DEFAULT_SEARCH, engine=None,
           memo=False) -> PolicyDecision:
    """Dispatch to the rate-selection rule of ``kind``."""
    if kind is PolicyKind.GENIE:
        if ici_now is None:
            raise ValueError("the genie policy needs the current interference gains")
        return rs_genie(model, ici_now, user)
    if kind is PolicyKind.ISINR:
        return rs_inst_sinr(model, ici_delayed, delta, user)
    if kind is PolicyKind.AVGX:
        return rs_avg_x(model, user)
    fn = rs_ga if kind is PolicyKind.GA else rs_ipla
    return fn(model, n_max, q, search, user=user, engine=engine, memo=memo)
