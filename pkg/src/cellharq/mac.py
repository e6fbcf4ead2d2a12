"""HARQ-CC processes, the proportional-fair scheduler and the per-cell procedure.

This is the readable reference implementation: one decision at a time with
explicit state objects.  :mod:`cellharq.sim` runs the same procedure
vectorised over trials and is checked against this loop.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .cfmath import DEFAULT_QUADRATURE
from .channel import SinrModel, TrialStreams
from .dlt import DEFAULT_SEARCH
from .policies import PolicyDecision, PolicyKind, decide

PF_INITIAL_T = 1e-3
PF_MODES = ("per_slot", "per_process")


class Outcome(str, Enum):
    IN_PROGRESS = "in_progress"
    SUCCESS = "success"
    DROP = "drop"


@dataclass(frozen=True)
class HarqProcess:
    """State of one HARQ-CC process.  ``attempt`` counts attempts made so far."""

    user: int
    r_source: float
    n_max: int
    w0_mag2: float = 1.0
    attempt: int = 0
    gamma_acc: float = 0.0
    outcome: Outcome = Outcome.IN_PROGRESS

    def __post_init__(self):
        if self.r_source < 0:
            raise ValueError("source rate must be non-negative")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @property
    def finished(self) -> bool:
        return self.outcome is not Outcome.IN_PROGRESS

    @property
    def slots_used(self) -> int:
        return self.attempt


def harq_step(proc: HarqProcess, gamma_i) -> HarqProcess:
    """Combine one more attempt with SINR ``gamma_i`` and apply the decoding test."""
    if proc.finished:
        raise RuntimeError(f"process for user {proc.user} already ended ({proc.outcome.value})")
    if not gamma_i > 0:
        raise ValueError("per-attempt SINR must be positive")
    acc = proc.gamma_acc + float(gamma_i)
    n = proc.attempt + 1
    if np.log2(1.0 + acc) >= proc.r_source:
        outcome = Outcome.SUCCESS
    elif n >= proc.n_max:
        outcome = Outcome.DROP
    else:
        outcome = Outcome.IN_PROGRESS
    return replace(proc, attempt=n, gamma_acc=acc, outcome=outcome)


def delivered_rate(proc: HarqProcess) -> float:
    """R/n after success at attempt n, 0 after a drop."""
    if not proc.finished:
        raise RuntimeError("delivered rate is only defined for finished processes")
    return proc.r_source / proc.attempt if proc.outcome is Outcome.SUCCESS else 0.0


@dataclass(frozen=True)
class PfState:
    T: np.ndarray
    t_c: float = 1000.0
    slot: int = 0

    def __post_init__(self):
        if self.t_c < 1:
            raise ValueError("PF window t_c must be at least 1")
        T = np.array(self.T, dtype=float)
        T.setflags(write=False)
        object.__setattr__(self, "T", T)

    @classmethod
    def initial(cls, n_users, t_c=1000.0, t0=PF_INITIAL_T):
        if n_users < 1:
            raise ValueError("need at least one user")
        return cls(np.full(n_users, float(t0)), t_c)


def pf_ratios(T, r_eff):
    r = np.asarray(r_eff, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = r / T
    # a fully decayed average (t_c = 1) makes any positive rate infinitely attractive
    return np.where(T > 0, ratio, np.where(r > 0, np.inf, 0.0))


def pf_select(pf: PfState, decisions) -> int:
    """argmax_u r_eff[u] / T[u]; ties go to the lowest user id."""
    r = [d.r_eff if isinstance(d, PolicyDecision) else d for d in decisions]
    if len(r) != pf.T.size or not r:
        raise ValueError("one decision per user is required")
    return int(np.argmax(pf_ratios(pf.T, r)))


def pf_decay(pf: PfState, slots=1) -> PfState:
    """Slots in which nobody finishes: every average decays."""
    T = pf.T
    keep = 1.0 - 1.0 / pf.t_c
    for _ in range(slots):
        T = keep * T
    return PfState(T, pf.t_c, pf.slot + slots)


def pf_update(pf: PfState, selected, delivered) -> PfState:
    """One EMA step with the indicator on ``selected``."""
    inv = 1.0 / pf.t_c
    T = (1.0 - inv) * pf.T
    T[selected] += inv * delivered
    return PfState(T, pf.t_c, pf.slot + 1)


@dataclass
class CellRunResult:
    pf: PfState
    delivered: np.ndarray
    slots: int
    selections: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    flags: Counter = field(default_factory=Counter)

    @property
    def system_dlt(self) -> float:
        return float(self.delivered.sum()) / self.slots

    @property
    def achieved(self) -> np.ndarray:
        """Per-user throughput: delivered bits over all slots of the run."""
        return self.delivered / self.slots


TRACE_COLUMNS = ("trial", "slot", "cell", "user", "attempt", "gamma_acc", "outcome")


class TraceWriter:
    """Per-attempt CSV log used by the replay tests."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(TRACE_COLUMNS)

    def write(self, trial, slot, cell, proc: HarqProcess):
        self._w.writerow([trial, slot, cell, proc.user, proc.attempt, repr(proc.gamma_acc),
                          proc.outcome.value])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def stale_gains(prev, slot, delta, fresh):
    """Interference gains a user saw ``delta`` slots before ``slot``.

    ``prev`` is (user, per-attempt gains) of the previous process, which ended
    at ``slot - 1``.  Slots inside it are known exactly; older slots of other
    users are unobserved i.i.d. draws, supplied as ``fresh``.
    """
    if slot - delta < 0:
        return None
    if prev is not None:
        n = len(prev[1])
        if 1 <= delta <= n:
            return prev[1][n - delta]
    return fresh


def run_cell_procedure(pathloss, policy: PolicyKind, pf: PfState, horizon, streams: TrialStreams,
                       *, n_max=4, rho=10 ** 4.3, delta=1, q=DEFAULT_QUADRATURE,
                       search=DEFAULT_SEARCH, engine=None, pf_mode="per_slot", trace=None,
                       trial=0, cell=0) -> CellRunResult:
    """Steps 1 to 4 of the cross-layer procedure until ``horizon`` slots are used.

    ``pathloss`` is the (n_users, K+1) matrix from :func:`geometry.place_users`.
    The process running at the horizon is completed, so the run may overshoot
    by up to ``n_max - 1`` slots; all metrics divide by the actual slot count.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one slot")
    if pf_mode not in PF_MODES:
        raise ValueError(f"pf_mode must be one of {PF_MODES}")
    if policy is PolicyKind.ISINR and delta < 1:
        raise ValueError("the system simulator needs a feedback delay of at least one slot")
    pathloss = np.asarray(pathloss, dtype=float)
    U, K = pathloss.shape[0], pathloss.shape[1] - 1
    if pf.T.size != U:
        raise ValueError("PF state size does not match the number of users")
    delivered = np.zeros(U)
    result = CellRunResult(pf, delivered, 0)
    slot = 0
    prev = None
    while slot < horizon:
        d = streams.block(1, U, K, n_max, current=policy is PolicyKind.GENIE,
                          stale=policy is PolicyKind.ISINR)
        decisions = []
        for u in range(U):
            model = SinrModel(pathloss[u, 0] * d.w0[0, u], pathloss[u, 1:], rho)
            delayed = None
            if policy is PolicyKind.ISINR:
                delayed = stale_gains(prev if prev and prev[0] == u else None, slot, delta,
                                      d.stale[0, u])
            dec = decide(policy, model, user=u,
                         ici_now=None if d.current is None else d.current[0, u],
                         ici_delayed=delayed, delta=delta, n_max=n_max, q=q, search=search,
                         engine=engine)
            result.flags.update(dec.flags)
            decisions.append(dec)
        sel = pf_select(pf, decisions)
        dec = decisions[sel]
        model = SinrModel(pathloss[sel, 0] * d.w0[0, sel], pathloss[sel, 1:], rho)
        proc = HarqProcess(sel, dec.r_source, n_max, float(d.w0[0, sel]))
        if policy is PolicyKind.GENIE:
            gains = [d.current[0, sel]]
            proc = replace(proc, attempt=1, gamma_acc=float(model.sinr(gains[0])),
                           outcome=Outcome.SUCCESS)
            if trace is not None:
                trace.write(trial, slot, cell, proc)
        else:
            gains = []
            while not proc.finished:
                g = d.attempts[0, proc.attempt]
                gains.append(g)
                proc = harq_step(proc, model.sinr(g))
                if trace is not None:
                    trace.write(trial, slot + proc.attempt - 1, cell, proc)
        n = proc.slots_used
        if pf_mode == "per_slot":
            pf = pf_update(pf_decay(pf, n - 1), sel, delivered_rate(proc))
        else:
            pf = replace(pf_update(pf, sel, delivered_rate(proc)), slot=pf.slot + n)
        if proc.outcome is Outcome.SUCCESS:
            delivered[sel] += proc.r_source
        result.selections.append(sel)
        result.outcomes.append((proc.outcome, n))
        slot += n
        prev = (sel, gains)
    result.pf = pf
    result.slots = slot
    return result
