"""Monte Carlo experiments: single-link SINR and DLT studies, and the multi-user system runs."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .cfmath import DEFAULT_QUADRATURE, CfSpec, QuadratureConfig, gil_pelaez_cdf
from .channel import SinrModel, TrialStreams, draw_power_gain
from .dlt import DEFAULT_SEARCH, SearchConfig, dlt_table
from .geometry import CellTopology, build_user, place_users
from .mac import PF_INITIAL_T, PF_MODES, pf_ratios
from .policies import PolicyKind

DEFAULT_RADII = (150.0, 200.0, 250.0, 300.0, 400.0)
SINGLE_USER_RADIUS = 250.0
FAIRNESS_FLOOR = 1e-6


# --- single link --------------------------------------------------------------

@dataclass(frozen=True)
class SingleLinkConfig:
    """One user at polar (r, theta) with a fixed desired gain |w0|^2."""

    topology: CellTopology = field(default_factory=CellTopology.hexagonal)
    r: float = 250.0
    theta: float = math.pi / 2
    rho: float = 10.0 ** 4.3
    w0_mag2: float = 1.0
    n_max: int = 4

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.r <= 0:
            raise ValueError("user distance must be positive")
        if self.w0_mag2 <= 0:
            raise ValueError("|w0|^2 must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    def model(self, dominant=None) -> SinrModel:
        """SINR model; ``dominant=m`` keeps only the m strongest interferers."""
        user = build_user(self.topology, self.r, self.theta)
        m = SinrModel.for_user(user, self.w0_mag2, self.rho)
        if dominant is None:
            return m
        if not 1 <= dominant <= m.K:
            raise ValueError(f"dominant must be in 1..{m.K}")
        keep = np.sort(np.argsort(m.pathloss_ici)[::-1][:dominant])
        return SinrModel(m.s, m.pathloss_ici[keep], m.rho)

    def spec(self, kind, n=1) -> CfSpec:
        return CfSpec.from_model(self.model(), kind, n)


def effective_sinr_paths(model: SinrModel, n_max, samples, rng):
    """Accumulated SINR after 1..n_max attempts for independent processes.

    Returns shape (samples, n_max); column n-1 holds gamma(n).
    """
    gains = draw_power_gain(rng, (samples, n_max, model.K))
    return np.cumsum(model.sinr(gains), axis=1)


def empirical_effective_sinr(config: SingleLinkConfig, n, samples, rng, dominant=None):
    """i.i.d. samples of gamma(n) under the exact weighted interference."""
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    if not 1 <= n:
        raise ValueError("n must be at least 1")
    return effective_sinr_paths(config.model(dominant), n, samples, rng)[:, n - 1]


class BisectionError(RuntimeError):
    pass


def cdf_quantile(spec: CfSpec, probs, q: QuadratureConfig = DEFAULT_QUADRATURE, rel_tol=1e-10,
                 max_iter=200):
    """Invert the Gil-Pelaez CDF by bisection in log x, all probabilities at once."""
    p = np.asarray(probs, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("quantile probabilities must lie in (0, 1)")
    lo = np.full(p.shape, math.log(spec.beta) - 2.0)
    hi = np.full(p.shape, math.log(spec.beta) + 2.0)
    for _ in range(200):
        low_bad = gil_pelaez_cdf(spec, np.exp(lo), q) >= p
        high_bad = gil_pelaez_cdf(spec, np.exp(hi), q) < p
        if not (low_bad.any() or high_bad.any()):
            break
        lo = np.where(low_bad, lo - 4.0, lo)
        hi = np.where(high_bad, hi + 4.0, hi)
    else:
        raise BisectionError("could not bracket the requested quantiles")
    for _ in range(max_iter):
        if np.all(hi - lo <= rel_tol):
            break
        mid = 0.5 * (lo + hi)
        below = gil_pelaez_cdf(spec, np.exp(mid), q) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        raise BisectionError(f"bisection stopped at width {np.max(hi - lo):.3g} in log x")
    return np.exp(0.5 * (lo + hi))


@dataclass(frozen=True)
class QQData:
    p: np.ndarray
    theoretical: np.ndarray
    empirical: np.ndarray
    approx: str
    n: int

    def rows(self):
        for p, t, e in zip(self.p, self.theoretical, self.empirical):
            yield {"p": float(p), "theoretical_q": float(t), "empirical_q": float(e),
                   "approx": self.approx, "n": self.n}


QQ_COLUMNS = ["p", "theoretical_q", "empirical_q", "approx", "n"]


def qq_data(samples, spec: CfSpec, probs, q: QuadratureConfig = DEFAULT_QUADRATURE) -> QQData:
    """Paired (approximate-model, empirical) quantiles."""
    probs = np.asarray(probs, dtype=float)
    theo = cdf_quantile(spec, probs, q)
    emp = np.quantile(np.asarray(samples, dtype=float), probs, method="inverted_cdf")
    return QQData(probs, theo, emp, spec.kind.value, spec.n)


def harq_outcomes(gamma_paths, rates):
    """First successful attempt (0 = drop) for every process and rate.

    ``gamma_paths`` is (processes, n_max) accumulated SINR; returns an int array
    of shape (len(rates), processes).
    """
    cap = np.log2(1.0 + gamma_paths)
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    ok = cap[None, :, :] >= rates[:, None, None]
    first = np.argmax(ok, axis=2) + 1
    return np.where(ok.any(axis=2), first, 0)


def delivered_rates(gamma_paths, rates):
    """Per-process delivered rate R/n (0 on drop), shape (len(rates), processes)."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    n = harq_outcomes(gamma_paths, rates)
    return np.where(n > 0, rates[:, None] / np.maximum(n, 1), 0.0)


@dataclass(frozen=True)
class SimulatedDlt:
    rates: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    variant: str

    def rows(self):
        for r, m, s in zip(self.rates, self.mean, self.stderr):
            yield {"approx": self.variant, "R": float(r), "S_R": float(m), "stderr": float(s)}


def single_link_dlt_sim(config: SingleLinkConfig, rates, processes, rng, dominant=None,
                        paths=None) -> SimulatedDlt:
    """Monte Carlo DLT: mean delivered rate over independent HARQ processes.

    All rates share one set of fading paths, so differences between rates (and
    between the exact and dominant variants when ``paths`` is reused) are
    paired.  ``paths`` may be supplied as interference gains of shape
    (processes, n_max, K) to reuse draws across variants.
    """
    model = config.model()
    if paths is None:
        paths = draw_power_gain(rng, (processes, config.n_max, model.K))
    gains = np.asarray(paths)
    if dominant is not None:
        keep = np.sort(np.argsort(model.pathloss_ici)[::-1][:dominant])
        gains = gains[:, :, keep]
    gamma = np.cumsum(config.model(dominant).sinr(gains), axis=1)
    d = delivered_rates(gamma, rates)
    n = d.shape[1]
    variant = "exact" if dominant is None else f"dominant{dominant}"
    return SimulatedDlt(np.atleast_1d(np.asarray(rates, dtype=float)), d.mean(axis=1),
                        d.std(axis=1, ddof=1) / math.sqrt(n), variant)


# --- system level -------------------------------------------------------------

def user_radii(n_users, radii=DEFAULT_RADII, single=SINGLE_USER_RADIUS):
    """Radii cycling through ``radii``; a lone user sits at ``single``."""
    if n_users < 1:
        raise ValueError("need at least one user")
    if n_users == 1:
        return np.array([float(single)])
    if n_users % len(radii):
        raise ValueError(f"n_users must be 1 or a multiple of {len(radii)}")
    return np.tile(np.asarray(radii, dtype=float), n_users // len(radii))


@dataclass(frozen=True)
class ScenarioConfig:
    topology: CellTopology = field(default_factory=CellTopology.hexagonal)
    n_users: int = 25
    user_radii: tuple = DEFAULT_RADII
    n_max: int = 4
    rho: float = 10.0 ** 4.3
    policy: PolicyKind = PolicyKind.IPLA
    horizon: int = 200_000
    trials: int = 20
    seed: int = 0
    t_c: float = 1000.0
    delta: int = 1
    pf_mode: str = "per_slot"
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE
    search: SearchConfig = DEFAULT_SEARCH

    def __post_init__(self):
        object.__setattr__(self, "policy", PolicyKind.parse(self.policy.value if isinstance(
            self.policy, PolicyKind) else self.policy))
        object.__setattr__(self, "user_radii", tuple(float(r) for r in self.user_radii))
        user_radii(self.n_users, self.user_radii)
        if any(r <= 0 for r in self.user_radii):
            raise ValueError("user radii must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.trials < 1 or self.horizon < 1 or self.n_max < 1:
            raise ValueError("trials, horizon and n_max must be at least 1")
        if self.t_c < 1:
            raise ValueError("t_c must be at least 1")
        if self.delta < 1:
            raise ValueError("feedback delay must be at least one slot")
        if self.pf_mode not in PF_MODES:
            raise ValueError(f"pf_mode must be one of {PF_MODES}")

    @property
    def radii(self):
        return user_radii(self.n_users, self.user_radii)

    def with_(self, **kw):
        return replace(self, **kw)


def trial_pathloss(config: ScenarioConfig, streams: TrialStreams):
    thetas = streams.angles(config.n_users)
    return place_users(config.topology, config.radii, thetas)


@dataclass
class CellBatchResult:
    """Per-trial outcome of the vectorised engine."""

    delivered: np.ndarray      # (trials, users)
    slots: np.ndarray          # (trials,)
    T: np.ndarray              # final PF averages, (trials, users)
    decisions: np.ndarray      # (trials,)
    flags: Counter = field(default_factory=Counter)
    selections: list | None = None

    @property
    def system_dlt(self):
        return self.delivered.sum(axis=1) / self.slots

    @property
    def achieved(self):
        return self.delivered / self.slots[:, None]


def _policy_rates(policy, s, L, noise, engine):
    """Source and effective rates for every (trial, decision, user)."""
    if policy is PolicyKind.AVGX or policy is PolicyKind.ISINR:
        r = np.log2(1.0 + s / (L.sum(axis=-1)[:, None, :] + noise))
        return r, r
    beta = s / (L.sum(axis=-1)[:, None, :] + noise if policy is PolicyKind.GA
                else L.mean(axis=-1)[:, None, :])
    r, S = engine.decide(beta)
    return r, np.minimum(np.maximum(S, 0.0), r)


def simulate_cells(pathloss, policy: PolicyKind, horizon, streams, *, n_max=4, rho=10 ** 4.3,
                   delta=1, t_c=1000.0, pf_mode="per_slot", engine=None, block=256,
                   record_selections=False) -> CellBatchResult:
    """The cell procedure of :func:`mac.run_cell_procedure`, vectorised over trials.

    ``pathloss`` has shape (trials, users, K+1) and ``streams`` holds one
    :class:`TrialStreams` per trial.  Decision draws are generated in blocks;
    only the PF scheduling recursion runs decision by decision.
    """
    policy = PolicyKind.parse(policy.value if isinstance(policy, PolicyKind) else policy)
    pathloss = np.asarray(pathloss, dtype=float)
    M, U, K1 = pathloss.shape
    K = K1 - 1
    if len(streams) != M:
        raise ValueError("need one stream set per trial")
    if policy.expected_throughput and engine is None:
        engine = dlt_table(1 if policy is PolicyKind.GA else K, n_max)
    if policy is PolicyKind.ISINR and delta < 1:
        raise ValueError("feedback delay must be at least one slot")
    L0 = pathloss[:, :, 0]
    L = pathloss[:, :, 1:]
    noise = 1.0 / rho
    inv = 1.0 / t_c
    keep = 1.0 - 1.0 / t_c
    genie = policy is PolicyKind.GENIE
    isinr = policy is PolicyKind.ISINR

    T = np.full((M, U), PF_INITIAL_T)
    delivered = np.zeros((M, U))
    slot = np.zeros(M, dtype=np.int64)
    decisions = np.zeros(M, dtype=np.int64)
    flags = Counter()
    rows = np.arange(M)
    prev_user = np.full(M, -1)
    prev_gain = np.zeros((M, K))
    prev_valid = np.zeros(M, dtype=bool)
    selections = [[] for _ in range(M)] if record_selections else None

    while np.any(slot < horizon):
        draws = [st.block(block, U, K, n_max, current=genie, stale=isinr) for st in streams]
        w0 = np.stack([d.w0 for d in draws])                      # (M, B, U)
        att = np.stack([d.attempts for d in draws])               # (M, B, n, K)
        s = L0[:, None, :] * w0
        if genie:
            cur = np.stack([d.current for d in draws])            # (M, B, U, K)
            x = (cur * L[:, None, :, :]).sum(axis=-1)
            r_src = np.log2(1.0 + s / (x + noise))
            r_eff = r_src
        else:
            r_src, r_eff = _policy_rates(policy, s, L, noise, engine)
            x = (att[:, :, None, :, :] * L[:, None, :, None, :]).sum(axis=-1)  # (M, B, U, n)
            gamma = np.cumsum(s[..., None] / (x + noise), axis=-1)
            cap = np.log2(1.0 + gamma)
        if isinr:
            avg_r = r_src
            st_g = np.stack([d.stale for d in draws])             # (M, B, U, K)
            xs = (st_g * L[:, None, :, :]).sum(axis=-1)
            r_src = np.log2(1.0 + s / (xs + noise))
            r_eff = r_src
        for j in range(block):
            act = slot < horizon
            if not act.any():
                break
            rs = r_src[:, j, :]
            re = r_eff[:, j, :]
            if isinr:
                rs = rs.copy()
                cold = act & (slot - delta < 0)
                if cold.any():
                    rs[cold] = avg_r[cold, j, :]
                    flags["cold_start"] += int(cold.sum()) * U
                fix = act & ~cold & prev_valid
                if fix.any():
                    m = rows[fix]
                    u = prev_user[fix]
                    xp = (prev_gain[fix] * L[m, u, :]).sum(axis=-1)
                    rs[m, u] = np.log2(1.0 + s[m, j, u] / (xp + noise))
                re = rs
            elif policy.expected_throughput:
                flags["rate_cap"] += int(np.sum((rs >= engine.search.r_max) & act[:, None]))
            sel = np.argmax(pf_ratios(T, re), axis=1)
            r_sel = rs[rows, sel]
            if genie:
                used = np.ones(M, dtype=np.int64)
                success = np.ones(M, dtype=bool)
            else:
                ok = cap[rows, j, sel, :] >= r_sel[:, None]
                success = ok.any(axis=1)
                used = np.where(success, np.argmax(ok, axis=1) + 1, n_max)
            rate = np.where(success, r_sel / used, 0.0)
            if pf_mode == "per_slot":
                for k in range(n_max - 1):
                    dec = act & (k < used - 1)
                    T = np.where(dec[:, None], keep * T, T)
            T_new = (1.0 - inv) * T
            T_new[rows, sel] += inv * rate
            T = np.where(act[:, None], T_new, T)
            gain = np.where(success, r_sel, 0.0)
            delivered[rows[act], sel[act]] += gain[act]
            slot = np.where(act, slot + used, slot)
            decisions += act
            if isinr:
                idx = used - delta
                prev_valid = np.where(act, idx >= 0, prev_valid)
                take = act & (idx >= 0)
                prev_gain[take] = att[rows[take], j, idx[take], :]
                prev_user = np.where(act, sel, prev_user)
            if record_selections:
                for m in rows[act]:
                    selections[m].append(int(sel[m]))
    flags = Counter({k: v for k, v in flags.items() if v})
    return CellBatchResult(delivered, slot.astype(float), T, decisions, flags, selections)


def t_halfwidth(x, level=0.95):
    """Half-width of the two-sided t confidence interval for the mean of x."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float("nan")
    return float(stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))


def paired_difference(a, b, level=0.95):
    """Mean and CI half-width of the per-trial differences a - b."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(d.mean()), t_halfwidth(d, level)


@dataclass
class MetricsReport:
    policy: str
    n_users: int
    system_dlt: float
    system_dlt_ci: float
    fairness: float
    fairness_ci: float
    per_user_T: np.ndarray
    trial_system_dlt: np.ndarray
    trial_fairness: np.ndarray
    floored: int = 0
    flags: dict = field(default_factory=dict)

    @property
    def ci_halfwidth(self):
        return self.system_dlt_ci

    def trial_rows(self):
        for i, (s, f) in enumerate(zip(self.trial_system_dlt, self.trial_fairness)):
            yield {"policy": self.policy, "n_users": self.n_users, "trial": i,
                   "system_dlt": float(s), "fairness": float(f)}

    def summary_row(self):
        return {"policy": self.policy, "n_users": self.n_users,
                "trials": int(self.trial_system_dlt.size),
                "system_dlt": self.system_dlt, "system_dlt_ci95": self.system_dlt_ci,
                "fairness": self.fairness, "fairness_ci95": self.fairness_ci,
                "fairness_floored": self.floored}


TRIAL_COLUMNS = ["policy", "n_users", "trial", "system_dlt", "fairness"]
SUMMARY_COLUMNS = ["policy", "n_users", "trials", "system_dlt", "system_dlt_ci95", "fairness",
                   "fairness_ci95", "fairness_floored"]


def fairness_metric(T, floor=FAIRNESS_FLOOR):
    """Sum of log throughputs with a floor; returns (value, number floored)."""
    T = np.asarray(T, dtype=float)
    floored = int(np.sum(T < floor))
    return float(np.sum(np.log(np.maximum(T, floor)), axis=-1)), floored


def run_scenario(config: ScenarioConfig, engine=None) -> MetricsReport:
    """``config.trials`` independent home-cell runs of ``config.horizon`` slots."""
    streams = [TrialStreams(config.seed, t) for t in range(config.trials)]
    pl = np.stack([trial_pathloss(config, st) for st in streams])
    if config.policy.expected_throughput and engine is None:
        order = 1 if config.policy is PolicyKind.GA else config.topology.K
        engine = dlt_table(order, config.n_max, config.quadrature, config.search)
    res = simulate_cells(pl, config.policy, config.horizon, streams, n_max=config.n_max,
                         rho=config.rho, delta=config.delta, t_c=config.t_c,
                         pf_mode=config.pf_mode, engine=engine)
    achieved = res.achieved
    fm = np.empty(config.trials)
    floored = 0
    for i in range(config.trials):
        fm[i], f = fairness_metric(achieved[i])
        floored += f
    sd = res.system_dlt
    return MetricsReport(
        policy=config.policy.value,
        n_users=config.n_users,
        system_dlt=float(sd.mean()),
        system_dlt_ci=t_halfwidth(sd),
        fairness=float(fm.mean()),
        fairness_ci=t_halfwidth(fm),
        per_user_T=achieved.mean(axis=0),
        trial_system_dlt=sd,
        trial_fairness=fm,
        floored=floored,
        flags=dict(res.flags),
    )
