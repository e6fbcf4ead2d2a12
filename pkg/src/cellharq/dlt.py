"""Outage probability, delay-limited throughput (DLT) and rate selection."""
from __future__ import annotations

import csv
import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .cfmath import (
    DEFAULT_QUADRATURE,
    Approx,
    CfSpec,
    QuadratureConfig,
    normalized_cdf_family,
    normalized_cdf_steps,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class RateSearchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SearchConfig:
    r_max: float = 12.0
    step: float = 0.1
    tol: float = 1e-3
    # dips shallower than this between two grid maxima do not count as a second peak
    unimodal_tol: float = 1e-6

    def __post_init__(self):
        if self.r_max <= 0 or self.step <= 0 or self.tol <= 0:
            raise ValueError("r_max, step and tol must be positive")
        if self.step > self.r_max:
            raise ValueError("grid step larger than the search range")

    @property
    def grid(self):
        n = int(round(self.r_max / self.step))
        return np.linspace(0.0, n * self.step, n + 1)


DEFAULT_SEARCH = SearchConfig()


def _rates(R):
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("rates must be non-negative")
    return R


def _outage_rows(order, beta, R, n_max, q):
    """P_out(n, R) for n = 0..n_max; shape (n_max + 1, len(R))."""
    R = np.atleast_1d(R)
    out = np.zeros((n_max + 1, R.size))
    pos = R > 0
    out[0, pos] = 1.0
    if np.any(pos) and n_max > 0:
        y = np.expm1(R[pos] * math.log(2.0)) / beta
        out[1:, pos] = np.clip(normalized_cdf_family(order, y, n_max, q), 0.0, 1.0)
    return out


def outage_probability(spec: CfSpec, R, q: QuadratureConfig = DEFAULT_QUADRATURE):
    """Pr{log2(1 + gamma(n)) < R} with n = ``spec.n``."""
    R = _rates(R)
    rows = _outage_rows(spec.order, spec.beta, R, spec.n, q)
    out = rows[spec.n]
    return float(out[0]) if R.ndim == 0 else out.reshape(R.shape)


def dlt(spec: CfSpec, R, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE, form="telescoping"):
    """Delay-limited throughput S(R) with at most ``n_max`` attempts.

    ``form="telescoping"`` differences the inverted CDFs; ``form="integral"``
    integrates the CF differences directly.  ``spec.n`` is ignored.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    R = _rates(R)
    Rf = np.atleast_1d(R)
    i = np.arange(1, n_max + 1)[:, None]
    if form == "telescoping":
        P = _outage_rows(spec.order, spec.beta, Rf, n_max, q)
        steps = P[:-1] - P[1:]
    elif form == "integral":
        steps = np.zeros((n_max, Rf.size))
        pos = Rf > 0
        if np.any(pos):
            y = np.expm1(Rf[pos] * math.log(2.0)) / spec.beta
            steps[:, pos] = normalized_cdf_steps(spec.order, y, n_max, q)
    else:
        raise ValueError(f"unknown DLT form {form!r}")
    S = np.sum(Rf[None, :] / i * steps, axis=0)
    return float(S[0]) if R.ndim == 0 else S.reshape(R.shape)


@dataclass(frozen=True)
class DltCurve:
    rates: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    n_max: int
    approx: str

    def rows(self):
        for r, v in zip(self.rates, self.values):
            yield {"approx": self.approx, "R": float(r), "S_R": float(v), "n_max": self.n_max}

    def to_csv(self, path):
        write_rows(path, ["approx", "R", "S_R", "n_max"], self.rows())


def write_rows(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def dlt_curve(spec: CfSpec, rates, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE) -> DltCurve:
    rates = _rates(rates)
    if rates.size == 0:
        raise ValueError("rate grid is empty")
    if np.any(np.diff(rates) <= 0):
        raise ValueError("rate grid must be strictly increasing")
    values = np.maximum(dlt(spec, rates, n_max, q), 0.0)
    return DltCurve(rates=rates, values=values, n_max=n_max, approx=spec.kind.value)


@dataclass(frozen=True)
class RateDecision:
    r_star: float
    s_at_r_star: float
    approx: str
    search_resolution: float
    capped: bool = False
    unimodal: bool = True


def golden_section_max(f, lo, hi, tol):
    """Vectorised golden-section maximisation of f over brackets [lo, hi].

    ``f`` maps an array of abscissae (one per bracket) to values.  Returns the
    best abscissa visited and its value.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while np.max(b - a) > tol:
        left = fc >= fd
        # keep [a, d] where the left probe wins, else [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - GOLDEN * (b - a)
        new_d = a + GOLDEN * (b - a)
        probe = np.where(left, new_c, new_d)
        fp = f(probe)
        c, d, fc, fd = (
            np.where(left, new_c, d),
            np.where(left, c, new_d),
            np.where(left, fp, fd),
            np.where(left, fc, fp),
        )
    best_left = fc >= fd
    return np.where(best_left, c, d), np.where(best_left, fc, fd)


def count_peaks(values, tol):
    """Number of separated local maxima of a sampled curve."""
    v = np.asarray(values, dtype=float)
    peaks = []
    for i in range(1, v.size):
        left_ok = v[i] > v[i - 1] + tol
        right_ok = i == v.size - 1 or v[i] >= v[i + 1]
        if left_ok and right_ok:
            peaks.append(i)
    separated = 0
    for j, p in enumerate(peaks):
        if j == 0:
            separated = 1
            continue
        valley = v[peaks[j - 1]:p + 1].min()
        if min(v[peaks[j - 1]], v[p]) - valley > tol:
            separated += 1
    return separated


def _select(grid, values, objective, search: SearchConfig, approx):
    best = int(np.argmax(values))
    unimodal = count_peaks(values, search.unimodal_tol) <= 1
    if not unimodal:
        warnings.warn("DLT curve has several local maxima; using the global grid maximum",
                      RateSearchWarning, stacklevel=3)
    if best == grid.size - 1:
        warnings.warn(f"optimal rate hit the search cap {grid[-1]:g} bit/s/Hz",
                      RateSearchWarning, stacklevel=3)
        return RateDecision(float(grid[-1]), float(values[-1]), approx, search.tol,
                            capped=True, unimodal=unimodal)
    lo = grid[max(best - 1, 0)]
    hi = grid[best + 1]
    r, s = golden_section_max(lambda x: objective(np.atleast_1d(x)), [lo], [hi], search.tol)
    r, s = float(r[0]), float(s[0])
    if s < values[best]:
        r, s = float(grid[best]), float(values[best])
    return RateDecision(r, s, approx, search.tol, capped=False, unimodal=unimodal)


def optimize_rate(spec: CfSpec, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE,
                  search: SearchConfig = DEFAULT_SEARCH) -> RateDecision:
    """Throughput-maximising source rate: grid search, then golden section."""
    grid = search.grid
    values = dlt(spec, grid, n_max, q)
    return _select(grid, values, lambda r: dlt(spec, r, n_max, q), search, spec.kind.value)


class DltTable:
    """Tabulated DLT for one CF order, used where thousands of decisions are needed.

    ``F_n(y)`` is inverted once on a log grid and interpolated (PCHIP in
    ``log y``).  The optimal rate is tabulated against ``log beta`` with
    ``beta = s / scale``, so a decision reduces to two interpolations.
    """

    def __init__(self, order, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE,
                 search: SearchConfig = DEFAULT_SEARCH, y_range=(1e-3, 1e6), y_per_decade=80,
                 beta_range=(1e-8, 1e6), beta_per_decade=100):
        self.order = int(order)
        self.n_max = int(n_max)
        self.search = search
        lo, hi = np.log10(y_range)
        self.log_y = np.linspace(lo, hi, int(round((hi - lo) * y_per_decade)) + 1)
        F = normalized_cdf_family(self.order, 10.0 ** self.log_y, self.n_max, q)
        F = np.clip(F, 0.0, 1.0)
        F = np.maximum.accumulate(F, axis=1)
        self._interp = PchipInterpolator(self.log_y, F, axis=1, extrapolate=False)
        self._F_hi = F[:, -1]
        self._y_hi = 10.0 ** hi
        self._y_lo = 10.0 ** lo

        blo, bhi = np.log10(beta_range)
        self.log_beta = np.linspace(blo, bhi, int(round((bhi - blo) * beta_per_decade)) + 1)
        self.r_star_grid = self._optimise(10.0 ** self.log_beta)

    def cdf(self, y):
        """Interpolated F_n(y), shape (n_max, *y.shape)."""
        y = np.asarray(y, dtype=float)
        flat = y.ravel()
        out = np.zeros((self.n_max, flat.size))
        mid = (flat >= self._y_lo) & (flat <= self._y_hi)
        if np.any(mid):
            out[:, mid] = self._interp(np.log10(flat[mid]))
        high = flat > self._y_hi
        if np.any(high):
            # regularly varying tail of index `order`
            tail = (1.0 - self._F_hi)[:, None] * (self._y_hi / flat[high])[None, :] ** self.order
            out[:, high] = 1.0 - tail
        return np.clip(out, 0.0, 1.0).reshape((self.n_max,) + y.shape)

    def dlt(self, R, beta):
        """S(R) for broadcastable arrays of rates and beta = s/scale."""
        R, beta = np.broadcast_arrays(np.asarray(R, dtype=float), np.asarray(beta, dtype=float))
        y = np.expm1(R * math.log(2.0)) / beta
        F = self.cdf(np.where(R > 0, y, 1.0))
        P = np.concatenate([np.ones((1,) + R.shape), F], axis=0)
        i = np.arange(1, self.n_max + 1).reshape((-1,) + (1,) * R.ndim)
        S = np.sum(R[None] / i * (P[:-1] - P[1:]), axis=0)
        return np.where(R > 0, S, 0.0)

    def _optimise(self, beta):
        grid = self.search.grid
        S = self.dlt(grid[None, :], beta[:, None])
        best = np.argmax(S, axis=1)
        capped = best == grid.size - 1
        lo = grid[np.maximum(best - 1, 0)]
        hi = grid[np.minimum(best + 1, grid.size - 1)]
        r, _ = golden_section_max(lambda x: self.dlt(x, beta), lo, hi, 1e-7)
        return np.where(capped, grid[-1], r)

    def r_star(self, beta):
        lb = np.log10(np.asarray(beta, dtype=float))
        r = np.interp(lb, self.log_beta, self.r_star_grid)
        below = lb < self.log_beta[0]
        # for tiny beta the optimal SINR threshold is fixed, so R* ~ beta
        r = np.where(below, self.r_star_grid[0] * 10.0 ** (lb - self.log_beta[0]), r)
        return np.minimum(r, self.search.r_max)

    def decide(self, beta):
        """(source rate, expected throughput) for each beta."""
        r = self.r_star(beta)
        return r, self.dlt(r, beta)


@functools.lru_cache(maxsize=16)
def dlt_table(order, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE,
              search: SearchConfig = DEFAULT_SEARCH) -> DltTable:
    return DltTable(order, n_max, q, search)


__all__ = [
    "Approx",
    "DltCurve",
    "DltTable",
    "RateDecision",
    "RateSearchWarning",
    "SearchConfig",
    "count_peaks",
    "dlt",
    "dlt_curve",
    "dlt_table",
    "golden_section_max",
    "optimize_rate",
    "outage_probability",
]
