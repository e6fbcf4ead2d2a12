"""Characteristic functions of the per-attempt SINR and Gil-Pelaez inversion.

Both approximations give a per-attempt SINR ``s / (scale * G)`` with
``G ~ Gamma(order, 1)``, i.e. an inverse-gamma law.  Its characteristic
function depends on ``t`` only through ``u = s t / scale``::

    g(u) = 2 (z/2)^order / (order-1)! * K_order(z),   z = 2 sqrt(-j u)

(order 1 for the Gaussian approximation, order K for identical path loss).
The CDF of the n-fold sum at ``x`` is therefore a function of
``y = x * scale / s`` alone, and all inversion work is done in (u, y).

Inversion
---------
With ``h_n(u) = (g(u)^n - 1) / u`` the Gil-Pelaez integral splits into

    F_n(y) = 1/2 - (1/pi) [ Im int_0^T e^{-j u y} h_n(u) du  -  Si(T y) ]

where ``T`` is the truncation point.  ``h_n`` is bounded and smooth away
from ``u = 0``, so [t_min, T] is cut into panels on which ``h_n`` is replaced
by its Legendre interpolant at Gauss nodes, and each panel is integrated
against ``e^{-j u y}`` exactly through spherical Bessel moments::

    int_{-1}^{1} P_k(x) e^{-j w x} dx = 2 (-j)^k j_k(w)

Panels are refined until the trailing Legendre coefficients are small.  That
bound does not depend on ``y``, so one panel set serves every evaluation
point no matter how fast ``e^{-j u y}`` oscillates.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import sici

from .bessel import bessel_k


class Approx(str, enum.Enum):
    GA = "ga"
    IPLA = "ipla"


class QuadratureError(RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(f"{message} (achieved error estimate {estimate:.3g})")
        self.estimate = estimate


@dataclass(frozen=True)
class QuadratureConfig:
    """Inversion controls.

    ``t_min`` and ``t_max_cap`` bound the normalised frequency ``u``.  The upper
    limit is the first power of two where ``|g(u)|/u < tail_epsilon``, capped
    at ``t_max_cap``.
    """

    t_min: float = 1e-10
    t_max_cap: float = 1e6
    tail_epsilon: float = 1e-12
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_subdivisions: int = 4000
    nodes_per_panel: int = 16

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max_cap:
            raise ValueError("need 0 < t_min < t_max_cap")
        if min(self.tail_epsilon, self.abs_tol, self.rel_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1 or self.nodes_per_panel < 4:
            raise ValueError("max_subdivisions >= 1 and nodes_per_panel >= 4 required")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class CfSpec:
    """Parameters of the approximated n-attempt effective SINR law.

    ``scale`` is the interference-plus-noise variance for GA and the mean
    interfering path loss for IPLA.  ``K`` is only used by IPLA.
    """

    kind: Approx
    s: float
    scale: float
    K: int = 1
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", Approx(self.kind))
        if self.s <= 0 or self.scale <= 0:
            raise ValueError("s and scale must be positive")
        if self.K < 1 or self.n < 0:
            raise ValueError("K >= 1 and n >= 0 required")

    @property
    def order(self) -> int:
        return 1 if self.kind is Approx.GA else int(self.K)

    @property
    def beta(self) -> float:
        """s / scale: converts between SINR and the normalised variable y."""
        return self.s / self.scale

    def with_n(self, n):
        return replace(self, n=n)

    @classmethod
    def from_model(cls, model, kind, n=1):
        kind = Approx(kind)
        if kind is Approx.GA:
            return cls(kind, model.s, model.mean_interference + model.noise, model.K, n)
        # identical path loss drops the noise term (interference-limited regime)
        return cls(kind, model.s, model.mean_pathloss, model.K, n)


def normalized_cf(order, u):
    """Characteristic function of Inv-Gamma(order, 1) at real u > 0."""
    u = np.asarray(u, dtype=float)
    z = 2.0 * np.sqrt(-1j * u)
    half = 0.5 * z
    # exp(-z) folded in separately keeps large |z| well scaled
    kz = bessel_k(order, z.ravel(), scaled=True).reshape(z.shape)
    return 2.0 / math.factorial(order - 1) * half**order * kz * np.exp(-z)


def cf_single_attempt(spec: CfSpec, t):
    """CF of one approximated per-attempt SINR at t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    out = normalized_cf(spec.order, spec.beta * t)
    return complex(out) if out.ndim == 0 else out


def cf_effective(spec: CfSpec, t):
    """CF of the n-attempt combined SINR: the single-attempt CF to the n-th power."""
    if spec.n == 0:
        t = np.asarray(t, dtype=float)
        return 1.0 + 0j if t.ndim == 0 else np.ones(t.shape, dtype=complex)
    return cf_single_attempt(spec, t) ** spec.n


# --- inversion kernel -------------------------------------------------------

def _truncation_point(order, q: QuadratureConfig):
    u = 1.0
    while u < q.t_max_cap:
        if abs(normalized_cf(order, u)) / u < q.tail_epsilon:
            return u
        u *= 2.0
    return q.t_max_cap


@functools.lru_cache(maxsize=None)
def _legendre_tools(m):
    x, w = np.polynomial.legendre.leggauss(m)
    V = np.polynomial.legendre.legvander(x, m - 1)  # V[i, k] = P_k(x_i)
    # coefficients a_k = (2k+1)/2 sum_i w_i P_k(x_i) f(x_i)
    to_coef = (V * w[:, None]).T * ((2 * np.arange(m) + 1) / 2.0)[:, None]
    phase = (-1j) ** np.arange(m)
    return x, to_coef, phase


def spherical_jn_orders(m, w):
    """j_k(w) for k = 0..m-1 at once, shape w.shape + (m,), for w >= 0.

    Power series below 1, upward recurrence where it is stable (w >= m) and
    Miller's downward recurrence in between, normalised on whichever of j_0,
    j_1 is larger.  Absolute error is at the 1e-15 level.
    """
    w = np.asarray(w, dtype=float)
    flat = w.ravel()
    out = np.empty((flat.size, m))
    small = flat < 1.0
    big = flat >= m
    mid = ~(small | big)
    if small.any():
        ws = flat[small]
        h = -0.5 * ws * ws
        lead = np.ones_like(ws)
        cols = []
        for k in range(m):
            if k:
                lead = lead * (ws / (2 * k + 1))
            acc = 1.0
            for l in range(13, 0, -1):
                acc = 1.0 + acc * h / (l * (2 * k + 2 * l + 1))
            cols.append(lead * acc)
        out[small] = np.stack(cols, axis=-1)
    if big.any():
        wb = flat[big]
        inv = 1.0 / wb
        s, c = np.sin(wb), np.cos(wb)
        cols = [s * inv, (s * inv - c) * inv]
        for k in range(1, m - 1):
            cols.append((2 * k + 1) * inv * cols[k] - cols[k - 1])
        out[big] = np.stack(cols[:m], axis=-1)
    if mid.any():
        wm = flat[mid]
        inv = 1.0 / wm
        nxt = np.zeros_like(wm)
        cur = np.full_like(wm, 1e-30)
        cols = [None] * m
        for k in range(m + 40, 0, -1):
            nxt, cur = cur, (2 * k + 1) * inv * cur - nxt
            if k <= m:
                cols[k - 1] = cur
        s, c = np.sin(wm), np.cos(wm)
        j0 = s * inv
        j1 = (s * inv - c) * inv
        scale = np.where(np.abs(j0) >= np.abs(j1), j0 / cols[0], j1 / cols[1])
        out[mid] = np.stack(cols, axis=-1) * scale[:, None]
    return out.reshape(w.shape + (m,))


class _Kernel:
    """Panelisation plus Legendre coefficients for a family of integrands."""

    def __init__(self, order, n_max, form, q: QuadratureConfig):
        self.order = order
        self.n_max = n_max
        self.form = form
        self.q = q
        self.T = _truncation_point(order, q)
        self.m = q.nodes_per_panel
        self._build()

    def _integrands(self, u):
        g = normalized_cf(self.order, u)
        powers = [np.ones_like(g)]
        for _ in range(self.n_max):
            powers.append(powers[-1] * g)
        if self.form == "telescoping":
            rows = [(powers[n] - 1.0) / u for n in range(1, self.n_max + 1)]
        else:
            rows = [(powers[n] - powers[n - 1]) / u for n in range(1, self.n_max + 1)]
        return np.array(rows)

    def _coefficients(self, lo, hi):
        x, to_coef, _ = _legendre_tools(self.m)
        mid = 0.5 * (lo + hi)
        hw = 0.5 * (hi - lo)
        u = mid[:, None] + hw[:, None] * x[None, :]
        f = self._integrands(u)  # (n, panels, m)
        return np.einsum("km,npm->npk", to_coef, f)

    def _build(self):
        q = self.q
        edges = [q.t_min]
        while edges[-1] < 1.0:
            edges.append(min(edges[-1] * 4.0, 1.0))
        while edges[-1] < self.T:
            edges.append(min(edges[-1] * 2.0, self.T))
        lo = np.array(edges[:-1])
        hi = np.array(edges[1:])
        panel_tol = 0.02 * math.pi * q.abs_tol
        done_lo, done_hi, done_c, done_err = [], [], [], []
        total = lo.size
        while lo.size:
            coef = self._coefficients(lo, hi)
            tail = np.abs(coef[:, :, -1]) + np.abs(coef[:, :, -2])
            err = (hi - lo) * tail.max(axis=0)
            ok = err <= panel_tol
            done_lo.append(lo[ok])
            done_hi.append(hi[ok])
            done_c.append(coef[:, ok, :])
            done_err.append(err[ok])
            lo, hi = lo[~ok], hi[~ok]
            if lo.size:
                total += lo.size
                if total > q.max_subdivisions:
                    estimate = float(np.sum(err[~ok]) + sum(e.sum() for e in done_err)) / math.pi
                    raise QuadratureError(
                        f"panel refinement exceeded {q.max_subdivisions} subdivisions", estimate
                    )
                mid = 0.5 * (lo + hi)
                lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        lo = np.concatenate(done_lo)
        order = np.argsort(lo)
        self.lo = lo[order]
        self.hi = np.concatenate(done_hi)[order]
        self.coef = np.concatenate(done_c, axis=1)[:, order, :]
        self.error_estimate = float(np.concatenate(done_err).sum()) / math.pi
        self.mid = 0.5 * (self.lo + self.hi)
        self.hw = 0.5 * (self.hi - self.lo)

    @property
    def n_panels(self):
        return self.lo.size

    def integrate(self, y, chunk=64):
        """Im int e^{-j u y} f_n(u) du over [t_min, T] for every n; shape (n, len(y))."""
        _, _, phase = _legendre_tools(self.m)
        y = np.asarray(y, dtype=float)
        out = np.empty((self.n_max, y.size))
        for start in range(0, y.size, chunk):
            yc = y[start:start + chunk]
            w = yc[:, None] * self.hw[None, :]  # (Y, P)
            jk = spherical_jn_orders(self.m, w)  # (Y, P, m)
            mom = 2.0 * phase[None, None, :] * jk
            rot = self.hw[None, :] * np.exp(-1j * yc[:, None] * self.mid[None, :])
            vals = np.einsum("npk,ypk,yp->ny", self.coef, mom, rot)
            out[:, start:start + chunk] = vals.imag
        # [0, t_min]: the integrand behaves like c0 + c1 log u there, which a
        # single node at t_min / e integrates exactly
        a = self.q.t_min
        h0 = self._integrands(np.array([a / math.e]))[:, 0]
        out += a * (np.exp(-0.5j * a * y)[None, :] * h0[:, None]).imag
        return out


@functools.lru_cache(maxsize=64)
def _kernel(order, n_max, form, q):
    return _Kernel(order, n_max, form, q)


def _normalized_points(spec: CfSpec, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("CDF evaluation points must be positive")
    return x / spec.beta


def normalized_cdf_family(order, y, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE):
    """Unclamped F_n(y) for n = 1..n_max, shape (n_max, len(y))."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ker = _kernel(int(order), int(n_max), "telescoping", q)
    si = sici(ker.T * y)[0]
    return 0.5 - (ker.integrate(y) - si[None, :]) / math.pi


def normalized_cdf_steps(order, y, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE):
    """F_{n-1}(y) - F_n(y) for n = 1..n_max from the CF-difference integrands."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ker = _kernel(int(order), int(n_max), "difference", q)
    vals = ker.integrate(y)
    # the n = 1 integrand tends to -1/u; its tail beyond T is pi/2 - Si(T y)
    vals[0] += 0.5 * math.pi - sici(ker.T * y)[0]
    return vals / math.pi


def inversion_error_estimate(order, n_max, q: QuadratureConfig = DEFAULT_QUADRATURE):
    """y-uniform bound on the polynomial-approximation part of the CDF error."""
    return _kernel(int(order), int(n_max), "telescoping", q).error_estimate


def gil_pelaez_cdf(spec: CfSpec, x, q: QuadratureConfig = DEFAULT_QUADRATURE, clamp=True):
    """CDF of the n-attempt effective SINR at x > 0 by Gil-Pelaez inversion."""
    if spec.n < 1:
        raise ValueError("gil_pelaez_cdf needs n >= 1")
    y = _normalized_points(spec, x)
    F = normalized_cdf_family(spec.order, np.atleast_1d(y), spec.n, q)[spec.n - 1]
    if clamp:
        F = np.clip(F, 0.0, 1.0)
    return float(F[0]) if np.ndim(x) == 0 else F.reshape(np.shape(x))
