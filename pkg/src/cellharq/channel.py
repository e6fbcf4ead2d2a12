"""Fading under random beamforming and per-attempt SINR realisation.

With a unit-norm random beam, the inner product with an i.i.d. CN(0,1)
channel vector is again CN(0,1).  The simulator therefore draws the effective
scalar coefficients directly; :func:`rbf_effective_coefficient` keeps the
M-antenna construction around for checking that reduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import UserGeometry


def draw_effective_coefficient(rng, size=None):
    """CN(0, 1) sample(s): independent N(0, 1/2) real and imaginary parts."""
    shape = (2,) if size is None else (2,) + tuple(np.atleast_1d(size))
    z = rng.standard_normal(shape)
    w = (z[0] + 1j * z[1]) * np.sqrt(0.5)
    return complex(w) if size is None else w


def draw_power_gain(rng, size=None):
    """|w|^2 for w ~ CN(0, 1), i.e. Exp(1) samples."""
    return rng.standard_exponential(size)


@dataclass(frozen=True)
class RbfVector:
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=float)
        if np.any(a < 0) or np.any(a > 1) or not np.isclose(a.sum(), 1.0):
            raise ValueError("RBF amplitudes must lie in [0, 1] and sum to 1")

    @property
    def vector(self):
        return np.sqrt(self.amplitudes) * np.exp(1j * self.phases)


def draw_rbf_vector(M, rng, amplitudes=None):
    a = np.full(M, 1.0 / M) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    return RbfVector(a, rng.uniform(-np.pi, np.pi, size=M))


def rbf_effective_coefficient(M, rng, amplitudes=None):
    """Effective coefficient g^T v for an explicit M-antenna channel and beam."""
    g = draw_effective_coefficient(rng, M)
    return complex(np.dot(g, draw_rbf_vector(M, rng, amplitudes).vector))


@dataclass(frozen=True)
class FadingDraw:
    """Coefficients for one HARQ process.

    ``w0`` is the desired coefficient (fixed over the process); ``w_ici[k, i]``
    is the coefficient from interfering cell k at attempt i.
    """

    w0: complex
    w_ici: np.ndarray = field(repr=False)

    @property
    def n_attempts(self) -> int:
        return self.w_ici.shape[1]

    def ici_gains(self, attempt):
        """|w^(k)(t_i)|^2 for all k at the 1-based ``attempt``."""
        return np.abs(self.w_ici[:, attempt - 1]) ** 2


def draw_harq_fading(K, n_attempts, rng) -> FadingDraw:
    if n_attempts < 1:
        raise ValueError("need at least one attempt")
    w0 = draw_effective_coefficient(rng)
    w_ici = draw_effective_coefficient(rng, (K, n_attempts))
    w_ici.setflags(write=False)
    return FadingDraw(w0=w0, w_ici=w_ici)


@dataclass(frozen=True)
class SinrModel:
    """gamma = s / (sum_k L_k |w_k|^2 + 1/rho)."""

    s: float
    pathloss_ici: np.ndarray
    rho: float

    def __post_init__(self):
        L = np.asarray(self.pathloss_ici, dtype=float)
        if self.s <= 0 or self.rho <= 0 or L.size == 0 or np.any(L <= 0):
            raise ValueError("SinrModel needs s > 0, rho > 0 and positive path losses")
        L = L.copy()
        L.setflags(write=False)
        object.__setattr__(self, "pathloss_ici", L)

    @property
    def K(self) -> int:
        return self.pathloss_ici.size

    @property
    def noise(self) -> float:
        return 1.0 / self.rho

    @property
    def mean_interference(self) -> float:
        return float(self.pathloss_ici.sum())

    @property
    def mean_pathloss(self) -> float:
        return float(self.pathloss_ici.mean())

    @classmethod
    def for_user(cls, user: UserGeometry, w0_gain, rho):
        return cls(s=user.desired_pathloss * float(w0_gain), pathloss_ici=user.interference_pathloss,
                   rho=rho)

    def sinr(self, ici_gains):
        """SINR for interference power gains |w_k|^2 (last axis = cells)."""
        # elementwise product and last-axis sum, so batched callers round identically
        x = (np.asarray(ici_gains, dtype=float) * self.pathloss_ici).sum(axis=-1)
        return self.s / (x + self.noise)

    def scaled(self, c):
        """Same SINR law with all powers multiplied by ``c``."""
        return SinrModel(self.s * c, self.pathloss_ici * c, self.rho / c)


def instantaneous_sinr(model: SinrModel, draw: FadingDraw, attempt):
    """SINR at the 1-based ``attempt`` of a process."""
    if not 1 <= attempt <= draw.n_attempts:
        raise IndexError(f"attempt {attempt} outside 1..{draw.n_attempts}")
    return float(model.sinr(draw.ici_gains(attempt)))


def effective_sinr(model: SinrModel, draw: FadingDraw, n):
    """Chase-combined SINR after n attempts: the plain sum of per-attempt SINRs."""
    return sum(instantaneous_sinr(model, draw, i) for i in range(1, n + 1))


STREAM_PURPOSES = ("angles", "w0", "current", "stale", "attempts")


@dataclass(frozen=True)
class DecisionDraws:
    """Fading for a block of scheduling decisions in one cell.

    For decision j: ``w0[j, u]`` is user u's desired power gain for a process
    started then, ``current[j, u]`` and ``stale[j, u]`` are the interference
    gains user u sees in the decision slot and ``delta`` slots earlier, and
    ``attempts[j, i]`` are the gains during attempt i+1 of the process that is
    actually run.  Arrays not needed by a policy are None.
    """

    w0: np.ndarray
    current: np.ndarray | None
    stale: np.ndarray | None
    attempts: np.ndarray


class TrialStreams:
    """One independent generator per purpose, derived from (seed, trial).

    Keeping purposes on separate streams means every policy consumes the
    same numbers for the same decision index (common random numbers), and
    drawing a block of B decisions equals drawing them one at a time.
    """

    def __init__(self, seed, trial=0):
        root = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))
        self.rng = {p: np.random.default_rng(c)
                    for p, c in zip(STREAM_PURPOSES, root.spawn(len(STREAM_PURPOSES)))}

    def angles(self, n_users):
        return self.rng["angles"].uniform(-np.pi, np.pi, n_users)

    def block(self, n_decisions, n_users, K, n_max, current=False, stale=False):
        B = int(n_decisions)
        return DecisionDraws(
            w0=draw_power_gain(self.rng["w0"], (B, n_users)),
            current=draw_power_gain(self.rng["current"], (B, n_users, K)) if current else None,
            stale=draw_power_gain(self.rng["stale"], (B, n_users, K)) if stale else None,
            attempts=draw_power_gain(self.rng["attempts"], (B, n_max, K)),
        )
