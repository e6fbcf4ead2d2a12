"""Cell layout, user placement and distance-based path loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# one-tier hexagonal neighbourhood used throughout the experiments
DEFAULT_BS_ANGLES = tuple(np.pi * a / 6.0 for a in (5, 3, 1, -1, -3, -5))


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if w.ndim == 0 else w


def distance_to_bs(r, theta, D, psi):
    """Distance from a user at polar (r, theta) to a BS at polar (D, psi)."""
    r = np.asarray(r, dtype=float)
    D = np.asarray(D, dtype=float)
    d2 = r * r + D * D - 2.0 * r * D * np.cos(np.asarray(theta) - np.asarray(psi))
    # rounding can push collinear cases a hair below zero
    d = np.sqrt(np.maximum(d2, 0.0))
    return float(d) if d.ndim == 0 else d


def pathloss(d, pl0_db, d0, alpha):
    """Linear power gain 10^(-PL0/10) (d0/d)^alpha."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss is undefined for non-positive distance")
    g = 10.0 ** (-pl0_db / 10.0) * (d0 / d) ** alpha
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class CellTopology:
    """Home BS at the origin plus K interfering BSs at polar (D, psi).

    ``bs_distance`` and ``bs_angle`` have K+1 entries; index 0 is the home BS
    (distance 0).
    """

    bs_distance: tuple
    bs_angle: tuple
    pl0_db: float = 37.0
    d0: float = 1000.0
    alpha: float = 3.0
    min_distance: float = 1.0

    def __post_init__(self):
        dist = tuple(float(x) for x in self.bs_distance)
        ang = tuple(float(wrap_angle(x)) for x in self.bs_angle)
        if len(dist) != len(ang):
            raise ValueError("bs_distance and bs_angle must have equal length")
        if len(dist) < 2:
            raise ValueError("topology needs at least one interfering BS")
        if dist[0] != 0.0:
            raise ValueError("bs_distance[0] must be 0 (home BS at the origin)")
        if any(x <= 0 for x in dist[1:]):
            raise ValueError("interfering BS distances must be positive")
        if self.alpha <= 0 or self.d0 <= 0 or self.min_distance <= 0:
            raise ValueError("alpha, d0 and min_distance must be positive")
        object.__setattr__(self, "bs_distance", dist)
        object.__setattr__(self, "bs_angle", ang)

    @property
    def K(self) -> int:
        return len(self.bs_distance) - 1

    @classmethod
    def hexagonal(cls, isd=1000.0, pl0_db=37.0, d0=1000.0, alpha=3.0, min_distance=1.0):
        """Home cell surrounded by six BSs at distance ``isd``."""
        return cls(
            bs_distance=(0.0,) + (isd,) * 6,
            bs_angle=(0.0,) + DEFAULT_BS_ANGLES,
            pl0_db=pl0_db,
            d0=d0,
            alpha=alpha,
            min_distance=min_distance,
        )

    def with_alpha(self, alpha):
        return CellTopology(self.bs_distance, self.bs_angle, self.pl0_db, self.d0, alpha,
                            self.min_distance)


@dataclass(frozen=True)
class UserGeometry:
    r: float
    theta: float
    dist: np.ndarray = field(repr=False)
    pathloss: np.ndarray = field(repr=False)

    @property
    def desired_pathloss(self) -> float:
        return float(self.pathloss[0])

    @property
    def interference_pathloss(self) -> np.ndarray:
        return self.pathloss[1:]


def build_user(topology: CellTopology, r, theta) -> UserGeometry:
    if r < 0:
        raise ValueError("user radius must be non-negative")
    theta = wrap_angle(theta)
    dist = distance_to_bs(r, theta, np.array(topology.bs_distance), np.array(topology.bs_angle))
    dist = np.atleast_1d(dist)
    # clamp keeps the home-BS path loss finite for users placed at the origin
    clamped = np.maximum(dist, topology.min_distance)
    pl = pathloss(clamped, topology.pl0_db, topology.d0, topology.alpha)
    dist.setflags(write=False)
    pl.setflags(write=False)
    return UserGeometry(r=float(r), theta=theta, dist=dist, pathloss=pl)


def place_users(topology: CellTopology, radii, thetas):
    """Path-loss matrix of shape (n_users, K+1) for users at (radii, thetas)."""
    radii = np.asarray(radii, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    D = np.asarray(topology.bs_distance)
    psi = np.asarray(topology.bs_angle)
    d = distance_to_bs(radii[:, None], thetas[:, None], D[None, :], psi[None, :])
    d = np.maximum(d, topology.min_distance)
    return pathloss(d, topology.pl0_db, topology.d0, topology.alpha)
