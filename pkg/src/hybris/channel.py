"""Stochastic channel realizations for the ES / EHS / RIS / BS / user geometry.

Every link is a power-law path loss times a fading term: Rayleigh for the
obstructed user->BS links and Rician (ULA steering vector as the LoS part)
for user->RIS, RIS->BS and ES->EHS.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RICIAN_LOS_ONLY = 1e9  # K at or above this is treated as the pure-LoS limit


@dataclass(frozen=True)
class Geometry:
    """Node positions in meters.

    Array axes are unit vectors along which the RIS / EHS elements are laid
    out; both default to +y.
    """

    bs_pos: np.ndarray
    ris_pos: np.ndarray
    ehs_pos: np.ndarray
    es_pos: np.ndarray
    user_pos: np.ndarray
    n_elements: int
    ehs_elements: int
    ris_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    ehs_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        for name in ("bs_pos", "ris_pos", "ehs_pos", "es_pos", "ris_axis", "ehs_axis"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
            object.__setattr__(self, name, v)
        users = np.atleast_2d(np.asarray(self.user_pos, dtype=float))
        if users.ndim != 2 or users.shape[1] != 3 or users.shape[0] < 1:
            raise ValueError("user_pos must be a (J, 3) array with J >= 1")
        object.__setattr__(self, "user_pos", users)
        if self.n_elements < 1 or self.ehs_elements < 1:
            raise ValueError("n_elements and ehs_elements must be >= 1")
        pairs = [(self.ris_pos, self.bs_pos), (self.ehs_pos, self.es_pos)]
        pairs += [(u, self.bs_pos) for u in users] + [(u, self.ris_pos) for u in users]
        for p, q in pairs:
            if np.linalg.norm(p - q) <= 0.0:
                raise ValueError("all link distances must be positive")

    @property
    def n_users(self) -> int:
        return self.user_pos.shape[0]


def users_on_circle(n_users: int, radius: float = 0.5, center=(0.0, 0.0, 0.0),
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Place users on a circle in the z=0 plane.

    Equal angular spacing starting at angle 0, or i.i.d. uniform angles when
    ``rng`` is given.
    """
    if rng is None:
        ang = 2.0 * np.pi * np.arange(n_users) / n_users
    else:
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n_users)
    c = np.asarray(center, dtype=float)
    return np.column_stack([c[0] + radius * np.cos(ang), c[1] + radius * np.sin(ang),
                            np.full(n_users, c[2])])


@dataclass(frozen=True)
class LinkParams:
    ref_loss_db: float
    exponent: float
    rician_k: float = 2.0
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.rician_k < 0:
            raise ValueError("rician_k must be >= 0")
        if self.spacing_ratio <= 0:
            raise ValueError("spacing_ratio must be positive")


@dataclass(frozen=True)
class LinkSet:
    """Per-link parameters (user->BS, user->RIS, RIS->BS, ES->EHS)."""

    ub: LinkParams = LinkParams(-30.0, 3.2, 0.0)
    ur: LinkParams = LinkParams(-20.0, 2.2)
    rb: LinkParams = LinkParams(-20.0, 2.2)
    es: LinkParams = LinkParams(-20.0, 2.2)


@dataclass(frozen=True)
class ChannelSet:
    h_ub: np.ndarray  # (J,)
    h_ur: np.ndarray  # (J, N)
    h_rb: np.ndarray  # (N,)
    h_es: np.ndarray  # (M,)

    @property
    def n_users(self) -> int:
        return self.h_ub.shape[0]

    @property
    def n_elements(self) -> int:
        return self.h_rb.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("h_ub", "h_ur", "h_rb", "h_es"))

    __hash__ = None


def path_loss(ref_loss_db: float, distance, exponent: float):
    """Linear power gain ``10**(ref_loss_db/10) * distance**-exponent``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 10.0 ** (ref_loss_db / 10.0) * d ** (-exponent)
    return float(out) if out.ndim == 0 else out


def steering_vector(count: int, spacing_ratio: float, angle_param: float) -> np.ndarray:
    """ULA response; element k is ``exp(-j 2 pi spacing_ratio k angle_param)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    k = np.arange(count)
    return np.exp(-2j * np.pi * spacing_ratio * k * angle_param)


def angle_param_from_geometry(array_pos, array_axis, endpoint_pos) -> float:
    """Cosine of the angle between the array axis and the direction to ``endpoint_pos``."""
    axis = np.asarray(array_axis, dtype=float)
    na = np.linalg.norm(axis)
    if na == 0.0:
        raise ValueError("array axis has zero length")
    d = np.asarray(endpoint_pos, dtype=float) - np.asarray(array_pos, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0.0:
        raise ValueError("endpoint coincides with the array position")
    return float(np.clip(axis @ d / (na * nd), -1.0, 1.0))


def _cn(rng: np.random.Generator, size) -> np.ndarray:
    # unit-variance circularly-symmetric complex Gaussian
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * np.sqrt(0.5)


def sample_rayleigh(gain: float, rng: np.random.Generator, size=None):
    if gain < 0:
        raise ValueError("gain must be >= 0")
    return np.sqrt(gain) * _cn(rng, size)


def sample_rician(gain: float, rician_k: float, los_vec, rng: np.random.Generator) -> np.ndarray:
    """Rician vector with LoS part ``los_vec`` and i.i.d. CN(0,1) scatter.

    ``rician_k >= RICIAN_LOS_ONLY`` returns the scaled LoS vector without
    consuming random numbers.
    """
    if rician_k < 0:
        raise ValueError("rician_k must be >= 0")
    los = np.asarray(los_vec, dtype=complex)
    if rician_k >= RICIAN_LOS_ONLY:
        return np.sqrt(gain) * los
    w_los = np.sqrt(rician_k / (rician_k + 1.0))
    w_nlos = np.sqrt(1.0 / (rician_k + 1.0))
    return np.sqrt(gain) * (w_los * los + w_nlos * _cn(rng, los.shape))


class ChannelModel:
    """Geometry-dependent means of every link, precomputed once.

    ``sample`` then only draws the fading terms, which keeps per-step cost low
    inside training loops.
    """

    def __init__(self, geometry: Geometry, links: LinkSet = LinkSet()):
        self.geometry = geometry
        self.links = links
        g = geometry
        self.gain_ub = np.array([path_loss(links.ub.ref_loss_db, np.linalg.norm(u - g.bs_pos),
                                           links.ub.exponent) for u in g.user_pos])
        self.gain_ur = np.array([path_loss(links.ur.ref_loss_db, np.linalg.norm(u - g.ris_pos),
                                           links.ur.exponent) for u in g.user_pos])
        self.gain_rb = path_loss(links.rb.ref_loss_db, np.linalg.norm(g.ris_pos - g.bs_pos),
                                 links.rb.exponent)
        self.gain_es = path_loss(links.es.ref_loss_db, np.linalg.norm(g.ehs_pos - g.es_pos),
                                 links.es.exponent)
        self.los_ur = np.stack([
            steering_vector(g.n_elements, links.ur.spacing_ratio,
                            angle_param_from_geometry(g.ris_pos, g.ris_axis, u))
            for u in g.user_pos])
        self.los_rb = steering_vector(g.n_elements, links.rb.spacing_ratio,
                                      angle_param_from_geometry(g.ris_pos, g.ris_axis, g.bs_pos))
        self.los_es = steering_vector(g.ehs_elements, links.es.spacing_ratio,
                                      angle_param_from_geometry(g.ehs_pos, g.ehs_axis, g.es_pos))

    def sample(self, rng: np.random.Generator) -> ChannelSet:
        L = self.links
        h_ub = np.sqrt(self.gain_ub) * _cn(rng, self.gain_ub.shape)
        h_ur = np.stack([sample_rician(gj, L.ur.rician_k, los, rng)
                         for gj, los in zip(self.gain_ur, self.los_ur)])
        h_rb = sample_rician(self.gain_rb, L.rb.rician_k, self.los_rb, rng)
        h_es = sample_rician(self.gain_es, L.es.rician_k, self.los_es, rng)
        return ChannelSet(h_ub=h_ub, h_ur=h_ur, h_rb=h_rb, h_es=h_es)


def sample_channel_set(geometry: Geometry, links: LinkSet, rng: np.random.Generator) -> ChannelSet:
    return ChannelModel(geometry, links).sample(rng)
