"""Mode assignment + channel realization -> effective gains and energy terms.

All functions accept a batch of mode assignments as ``(..., N)`` arrays so the
exhaustive search can assemble thousands of inner problems in one shot; the
single-assignment entry points are thin wrappers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .inner.problem import InnerProblem


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the frame, all SI (W, s, J)."""

    sigma_b2: float = 1e-11  # -80 dBm
    sigma_f2: float = 1e-10  # -70 dBm
    p_circuit: float = 1e-4  # P_C, -10 dBm
    p_amp_dc: float = 10 ** (-0.5) * 1e-3  # P_DC, -5 dBm
    p_rfdc: float = 2.1e-6  # P_b, per EHS element
    xi: float = 1.1
    eta_eh: float = 0.8
    p_s: float = 10 ** 0.8  # 38 dBm
    frame: float = 1.0
    q_min: float = 5.0
    p_max: float = 0.1
    rho_max: float = 100.0


@dataclass(frozen=True)
class ModeAssignment:
    beta: np.ndarray
    alpha: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.int8)
        alpha = np.asarray(self.alpha, dtype=np.int8)
        rho = np.asarray(self.rho, dtype=float)
        if not (beta.shape == alpha.shape == rho.shape) or beta.ndim != 1:
            raise ValueError("beta, alpha, rho must be 1-D arrays of equal length")
        if np.any((beta != 0) & (beta != 1)) or np.any((alpha != 0) & (alpha != 1)):
            raise ValueError("beta and alpha must be binary")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def idle(cls, n: int) -> "ModeAssignment":
        return cls(np.zeros(n), np.zeros(n), np.ones(n))

    @classmethod
    def passive(cls, n: int) -> "ModeAssignment":
        return cls(np.ones(n), np.zeros(n), np.ones(n))

    @classmethod
    def active(cls, n: int, rho: float) -> "ModeAssignment":
        return cls(np.ones(n), np.ones(n), np.full(n, float(rho)))

    @property
    def active_mask(self) -> np.ndarray:
        return (self.alpha * self.beta).astype(bool)

    def validate(self, rho_max: float) -> None:
        r = self.rho[self.active_mask]
        if np.any(r < 1.0) or np.any(r > rho_max):
            raise ValueError(f"active amplification factors must lie in [1, {rho_max}]")

    def counts(self) -> tuple[int, int, int]:
        """(active, passive, idle) element counts."""
        act = int(np.sum(self.active_mask))
        on = int(np.sum(self.beta))
        return act, on - act, len(self.beta) - on


@dataclass(frozen=True)
class EffectiveLinks:
    g1: np.ndarray
    g2: np.ndarray
    nu: np.ndarray
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class EnergyCoefficients:
    amp_weight: np.ndarray
    static_power: float
    fixed_energy: float
    budget: float


def optimal_phase(h_ub, h_rb_n, h_ur_jn):
    """Co-phasing shift in [0, 2 pi): arg(h_ub) - arg(conj(h_rb_n)) - arg(h_ur_jn).

    Broadcasts; ``np.angle(0) == 0`` so zero channels are harmless.
    """
    th = np.angle(h_ub) - np.angle(np.conj(h_rb_n)) - np.angle(h_ur_jn)
    return np.mod(th, 2.0 * np.pi)


def optimal_phases(channels: ChannelSet) -> np.ndarray:
    """(J, N) matrix of per-user optimal shifts."""
    return optimal_phase(channels.h_ub[:, None], channels.h_rb[None, :], channels.h_ur)


def reflection_amplitudes(beta, alpha, rho) -> np.ndarray:
    """beta * rho**alpha, with rho ignored (unit magnitude) wherever alpha*beta == 0."""
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    rho = np.asarray(rho, dtype=float)
    return beta * np.where(alpha * beta > 0, rho, 1.0)


def _active_rho2(beta, alpha, rho) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    rho = np.asarray(rho, dtype=float)
    ab = alpha * beta
    return ab * np.where(ab > 0, rho, 0.0) ** 2


def combined_gain(channels: ChannelSet, modes: ModeAssignment, phases: np.ndarray) -> np.ndarray:
    """|h_ub_j + (h_rb)^H gamma_j h_ur_j|^2 evaluated as a complex sum, per user."""
    amp = reflection_amplitudes(modes.beta, modes.alpha, modes.rho)
    refl = np.sum(np.conj(channels.h_rb)[None, :] * amp[None, :] * np.exp(1j * phases)
                  * channels.h_ur, axis=1)
    return np.abs(channels.h_ub + refl) ** 2


def effective_links_batch(channels: ChannelSet, beta, alpha, rho,
                          sigma_b2: float, sigma_f2: float):
    """Returns (g1, g2, nu, a, b); mode arrays are (..., N), outputs (..., J)."""
    beta = np.asarray(beta, dtype=float)
    N = channels.n_elements
    if beta.shape[-1] != N:
        raise ValueError(f"mode arrays have {beta.shape[-1]} elements, channels have {N}")
    amp = reflection_amplitudes(beta, alpha, rho)
    cascade = np.abs(channels.h_rb)[None, :] * np.abs(channels.h_ur)  # (J, N)
    mag = np.abs(channels.h_ub) + amp @ cascade.T
    g1 = np.broadcast_to(np.abs(channels.h_ub) ** 2, mag.shape)
    g2 = mag ** 2
    nu1 = sigma_f2 * (_active_rho2(beta, alpha, rho) @ (np.abs(channels.h_rb) ** 2))
    nu = np.broadcast_to(np.asarray(nu1)[..., None], mag.shape)
    return g1, g2, nu, g1 / sigma_b2, g2 / (sigma_b2 + nu)


def effective_links(channels: ChannelSet, modes: ModeAssignment,
                    sigma_b2: float, sigma_f2: float) -> EffectiveLinks:
    g1, g2, nu, a, b = effective_links_batch(channels, modes.beta, modes.alpha, modes.rho,
                                             sigma_b2, sigma_f2)
    return EffectiveLinks(np.array(g1), g2, np.array(nu), a, b)


def harvest_budget(channels: ChannelSet, params: SystemParams) -> float:
    return params.eta_eh * params.p_s * float(np.sum(np.abs(channels.h_es) ** 2)) * params.frame


def energy_coefficients_batch(channels: ChannelSet, beta, alpha, rho, params: SystemParams):
    """Returns (amp_weight (..., J), static_power (...), fixed_energy, budget)."""
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    r2 = _active_rho2(beta, alpha, rho)
    amp_weight = params.xi * (r2 @ (np.abs(channels.h_ur) ** 2).T)
    static = (params.p_circuit * beta.sum(axis=-1)
              + params.p_amp_dc * (alpha * beta).sum(axis=-1)
              + params.xi * params.sigma_f2 * r2.sum(axis=-1))
    fixed = channels.h_es.shape[0] * params.p_rfdc * params.frame
    return amp_weight, static, fixed, harvest_budget(channels, params)


def energy_coefficients(channels: ChannelSet, modes: ModeAssignment,
                        params: SystemParams) -> EnergyCoefficients:
    w, s, f, b = energy_coefficients_batch(channels, modes.beta, modes.alpha, modes.rho, params)
    return EnergyCoefficients(amp_weight=w, static_power=float(s), fixed_energy=f, budget=b)


def assemble_inner_problem(channels: ChannelSet, modes: ModeAssignment,
                           params: SystemParams) -> InnerProblem:
    if modes.beta.shape[0] != channels.n_elements:
        raise ValueError("mode assignment and channel set disagree on N")
    links = effective_links(channels, modes, params.sigma_b2, params.sigma_f2)
    en = energy_coefficients(channels, modes, params)
    return InnerProblem(T=params.frame, q_min=params.q_min, p_max=params.p_max,
                        a=links.a, b=links.b, amp_weight=en.amp_weight,
                        static_power=en.static_power, fixed_energy=en.fixed_energy,
                        budget=en.budget)


def assemble_batch(channels: ChannelSet, beta, alpha, rho, params: SystemParams) -> list[InnerProblem]:
    """One InnerProblem per row of the (C, N) mode arrays."""
    _, _, _, a, b = effective_links_batch(channels, beta, alpha, rho,
                                          params.sigma_b2, params.sigma_f2)
    w, s, f, budget = energy_coefficients_batch(channels, beta, alpha, rho, params)
    return [InnerProblem(T=params.frame, q_min=params.q_min, p_max=params.p_max,
                         a=a[i], b=b[i], amp_weight=w[i], static_power=float(s[i]),
                         fixed_energy=f, budget=budget)
            for i in range(a.shape[0])]
