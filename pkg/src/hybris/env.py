"""Contextual-bandit environment around the inner solver.

Each step draws an independent channel realization; the agent picks per-element
modes, the inner program is solved for those modes and the reward is the
negative scaled min-max energy (or -kappa when the program is infeasible).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelModel, ChannelSet, Geometry, LinkSet, users_on_circle
from .inner import InnerProblem, InnerSolution, solve
from .sysmodel import ModeAssignment, SystemParams, assemble_batch, assemble_inner_problem

SCHEMES = ("hybrid", "active-passive", "active", "passive", "no-RIS")
N_BUCKETS = 10
HEAD_SIZES = (2, 2, N_BUCKETS)  # beta, alpha, rho bucket, per element
ORACLE_MAX_N = 6


@dataclass(frozen=True)
class EnvConfig:
    """Environment settings, all SI."""

    geometry: Geometry
    links: LinkSet = LinkSet()
    params: SystemParams = SystemParams()
    e_ref: float = 1e-3
    kappa: float = 10.0
    scheme: str = "hybrid"
    state_layout: str = "per_element"  # or "norms"
    no_ris_without_ehs: bool = False  # no-RIS also drops the EHS circuit cost
    shared_rho: bool = False  # one amplification bucket shared by all active elements

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.state_layout not in ("per_element", "norms"):
            raise ValueError(f"unknown state layout {self.state_layout!r}")
        if self.e_ref <= 0 or self.kappa <= 0:
            raise ValueError("e_ref and kappa must be positive")
        p = self.params
        powers = [p.sigma_b2, p.sigma_f2, p.p_circuit, p.p_amp_dc, p.p_rfdc, p.p_s, p.p_max]
        if min(powers) < 0:
            raise ValueError("all powers must be nonnegative")

    @property
    def n_elements(self) -> int:
        return self.geometry.n_elements

    @property
    def n_users(self) -> int:
        return self.geometry.n_users

    @property
    def state_dim(self) -> int:
        J, N = self.n_users, self.n_elements
        return J * N + N + J + 1 if self.state_layout == "per_element" else 2 * J + 2


def default_geometry(n_elements: int = 20, n_users: int = 2, ehs_elements: int = 20,
                     ris_x: float = 5.0) -> Geometry:
    """Users on a 0.5 m circle at the origin, BS at 20 m, RIS / EHS / ES around x = ris_x."""
    return Geometry(bs_pos=[20.0, 0.0, 0.0], ris_pos=[ris_x, 3.0, 0.0],
                    ehs_pos=[ris_x, 3.0, 5.0], es_pos=[ris_x, -2.0, 5.0],
                    user_pos=users_on_circle(n_users), n_elements=n_elements,
                    ehs_elements=ehs_elements)


# ---------------------------------------------------------------- state / action

def build_state(channels: ChannelSet, layout: str = "per_element") -> np.ndarray:
    """[|h_ur| row-major (J*N), |h_rb| (N), |h_ub| (J), ||h_es|| (1)]."""
    if layout == "norms":
        parts = [np.linalg.norm(channels.h_ur, axis=1), [np.linalg.norm(channels.h_rb)],
                 np.abs(channels.h_ub), [np.linalg.norm(channels.h_es)]]
    else:
        parts = [np.abs(channels.h_ur).ravel(), np.abs(channels.h_rb), np.abs(channels.h_ub),
                 [np.linalg.norm(channels.h_es)]]
    return np.concatenate(parts).astype(float)


def free_heads(scheme: str, n_elements: int) -> np.ndarray:
    """Boolean mask over the 3N heads [beta_n, alpha_n, rho_n]... that the policy controls."""
    per = {"hybrid": (True, True, True), "active-passive": (False, True, True),
           "active": (False, False, True), "passive": (False, False, False),
           "no-RIS": (False, False, False)}[scheme]
    return np.tile(per, n_elements)


def _policy_mask(scheme: str, n_elements: int, shared_rho: bool) -> np.ndarray:
    mask = free_heads(scheme, n_elements)
    if shared_rho and mask[2]:
        mask = mask.copy()
        mask[5::3] = False  # only element 0 keeps a rho head
    return mask


def policy_head_sizes(scheme: str, n_elements: int, shared_rho: bool = False) -> tuple[int, ...]:
    sizes = np.tile(HEAD_SIZES, n_elements)
    return tuple(int(s) for s in sizes[_policy_mask(scheme, n_elements, shared_rho)])


def expand_action(free_action: np.ndarray, scheme: str, n_elements: int,
                  shared_rho: bool = False) -> np.ndarray:
    """Scatter the policy's head indices into a full 3N action (forced heads = 0).

    With ``shared_rho`` the single rho head is copied to every element.
    """
    full = np.zeros(3 * n_elements, dtype=np.int64)
    full[_policy_mask(scheme, n_elements, shared_rho)] = free_action
    if shared_rho and free_heads(scheme, n_elements)[2]:
        full[2::3] = full[2]
    return full


def decode_action(action, scheme: str = "hybrid") -> ModeAssignment:
    """3N indices (beta, alpha, rho bucket per element) -> modes, with scheme overrides."""
    a = np.asarray(action)
    if a.ndim != 1 or a.size % 3:
        raise ValueError("action must be a flat vector of 3N indices")
    if not np.issubdtype(a.dtype, np.integer):
        if np.any(a != np.round(a)):
            raise ValueError("action indices must be integers")
        a = a.astype(np.int64)
    a = a.reshape(-1, 3)
    if np.any(a < 0) or np.any(a >= np.array(HEAD_SIZES)):
        raise ValueError("action index out of range")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    beta, alpha, k = a[:, 0].copy(), a[:, 1].copy(), a[:, 2]
    if scheme in ("active-passive", "active", "passive"):
        beta[:] = 1
    if scheme == "active":
        alpha[:] = 1
    if scheme in ("passive", "no-RIS"):
        alpha[:] = 0
    if scheme == "no-RIS":
        beta[:] = 0
    alpha = alpha * beta  # an idle element is neither active nor passive
    rho = np.where(alpha > 0, 10.0 * (k + 1), 1.0)
    return ModeAssignment(beta, alpha, rho)


# ---------------------------------------------------------------- stepping

@dataclass
class StepRecord:
    state: np.ndarray
    action: np.ndarray
    modes: ModeAssignment
    reward: float
    solution: InnerSolution

    @property
    def infeasible(self) -> bool:
        return not self.solution.feasible


def reward_from(sol: InnerSolution, e_ref: float, kappa: float) -> float:
    """-F*/E_ref, floored at -kappa; -kappa when infeasible."""
    if not sol.feasible:
        return -kappa
    return -min(sol.objective / e_ref, kappa)


def inner_problem(channels: ChannelSet, modes: ModeAssignment, cfg: EnvConfig) -> InnerProblem:
    prob = assemble_inner_problem(channels, modes, cfg.params)
    if cfg.scheme == "no-RIS" and cfg.no_ris_without_ehs:
        prob = replace(prob, fixed_energy=0.0)
    return prob


class HybridRISEnv:
    """Single-instance environment; not safe for concurrent stepping."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator, backend: str | None = None):
        self.cfg = cfg
        self.rng = rng
        self.backend = backend
        self.model = ChannelModel(cfg.geometry, cfg.links)
        self.channels: ChannelSet | None = None
        self.state: np.ndarray | None = None

    def draw(self) -> ChannelSet:
        return self.model.sample(self.rng)

    def reset(self) -> np.ndarray:
        self.channels = self.draw()
        self.state = build_state(self.channels, self.cfg.state_layout)
        return self.state

    def evaluate(self, channels: ChannelSet, action) -> tuple[float, ModeAssignment, InnerSolution]:
        modes = decode_action(action, self.cfg.scheme)
        sol = solve(inner_problem(channels, modes, self.cfg), backend=self.backend)
        return reward_from(sol, self.cfg.e_ref, self.cfg.kappa), modes, sol

    def step(self, action) -> tuple[float, StepRecord, np.ndarray]:
        if self.channels is None:
            raise RuntimeError("call reset() before step()")
        reward, modes, sol = self.evaluate(self.channels, action)
        rec = StepRecord(self.state, np.asarray(action), modes, reward, sol)
        return reward, rec, self.reset()


# ---------------------------------------------------------------- oracle

@dataclass
class OracleResult:
    modes: ModeAssignment | None
    objective: float
    solution: InnerSolution | None
    n_candidates: int
    n_solves: int
    all_objectives: dict = field(default_factory=dict, repr=False)

    @property
    def feasible(self) -> bool:
        return self.modes is not None


_RAW_PAIRS = {"hybrid": [(0, 0), (0, 1), (1, 0), (1, 1)],
              "active-passive": [(1, 0), (1, 1)], "active": [(1, 1)],
              "passive": [(1, 0)], "no-RIS": [(0, 0)]}


def enumerate_oracle(channels: ChannelSet, cfg: EnvConfig, uniform_rho: bool = True,
                     scheme: str | None = None, backend: str | None = None) -> OracleResult:
    """Exhaustive search over mode assignments (and rho buckets) for N <= 6.

    With ``uniform_rho`` every candidate is a raw (beta, alpha) pair per element
    times one shared rho bucket, so hybrid counts 4^N * 10 candidates; equal
    effective assignments (alpha ignored on idle elements, rho ignored unless
    active) are solved once. Without it the per-element choices are idle,
    passive or active with its own bucket (12^N for hybrid).
    """
    scheme = scheme or cfg.scheme
    N = channels.n_elements
    if N > ORACLE_MAX_N:
        raise ValueError(f"enumerate_oracle refuses N = {N} > {ORACLE_MAX_N}")
    cfg = replace(cfg, scheme=scheme)
    pairs = _RAW_PAIRS[scheme]
    buckets = range(N_BUCKETS)
    keys: dict[tuple, int] = {}
    order: list[tuple] = []
    n_candidates = 0
    if uniform_rho:
        for combo in itertools.product(pairs, repeat=N):
            for k in buckets:
                n_candidates += 1
                key = tuple((b, a * b, (k if a * b else -1)) for b, a in combo)
                if key not in keys:
                    keys[key] = len(order)
                    order.append(key)
    else:
        per = []
        for b, a in pairs:
            if a * b:
                per += [(1, 1, k) for k in buckets]
            elif (b, 0, -1) not in per:
                per.append((b, 0, -1))
        for key in itertools.product(per, repeat=N):
            n_candidates += 1
            keys[key] = len(order)
            order.append(key)
    arr = np.array(order, dtype=float).reshape(len(order), N, 3)
    beta, alpha, kk = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
    rho = np.where(alpha > 0, 10.0 * (kk + 1), 1.0)
    problems = assemble_batch(channels, beta, alpha, rho, cfg.params)
    best, best_i, best_sol = np.inf, -1, None
    objectives = {}
    for i, prob in enumerate(problems):
        if scheme == "no-RIS" and cfg.no_ris_without_ehs:
            prob = replace(prob, fixed_energy=0.0)
        sol = solve(prob, backend=backend)
        obj = sol.objective if sol.feasible else np.inf
        objectives[order[i]] = obj
        if obj < best:
            best, best_i, best_sol = obj, i, sol
    modes = None
    if best_i >= 0:
        modes = ModeAssignment(beta[best_i].astype(int), alpha[best_i].astype(int), rho[best_i])
    return OracleResult(modes, float(best), best_sol, n_candidates, len(order), objectives)
