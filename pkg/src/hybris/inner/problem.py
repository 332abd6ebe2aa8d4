from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """Malformed or non-finite inner-problem data."""


class SolverFailure(RuntimeError):
    """The solver did not converge on an instance it could not prove infeasible."""


@dataclass(frozen=True)
class InnerProblem:
    """Canonical min-max energy / time allocation program for fixed RIS modes.

    Users j = 1..J get a phase-1 slot (direct link only, SNR slope ``a[j]``)
    and a phase-2 slot (RIS-assisted, slope ``b[j]``). The RIS energy budget
    reads ``sum_j amp_weight[j] E2[j] + static_power * sum_j t2[j]
    + fixed_energy <= budget``.
    """

    T: float
    q_min: float
    p_max: float
    a: np.ndarray
    b: np.ndarray
    amp_weight: np.ndarray
    static_power: float
    fixed_energy: float
    budget: float

    def __post_init__(self):
        for k in ("a", "b", "amp_weight"):
            object.__setattr__(self, k, np.atleast_1d(np.asarray(getattr(self, k), dtype=float)))
        if not (self.a.shape == self.b.shape == self.amp_weight.shape) or self.a.ndim != 1:
            raise InputError("a, b and amp_weight must be 1-D arrays of length J")

    @property
    def J(self) -> int:
        return self.a.shape[0]

    def check(self) -> None:
        scalars = [self.T, self.q_min, self.p_max, self.static_power, self.fixed_energy, self.budget]
        arrays = [self.a, self.b, self.amp_weight]
        if not all(math.isfinite(v) for v in scalars) or not all(np.all(np.isfinite(x)) for x in arrays):
            raise InputError("inner problem has non-finite coefficients")
        if self.T <= 0:
            raise InputError("frame length T must be positive")
        if min(scalars[1:]) < 0 or any(np.any(x < 0) for x in arrays):
            raise InputError("inner problem coefficients must be nonnegative")

    @property
    def reserve(self) -> float:
        """Budget left after the fixed EHS circuit cost."""
        return self.budget - self.fixed_energy


@dataclass
class InnerSolution:
    status: str  # "optimal" | "infeasible"
    E: np.ndarray | None = None  # (2, J)
    t: np.ndarray | None = None  # (2, J)
    objective: float = math.inf
    certificate: str = ""
    slack: float = math.nan  # best normalized constraint slack found by the feasibility phase
    newton_steps: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


def rate_term(E, t, c):
    """``t log2(1 + c E / t)`` in bits/Hz, with the t = 0 limit equal to 0.

    Jointly concave in (E, t). Broadcasts over arrays.
    """
    E = np.asarray(E, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any((t == 0) & (E > 0)):
        raise ValueError("rate_term: positive energy in a zero-length slot")
    if np.any(t < 0) or np.any(E < 0):
        raise ValueError("rate_term: E and t must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(t > 0, t * np.log1p(c * E / np.where(t > 0, t, 1.0)) / math.log(2.0), 0.0)
    return float(r) if r.ndim == 0 else r


def user_rates(problem: InnerProblem, E: np.ndarray, t: np.ndarray) -> np.ndarray:
    return rate_term(E[0], t[0], problem.a) + rate_term(E[1], t[1], problem.b)


def budget_use(problem: InnerProblem, E: np.ndarray, t: np.ndarray) -> float:
    return float(problem.amp_weight @ E[1] + problem.static_power * t[1].sum() + problem.fixed_energy)


def constraint_violations(problem: InnerProblem, E: np.ndarray, t: np.ndarray) -> dict[str, float]:
    """Largest violation per constraint family, in each family's natural unit (>= 0)."""
    E = np.asarray(E, dtype=float)
    t = np.asarray(t, dtype=float)
    rates = user_rates(problem, E, t)
    return {
        "time": max(0.0, float(t.sum()) - problem.T),
        "t_nonneg": max(0.0, float(-t.min())),
        "E_nonneg": max(0.0, float(-E.min())),
        "power_cap": max(0.0, float(np.max(E - problem.p_max * t))),
        "qos": max(0.0, float(np.max(problem.q_min - rates))),
        "energy_budget": max(0.0, budget_use(problem, E, t) - problem.budget),
    }


def scaled_violation(problem: InnerProblem, E: np.ndarray, t: np.ndarray) -> float:
    """Max violation with each family divided by its natural scale."""
    v = constraint_violations(problem, E, t)
    e_scale = problem.p_max * problem.T
    scales = {"time": problem.T, "t_nonneg": problem.T, "E_nonneg": e_scale, "power_cap": e_scale,
              "qos": max(problem.q_min, 1e-12), "energy_budget": max(problem.budget, 1e-300)}
    return max(v[k] / scales[k] for k in v)
