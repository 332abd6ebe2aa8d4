"""Interior-point solution of the inner min-max energy program.

The program is solved in epigraph form (minimize tau s.t. E1_j + E2_j <= tau)
with a log-barrier method. A phase-1 problem that maximizes the smallest
normalized constraint slack decides feasibility before the main solve; its
optimum is also what :func:`feasibility_probe` reports.
"""
from __future__ import annotations

import math
import os

import numpy as np

from . import _pykernel
from .problem import InnerProblem, InnerSolution, SolverFailure

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

T_FLOOR = 1e-9  # seconds; slots below 10 * T_FLOOR are reported as unused
DEFAULT_TOL = 1e-6

_BACKENDS = {"python": _pykernel}
if _ckernel is not None:
    _BACKENDS["compiled"] = _ckernel


def available_backends() -> list[str]:
    return list(_BACKENDS)


def _default_backend() -> str:
    want = os.environ.get("HYBRIS_BACKEND", "").strip().lower()
    if want:
        if want not in _BACKENDS:
            raise ImportError(f"HYBRIS_BACKEND={want!r} requested but not available "
                              f"(have {available_backends()})")
        return want
    return "compiled" if "compiled" in _BACKENDS else "python"


BACKEND = _default_backend()


def _kernel(backend: str | None):
    return _BACKENDS[backend or BACKEND]


def _energy_scale(p: InnerProblem) -> float:
    # minimum energy of a lone user owning the whole frame on the best slope:
    # a lower bound on tau that keeps the scaled objective O(1)
    cap = p.p_max * p.T
    best = float(max(np.max(p.a), np.max(p.b)))
    if best <= 0 or p.q_min / p.T > 1000:
        return cap
    e = p.T * math.expm1(p.q_min / p.T * math.log(2.0)) / best
    return min(max(e, 1e-300), cap)


def _scaled(p: InnerProblem):
    """Scaled kernel arguments: (a, b, w, st, r, use_budget, rcap, q, E0)."""
    E0 = _energy_scale(p)
    reserve = p.reserve
    a_hat = p.a * E0 / p.T
    b_hat = p.b * E0 / p.T
    budget_moves = p.static_power > 0 or np.any(p.amp_weight > 0)
    use_budget = bool(budget_moves and reserve > 0)
    if budget_moves and reserve <= 0:
        # reserve == 0 exactly: no energy for phase 2 at all
        b_hat = np.zeros_like(b_hat)
    scale = p.budget if p.budget > 0 else 1.0
    w = p.amp_weight * E0 / scale
    st = p.static_power * p.T / scale
    r = reserve / scale
    rcap = p.p_max * p.T / E0
    return a_hat, b_hat, w, st, r, use_budget, rcap, p.q_min / p.T, E0


def _family_name(idx: int, J: int) -> str:
    if idx < 0:
        return "unknown"
    if idx < J:
        return f"qos[user {idx}]"
    return "time" if idx == J else "energy_budget"


def _trivial(p: InnerProblem) -> InnerSolution | None:
    if p.reserve < 0:
        return InnerSolution("infeasible", certificate="energy_budget: fixed EHS circuit energy "
                             "exceeds the harvested energy", slack=p.reserve / max(p.budget, 1e-300))
    if p.q_min <= 0:
        z = np.zeros((2, p.J))
        return InnerSolution("optimal", E=z, t=z.copy(), objective=0.0, slack=1.0)
    if p.p_max <= 0 or not np.any(np.maximum(p.a, p.b) > 0):
        return InnerSolution("infeasible", certificate="qos: no user can transmit", slack=-1.0)
    return None


def feasibility_probe(problem: InnerProblem, backend: str | None = None) -> tuple[bool, float]:
    """Max-min normalized slack of the constraint set; feasible iff it is >= 0
    (up to a 1e-9 numerical tolerance).

    Slacks: per-user QoS as a fraction of q_min, unused frame time as a
    fraction of T, spare harvested energy as a fraction of the budget.
    """
    problem.check()
    triv = _trivial(problem)
    if triv is not None:
        return triv.feasible, triv.slack
    a, b, w, st, r, ub, rcap, q, _ = _scaled(problem)
    status, x, slack, fam, _ = _kernel(backend).barrier_solve(a, b, w, st, r, ub, rcap, q, 1e-9, True)
    if status == _pykernel.FAILED:
        raise SolverFailure("feasibility probe did not converge")
    # slacks within SLACK_TOL of zero count as feasible (boundary instances)
    return status == _pykernel.OK, float(slack)


def solve(problem: InnerProblem, tol: float = DEFAULT_TOL, backend: str | None = None) -> InnerSolution:
    """Minimize max_j (E1_j + E2_j) over energies and slot lengths.

    Returns status "infeasible" with a certificate naming the constraint
    family with the smallest slack at the phase-1 optimum. Raises
    :class:`SolverFailure` when Newton iterations run out.
    """
    problem.check()
    triv = _trivial(problem)
    if triv is not None:
        return triv
    J = problem.J
    a, b, w, st, r, ub, rcap, q, E0 = _scaled(problem)
    status, x, slack, fam, steps = _kernel(backend).barrier_solve(
        a, b, w, st, r, ub, rcap, q, tol * 1e-2, False)
    if status == _pykernel.FAILED:
        raise SolverFailure(f"barrier method failed after {steps} Newton steps")
    if status == _pykernel.INFEASIBLE:
        return InnerSolution("infeasible", certificate=_family_name(fam, J), slack=slack,
                             newton_steps=steps)
    x = np.asarray(x)
    extra = {}
    if status == _pykernel.BOUNDARY:
        # the feasible set has no interior (max slack is zero): the phase-1
        # point is the only certified feasible point and is returned as is
        extra["boundary"] = True
    E = x[:2 * J].reshape(2, J) * E0
    t = x[2 * J:4 * J].reshape(2, J) * problem.T
    unused = t < 10 * T_FLOOR
    E[unused] = 0.0
    t[unused] = 0.0
    obj = float(np.max(E.sum(axis=0)))
    return InnerSolution("optimal", E=E, t=t, objective=obj, slack=slack, newton_steps=steps,
                         extra=extra)
