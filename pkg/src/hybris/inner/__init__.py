from .problem import (InnerProblem, InnerSolution, InputError, SolverFailure, rate_term,
                      constraint_violations, scaled_violation, user_rates, budget_use)
from .solver import solve, feasibility_probe, available_backends, BACKEND
from .oracle import oracle_grid

__all__ = [
    "InnerProblem", "InnerSolution", "InputError", "SolverFailure", "rate_term",
    "constraint_violations", "scaled_violation", "user_rates", "budget_use",
    "solve", "feasibility_probe", "available_backends", "BACKEND", "oracle_grid",
]
from .textio import parse_problem, format_problem, format_solution

__all__ += ["parse_problem", "format_problem", "format_solution"]
