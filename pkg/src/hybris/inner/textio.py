"""Plain-text key = value format for single inner-problem instances.

Problem file::

    # comments and blank lines are ignored
    T = 1.0                  # s
    q_min = 5                # bits/Hz
    p_max = 0.1              # W
    a = 1.2e5, 3.4e5         # 1/W, one per user
    b = 2.0e5, 4.1e5         # 1/W
    amp_weight = 0, 0        # optional, default zeros
    static_power = 0         # W, optional
    fixed_energy = 0         # J, optional
    budget = 1e-3            # J, optional, default +inf (slack)

Solution output uses the same syntax: status, objective, E1, E2, t1, t2,
certificate, newton_steps.
"""
from __future__ import annotations

import math

import numpy as np

from .problem import InnerProblem, InnerSolution, InputError

_SCALARS = ("T", "q_min", "p_max", "static_power", "fixed_energy", "budget")
_VECTORS = ("a", "b", "amp_weight")
_REQUIRED = ("T", "q_min", "p_max", "a", "b")


def _numbers(text: str, key: str, lineno: int) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"line {lineno}: cannot parse value of {key!r}") from None


def parse_problem(text: str) -> InnerProblem:
    values: dict[str, list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _SCALARS and key not in _VECTORS:
            raise InputError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise InputError(f"line {lineno}: duplicate key {key!r}")
        nums = _numbers(val, key, lineno)
        if key in _SCALARS and len(nums) != 1:
            raise InputError(f"line {lineno}: {key!r} takes one number")
        if not nums:
            raise InputError(f"line {lineno}: {key!r} is empty")
        values[key] = nums
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise InputError(f"missing keys: {', '.join(missing)}")
    J = len(values["a"])
    w = values.get("amp_weight", [0.0] * J)
    budget = values.get("budget", [math.inf])[0]
    static = values.get("static_power", [0.0])[0]
    fixed = values.get("fixed_energy", [0.0])[0]
    if math.isinf(budget) and budget > 0:
        # slack budget: large enough never to bind, finite for the solver
        budget = fixed + 1.0
        w = [0.0] * J
        static = 0.0
    return InnerProblem(T=values["T"][0], q_min=values["q_min"][0], p_max=values["p_max"][0],
                        a=np.array(values["a"]), b=np.array(values["b"]), amp_weight=np.array(w),
                        static_power=static, fixed_energy=fixed, budget=budget)


def format_problem(p: InnerProblem) -> str:
    vec = lambda x: ", ".join(repr(float(v)) for v in x)
    lines = [f"T = {p.T!r}", f"q_min = {p.q_min!r}", f"p_max = {p.p_max!r}",
             f"a = {vec(p.a)}", f"b = {vec(p.b)}", f"amp_weight = {vec(p.amp_weight)}",
             f"static_power = {p.static_power!r}", f"fixed_energy = {p.fixed_energy!r}",
             f"budget = {p.budget!r}"]
    return "\n".join(lines) + "\n"


def format_solution(sol: InnerSolution) -> str:
    vec = lambda x: ", ".join(f"{float(v):.12g}" for v in x)
    lines = [f"status = {sol.status}"]
    if sol.feasible:
        lines.append(f"objective = {sol.objective:.12g}")
        for i in range(2):
            lines.append(f"E{i + 1} = {vec(sol.E[i])}")
        for i in range(2):
            lines.append(f"t{i + 1} = {vec(sol.t[i])}")
    else:
        lines.append(f"certificate = {sol.certificate}")
    if math.isfinite(sol.slack):
        lines.append(f"slack = {sol.slack:.6g}")
    lines.append(f"newton_steps = {sol.newton_steps}")
    return "\n".join(lines) + "\n"
