import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybris.inner import (InnerProblem, InputError, available_backends, budget_use,
                          constraint_violations, feasibility_probe, format_problem,
                          format_solution, oracle_grid, parse_problem, rate_term,
                          scaled_violation, solve, user_rates)
from hybris.inner.oracle import _evaluate


def closed_form(T, q, a):
    return T * (2.0 ** (q / T) - 1.0) / a


def single(T=1.0, q=1.0, a=1.0, p_max=1.0):
    return InnerProblem(T=T, q_min=q, p_max=p_max, a=[a], b=[a], amp_weight=[0.0],
                        static_power=0.0, fixed_energy=0.0, budget=1.0)


def random_problem(rng, J, binding=False):
    a = rng.uniform(0.5, 5.0, J)
    b = a * rng.uniform(1.0, 4.0, J)
    q = rng.uniform(0.5, 3.0)
    w = rng.uniform(0.0, 1.0, J) if binding else np.zeros(J)
    static = rng.uniform(0.0, 0.5) if binding else 0.0
    budget = rng.uniform(0.5, 3.0) if binding else 1.0
    return InnerProblem(T=1.0, q_min=q, p_max=10.0, a=a, b=b, amp_weight=w,
                        static_power=static, fixed_energy=0.05 if binding else 0.0, budget=budget)


# ---------------------------------------------------------------- rate term

def test_rate_term_examples():
    assert rate_term(1.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert rate_term(0.0, 0.7, 5.0) == 0.0
    assert rate_term(0.0, 0.0, 5.0) == 0.0
    with pytest.raises(ValueError):
        rate_term(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        rate_term(-1.0, 1.0, 1.0)


pos = st.floats(0.0, 10.0, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(e1=pos, t1=st.floats(1e-3, 10.0), e2=pos, t2=st.floats(1e-3, 10.0), c=st.floats(1e-3, 1e3))
def test_rate_term_midpoint_concave(e1, t1, e2, t2, c):
    mid = rate_term((e1 + e2) / 2, (t1 + t2) / 2, c)
    assert mid >= (rate_term(e1, t1, c) + rate_term(e2, t2, c)) / 2 - 1e-12 * (1 + abs(mid))


def test_rate_term_concave_bulk():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 5, (10_000, 2))
    y = rng.uniform(0, 5, (10_000, 2))
    c = rng.uniform(0.01, 100, 10_000)
    x[:, 1] += 1e-6
    y[:, 1] += 1e-6
    m = (x + y) / 2
    f = lambda p: rate_term(p[:, 0], p[:, 1], c)
    assert np.all(f(m) >= (f(x) + f(y)) / 2 - 1e-12)


# ---------------------------------------------------------------- closed forms and verdicts

@pytest.mark.parametrize("T,q,a,expect", [(1.0, 1.0, 1.0, 1.0), (1.0, 5.0, 100.0, 0.31),
                                          (2.0, 3.0, 4.0, 0.914213562373095)])
def test_single_user_closed_form(T, q, a, expect):
    p = single(T, q, a, p_max=50.0)
    assert closed_form(T, q, a) == pytest.approx(expect, rel=1e-14)
    s = solve(p)
    assert s.feasible
    assert s.objective == pytest.approx(expect, rel=1e-6)
    assert s.t.sum() == pytest.approx(T, rel=1e-6)
    o = oracle_grid(p, 1000)
    assert o.objective == pytest.approx(expect, rel=1e-2)
    assert o.objective >= s.objective - 1e-6 * expect


def test_capacity_infeasible():
    p = InnerProblem(T=1.0, q_min=10.0, p_max=1.0, a=[1.0], b=[1.0], amp_weight=[0.0],
                     static_power=0.0, fixed_energy=0.0, budget=1.0)
    s = solve(p)
    assert s.status == "infeasible"
    assert "qos" in s.certificate
    assert oracle_grid(p).status == "infeasible"
    feasible, slack = feasibility_probe(p)
    assert not feasible and slack < 0


def test_probe_zero_rate_and_budget_deficit():
    p = InnerProblem(T=1.0, q_min=0.0, p_max=1.0, a=[1.0, 2.0], b=[1.0, 2.0],
                     amp_weight=[0.0, 0.0], static_power=0.0, fixed_energy=0.0, budget=1.0)
    feasible, slack = feasibility_probe(p)
    assert feasible and slack > 0
    assert solve(p).objective == 0.0
    q = InnerProblem(T=1.0, q_min=1.0, p_max=1.0, a=[5.0], b=[5.0], amp_weight=[0.0],
                     static_power=0.0, fixed_energy=2.0, budget=1.0)
    assert feasibility_probe(q)[0] is False
    s = solve(q)
    assert s.status == "infeasible" and "energy_budget" in s.certificate


def test_budget_infeasible_by_static_power():
    # phase 2 costs too much to run; with a = 0 nothing else can carry bits
    p = InnerProblem(T=1.0, q_min=2.0, p_max=1.0, a=[0.0], b=[10.0], amp_weight=[0.0],
                     static_power=5.0, fixed_energy=0.0, budget=0.05)
    # 2 bits at b = 10 needs t2 log2(1 + 10/t2) >= 2 with t2 <= 0.01: impossible
    assert solve(p).status == "infeasible"
    assert feasibility_probe(p)[0] is False
    assert oracle_grid(p).status == "infeasible"


# ---------------------------------------------------------------- frozen J = 2 instances
# Reference values from the grid oracle at resolution 80 with local refinement.

A_KW = dict(T=1.0, q_min=2.0, p_max=10.0, a=[1.0, 2.0], b=[3.0, 5.0])
FROZEN_A = 2.008307662523534
# same channels with amplifier and static costs; the harvest budget binds at 1 and 2
FROZEN_B1 = 4.090745542214004
FROZEN_B2 = 2.6873953589340926


def test_frozen_two_users_slack_budget():
    p = InnerProblem(**A_KW, amp_weight=[0.0, 0.0], static_power=0.0, fixed_energy=0.0, budget=1.0)
    s = solve(p)
    assert s.objective == pytest.approx(FROZEN_A, rel=1e-6)
    np.testing.assert_array_equal(s.t[0], 0.0)
    np.testing.assert_allclose(s.E.sum(axis=0), FROZEN_A, rtol=1e-6)  # both users at the max
    assert s.objective <= FROZEN_A * (1 + 1e-6)


@pytest.mark.parametrize("budget,frozen", [(1.0, "B1"), (2.0, "B2"), (3.0, None)])
def test_frozen_two_users_budget(budget, frozen):
    p = InnerProblem(**A_KW, amp_weight=[0.5, 0.5], static_power=0.5, fixed_energy=0.1, budget=budget)
    s = solve(p)
    ref = {"B1": FROZEN_B1, "B2": FROZEN_B2, None: FROZEN_A}[frozen]
    assert s.objective == pytest.approx(ref, rel=1e-6)
    if frozen:  # the budget binds
        assert budget_use(p, s.E, s.t) == pytest.approx(budget, rel=1e-6)
    else:
        assert budget_use(p, s.E, s.t) < budget


# ---------------------------------------------------------------- solver post-conditions

def test_returned_point_feasible():
    rng = np.random.default_rng(11)
    for k in range(60):
        p = random_problem(rng, 1 + k % 3, binding=bool(k % 2))
        s = solve(p)
        if not s.feasible:
            continue
        assert scaled_violation(p, s.E, s.t) <= 1e-6
        assert np.all(s.E[s.t == 0] == 0)
        assert s.objective == pytest.approx(np.max(s.E.sum(axis=0)))


def test_oracle_dominance():
    rng = np.random.default_rng(21)
    done = 0
    while done < 6:
        p = random_problem(rng, 2, binding=bool(done % 2))
        s = solve(p)
        if not s.feasible:
            continue
        o = oracle_grid(p, 24, refine=20)
        assert o.feasible
        assert s.objective <= o.objective + 1e-6 * o.objective
        assert scaled_violation(p, o.E, o.t) <= 1e-9
        done += 1


def test_local_optimality_under_time_perturbation():
    rng = np.random.default_rng(5)
    for k in range(6):
        p = random_problem(rng, 2, binding=bool(k % 2))
        s = solve(p)
        if not s.feasible:
            continue
        t = np.concatenate([s.t[0], s.t[1]])
        cand = t[None, :] + rng.normal(0.0, 0.02, (1000, 4))
        cand = np.maximum(cand, 0.0)
        cand /= cand.sum(axis=1, keepdims=True) / p.T
        tau, _ = _evaluate(p, cand[:, :2], cand[:, 2:])
        assert np.all(tau >= s.objective * (1 - 1e-6))


def test_monotone_in_frame_and_rate():
    rng = np.random.default_rng(8)
    for k in range(20):
        p = random_problem(rng, 2, binding=bool(k % 2))
        s = solve(p)
        if not s.feasible:
            continue
        longer = solve(InnerProblem(**{**p.__dict__, "T": p.T * 1.2}))
        more = solve(InnerProblem(**{**p.__dict__, "q_min": p.q_min * 1.2}))
        assert longer.feasible and longer.objective <= s.objective * (1 + 1e-6)
        if more.feasible:
            assert more.objective >= s.objective * (1 - 1e-6)


@pytest.mark.parametrize("scale", [0.1, 7.0])
def test_slope_scaling(scale):
    rng = np.random.default_rng(13)
    for _ in range(5):
        p = random_problem(rng, 2)
        p = InnerProblem(**{**p.__dict__, "p_max": 1e6})
        s = solve(p)
        q = solve(InnerProblem(**{**p.__dict__, "a": p.a * scale, "b": p.b * scale}))
        assert q.objective == pytest.approx(s.objective / scale, rel=1e-5)


def test_input_errors():
    for bad in (dict(T=0.0), dict(q_min=math.nan), dict(a=[math.inf]), dict(p_max=-1.0)):
        kw = dict(T=1.0, q_min=1.0, p_max=1.0, a=[1.0], b=[1.0], amp_weight=[0.0],
                  static_power=0.0, fixed_energy=0.0, budget=1.0)
        kw.update(bad)
        with pytest.raises(InputError):
            solve(InnerProblem(**kw))
    with pytest.raises(InputError):
        InnerProblem(T=1.0, q_min=1.0, p_max=1.0, a=[1.0, 2.0], b=[1.0], amp_weight=[0.0],
                     static_power=0.0, fixed_energy=0.0, budget=1.0)
    with pytest.raises(ValueError):
        oracle_grid(InnerProblem(T=1.0, q_min=1.0, p_max=1.0, a=np.ones(4), b=np.ones(4),
                                 amp_weight=np.zeros(4), static_power=0.0, fixed_energy=0.0,
                                 budget=1.0))


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
def test_backends_agree():
    rng = np.random.default_rng(17)
    for k in range(40):
        p = random_problem(rng, 1 + k % 3, binding=bool(k % 2))
        a, b = solve(p, backend="python"), solve(p, backend="compiled")
        assert a.status == b.status
        if a.feasible:
            assert a.objective == pytest.approx(b.objective, rel=1e-8)


# ---------------------------------------------------------------- text format

def test_text_roundtrip():
    p = InnerProblem(**A_KW, amp_weight=[0.5, 0.25], static_power=0.5, fixed_energy=0.1, budget=2.0)
    q = parse_problem(format_problem(p))
    for k in ("T", "q_min", "p_max", "static_power", "fixed_energy", "budget"):
        assert getattr(q, k) == getattr(p, k)
    for k in ("a", "b", "amp_weight"):
        np.testing.assert_array_equal(getattr(q, k), getattr(p, k))
    out = format_solution(solve(q))
    assert out.startswith("status = optimal")
    assert "objective = " in out and "t2 = " in out


def test_text_defaults_and_errors():
    p = parse_problem("# one user\nT = 1\nq_min = 1\np_max = 1\na = 1\nb = 1\n")
    assert solve(p).objective == pytest.approx(1.0, rel=1e-6)
    for text in ("T = 1\nq_min = 1\np_max = 1\na = 1\n",            # missing b
                 "T = 1\nT = 2\nq_min = 1\np_max = 1\na = 1\nb = 1\n",  # duplicate
                 "T = 1\nq_min = 1\np_max = 1\na = 1\nb = 1\ncolour = 3\n",
                 "T = one\nq_min = 1\np_max = 1\na = 1\nb = 1\n",
                 "T = 1 2\nq_min = 1\np_max = 1\na = 1\nb = 1\n",
                 "T 1\n"):
        with pytest.raises(InputError):
            parse_problem(text)
