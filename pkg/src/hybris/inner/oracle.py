"""Grid-search oracle for the inner program (J <= 3).

Independent of the barrier solver: it enumerates slot lengths on a uniform
grid of the frame and, for each grid point, computes the exact best energies
by closed forms and bisection:

* full frame use is optimal (extra phase-1 time raises rates at no energy-budget cost),
  so the grid covers compositions of ``resolution`` time quanta into 2J slots;
* per user, the least total energy for a given phase-2 energy E2 is closed form
  (invert the phase-1 rate), and the unconstrained minimum is capped water-filling;
* the energy budget couples users only through sum_j w_j E2_j, handled by an
  outer bisection on tau.

Every point examined is feasible for the true program, so the oracle value is
an upper bound on the optimum.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .problem import InnerProblem, InnerSolution

LOG2 = math.log(2.0)
_BISECT = 60
_NEWTON = 60


def _rate(E, t, c):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, t * np.log1p(c * E / np.where(t > 0, t, 1.0)) / LOG2, 0.0)


def _e1_needed(E2, t1, t2, a, b, q):
    """Least phase-1 energy completing q bits given phase-2 energy E2 (inf if impossible)."""
    rem = q - _rate(E2, t2, b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e1 = np.where(rem <= 0, 0.0,
                      np.where((t1 > 0) & (a > 0), t1 / np.where(a > 0, a, 1.0)
                               * np.expm1(rem / np.where(t1 > 0, t1, 1.0) * LOG2), np.inf))
    return e1


class _Users:
    """Per-user quantities on a batch of time points; arrays are (P, J)."""

    def __init__(self, p: InnerProblem, t1, t2):
        self.p = p
        self.t1, self.t2 = t1, t2
        a, b, q, pm = p.a, p.b, p.q_min, p.p_max
        self.a, self.b = np.broadcast_to(a, t1.shape), np.broadcast_to(b, t1.shape)
        rem = q - _rate(pm * t1, t1, self.a)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            lo = np.where(rem <= 0, 0.0,
                          np.where((t2 > 0) & (self.b > 0),
                                   t2 / np.where(self.b > 0, self.b, 1.0)
                                   * np.expm1(rem / np.where(t2 > 0, t2, 1.0) * LOG2), np.inf))
        self.ok = lo <= pm * t2 * (1 + 1e-12)
        self.E2lo = np.where(self.ok, np.minimum(lo, pm * t2), 0.0)
        self.E2star = self._waterfill()

    def e_total(self, E2):
        return E2 + np.minimum(_e1_needed(E2, self.t1, self.t2, self.a, self.b, self.p.q_min),
                               np.where(self.ok, self.p.p_max * self.t1, np.inf))

    def _waterfill(self):
        # capped water-filling over the two slots: p_i = clip(W - 1/c_i, 0, p_max).
        # Between consecutive breakpoints {1/c_i, 1/c_i + p_max} the rate is
        # K + S log2(W), so the level W is closed form on the crossing segment.
        pm, q = self.p.p_max, self.p.q_min
        t = np.stack([self.t1, self.t2], axis=-1)  # (P, J, 2)
        c = np.stack([self.a, self.b], axis=-1)
        live = (c > 0) & (t > 0)
        inv = np.where(live, 1.0 / np.where(live, c, 1.0), np.inf)
        brk = np.sort(np.concatenate([inv, inv + pm], axis=-1), axis=-1)  # (P, J, 4)

        def rate_at(W):
            pw = np.clip(W[..., None] - inv, 0.0, pm)
            return np.sum(np.where(live, t * np.log1p(c * pw), 0.0), axis=-1) / LOG2

        R = np.stack([rate_at(np.where(np.isfinite(brk[..., k]), brk[..., k], 0.0))
                      for k in range(4)], axis=-1)
        R = np.where(np.isfinite(brk), R, np.inf)
        seg = np.argmax(R >= q, axis=-1)  # first breakpoint reaching q
        lo = np.take_along_axis(brk, np.maximum(seg - 1, 0)[..., None], axis=-1)[..., 0]
        hi = np.take_along_axis(brk, seg[..., None], axis=-1)[..., 0]
        mid = 0.5 * (lo + hi)
        act = live & (inv < mid[..., None]) & (mid[..., None] < inv + pm)
        cap = live & (mid[..., None] >= inv + pm)
        K = np.sum(np.where(cap, t * np.log2(1.0 + c * pm), 0.0), axis=-1)
        K = K + np.sum(np.where(act, t * np.log2(np.where(act, c, 1.0)), 0.0), axis=-1)
        S = np.sum(np.where(act, t, 0.0), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            W = np.exp2((q - K) / S)
        W = np.where((seg == 0) | (S <= 0), lo, np.clip(W, lo, hi))
        with np.errstate(invalid="ignore"):
            p2 = np.clip(W - inv[..., 1], 0.0, pm)
        E2 = np.where(live[..., 1], p2 * self.t2, 0.0)
        return np.where(self.ok, np.maximum(E2, self.E2lo), 0.0)

    def _slope(self, E2):
        # d e_total / d E2 where phase 1 still carries bits
        rem = self.p.q_min - _rate(E2, self.t2, self.b)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            grow = np.exp2(rem / np.where(self.t1 > 0, self.t1, 1.0))
            d = -grow / np.where(self.a > 0, self.a, 1.0) * self.b / (
                1.0 + self.b * E2 / np.where(self.t2 > 0, self.t2, 1.0))
        return 1.0 + np.where((rem > 0) & (self.t1 > 0), d, 0.0)

    def e2_for_tau(self, tau):
        """Least E2 on [E2lo, E2*] with total energy <= tau (tau broadcast per row).

        e_total is convex and decreasing on that interval, so Newton steps
        started at E2lo climb monotonically to the crossing.
        """
        tau = tau[:, None]
        x = self.E2lo.copy()
        for _ in range(_NEWTON):
            f = self.e_total(x) - tau
            g = self._slope(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where((f > 0) & (g < 0), -f / g, 0.0)
            step = np.where(np.isfinite(step), step, 0.0)
            nx = np.minimum(x + step, self.E2star)
            if np.all(nx == x):
                break
            x = nx
        return x


def _evaluate(p: InnerProblem, t1: np.ndarray, t2: np.ndarray):
    """Best tau and phase-2 energies per time point; tau = inf where infeasible."""
    P = t1.shape[0]
    users = _Users(p, t1, t2)
    reserve = p.reserve - p.static_power * t2.sum(axis=1)
    feas = np.all(users.ok, axis=1) & (reserve >= 0)
    tau = np.full(P, np.inf)
    E2 = users.E2star.copy()
    e_star = users.e_total(users.E2star)
    tau_lb = np.max(e_star, axis=1)
    use_star = users.E2star @ p.amp_weight
    free = feas & (use_star <= reserve)
    tau[free] = tau_lb[free]
    bind = feas & ~free
    if np.any(bind):
        idx = np.flatnonzero(bind)
        sub = _Users(p, t1[idx], t2[idx])
        res = reserve[idx]
        use_lo = sub.E2lo @ p.amp_weight
        ok = use_lo <= res
        lo = tau_lb[idx]
        hi = np.max(sub.e_total(sub.E2lo), axis=1)
        for _ in range(_BISECT):
            mid = 0.5 * (lo + hi)
            good = sub.e2_for_tau(mid) @ p.amp_weight <= res
            hi = np.where(good, mid, hi)
            lo = np.where(good, lo, mid)
        e2 = sub.e2_for_tau(hi)
        tau[idx[ok]] = hi[ok]
        E2[idx] = e2
    return tau, E2


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    out = []
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, row = -1, []
        for bpos in bars:
            row.append(bpos - prev - 1)
            prev = bpos
        row.append(total + parts - 1 - prev - 1)
        out.append(row)
    return np.array(out, dtype=float)


def _split(points, J, T):
    return points[:, :J], points[:, J:]


def oracle_grid(problem: InnerProblem, resolution: int | None = None,
                refine: int = 40) -> InnerSolution:
    """Grid search over slot lengths; returns the best feasible grid point.

    ``resolution`` is the number of time quanta the frame is cut into
    (defaults 1000 / 40 / 16 for J = 1 / 2 / 3). ``refine`` extra levels
    halve the step around the incumbent; every visited point is still a
    feasible allocation. ``extra['grid_bound']`` estimates the residual
    discretization error as the largest objective change to a neighbouring
    point at the finest step.
    """
    problem.check()
    J = problem.J
    if J > 3:
        raise ValueError("oracle_grid supports J <= 3")
    if resolution is None:
        resolution = {1: 1000, 2: 40, 3: 16}[J]
    T = problem.T
    if problem.q_min <= 0 and problem.reserve >= 0:
        z = np.zeros((2, J))
        return InnerSolution("optimal", E=z, t=z.copy(), objective=0.0,
                             extra={"grid_bound": 0.0, "points": 0})
    pts = _compositions(resolution, 2 * J) * (T / resolution)
    tau, _ = _evaluate(problem, *_split(pts, J, T))
    n_points = len(pts)
    if not np.any(np.isfinite(tau)):
        return InnerSolution("infeasible", certificate="infeasible at resolution",
                             extra={"grid_bound": math.inf, "points": n_points})
    best = pts[int(np.argmin(tau))]
    best_tau = float(np.min(tau))
    h = T / resolution
    d = 2 * J - 1
    offsets = np.array(list(itertools.product(range(-2, 3), repeat=d)), dtype=float)
    offsets = offsets[np.any(offsets != 0, axis=1)]
    bound = math.inf
    unit = np.max(np.abs(offsets), axis=1) <= 1
    # random directions (fixed seed) and an extrapolation along the last
    # successful move help along kinked ridges where several users' energies
    # (and the budget) are tight at once; a wider direction set is tried
    # before each step halving
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((32 * d, d))
    dirs /= np.max(np.abs(dirs), axis=1, keepdims=True)
    wide = rng.standard_normal((2048, d))
    wide /= np.max(np.abs(wide), axis=1, keepdims=True)
    wide = np.vstack([wide, wide / 8.0])
    steps = np.vstack([offsets, dirs])
    near_mask = np.concatenate([unit, np.zeros(len(dirs), bool)])
    move = np.zeros(d)
    halvings = 0
    stalled = False

    def trial(free, near):
        # clip free coordinates at zero; the absorbing slot takes the rest
        free = np.maximum(free, 0.0)
        cand = np.hstack([free, T - free.sum(axis=1, keepdims=True)])
        ok = cand[:, -1] >= 0
        cand, near = cand[ok], near[ok]
        ct = _evaluate(problem, *_split(cand, J, T))[0] if len(cand) else np.empty(0)
        return cand, near, ct

    for _ in range(20 * (refine + 1)):
        if stalled:
            cand, near, ct = trial(best[None, :d] + h * wide, np.zeros(len(wide), bool))
        else:
            jumps = best[None, :d] + move[None, :] * np.array([1.0, 2.0, 4.0, 8.0])[:, None]
            cand, near, ct = trial(np.vstack([best[None, :d] + h * steps, jumps]),
                                   np.concatenate([near_mask, np.zeros(len(jumps), bool)]))
            fin = ct[near][np.isfinite(ct[near])]
            bound = float(np.max(np.abs(fin - best_tau))) if len(fin) else math.inf
        n_points += len(cand)
        k = int(np.argmin(ct)) if len(ct) else -1
        if k >= 0 and ct[k] < best_tau:
            move = cand[k, :d] - best[:d]
            best, best_tau = cand[k], float(ct[k])
            stalled = False
        elif not stalled:
            stalled = True
        elif h > T * 1e-12 and halvings < refine:
            h *= 0.5
            halvings += 1
            move = np.zeros(d)
            stalled = False
        else:
            break
    t1, t2 = _split(best[None, :], J, T)
    tau1, E2 = _evaluate(problem, t1, t2)
    users = _Users(problem, t1, t2)
    E1 = np.minimum(_e1_needed(E2, t1, t2, users.a, users.b, problem.q_min), problem.p_max * t1)
    E = np.vstack([E1[0], E2[0]])
    t = np.vstack([t1[0], t2[0]])
    return InnerSolution("optimal", E=E, t=t, objective=float(np.max(E.sum(axis=0))),
                         extra={"grid_bound": bound, "points": n_points, "tau": float(tau1[0])})
