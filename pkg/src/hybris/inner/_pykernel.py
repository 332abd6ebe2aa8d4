"""Pure-numpy log-barrier kernel; fallback for ``_ckernel``.

Works in scaled units (t / T, E / E0) on x = [E1 (J), E2 (J), t1 (J), t2 (J), z]
where z is the epigraph variable tau (solve) or the common slack s (phase 1).

Constraints, all written as ``>= 0``:
    E_ij                         (2J)
    rcap t_ij - E_ij             (2J)
    1 - sum t        [- s]
    r - sum_j (w_j E2_j + st t2_j)   [- s]       only when use_budget
    z - E1_j - E2_j              (J, solve only)
    rate_j - q       [- qs s]    (J, nonlinear)
with rate_j = sum_i t_ij log2(1 + c_ij E_ij / t_ij), c = (a, b).
"""
from __future__ import annotations

import math

import numpy as np

LN2 = math.log(2.0)
OK, INFEASIBLE, FAILED, BOUNDARY = 0, 1, 2, 3
SLACK_TOL = 1e-9  # a max slack this close to zero counts as feasible

NEWTON_EPS = 1e-10
MAX_NEWTON = 200
MAX_TOTAL = 3000
ARMIJO = 0.01
SHRINK = 0.5


class _Program:
    def __init__(self, a, b, w, st, r, use_budget, rcap, q, phase1):
        J = len(a)
        self.J = J
        self.n = 4 * J + 1
        self.c = np.vstack([a, b])
        self.q = q
        self.qs = q if q > 0 else 1.0
        self.phase1 = phase1
        n, z = self.n, 4 * J
        rows, rhs = [], []
        for k in range(2 * J):
            e = np.zeros(n)
            e[k] = 1.0
            rows.append(e)
            rhs.append(0.0)
        for k in range(2 * J):
            e = np.zeros(n)
            e[2 * J + k] = rcap
            e[k] = -1.0
            rows.append(e)
            rhs.append(0.0)
        e = np.zeros(n)
        e[2 * J:4 * J] = -1.0
        if phase1:
            e[z] = -1.0
        rows.append(e)
        rhs.append(1.0)
        if use_budget:
            e = np.zeros(n)
            e[J:2 * J] = -np.asarray(w)
            e[3 * J:4 * J] = -st
            if phase1:
                e[z] = -1.0
            rows.append(e)
            rhs.append(r)
        if not phase1:
            for j in range(J):
                e = np.zeros(n)
                e[z] = 1.0
                e[j] = e[J + j] = -1.0
                rows.append(e)
                rhs.append(0.0)
        self.A = np.array(rows)
        self.b0 = np.array(rhs)
        self.m = len(rows) + J
        self.cobj = np.zeros(n)
        self.cobj[z] = -1.0 if phase1 else 1.0
        # variable indices of (E_i, t_i) per user, phase-major
        self.iE = np.arange(2 * J).reshape(2, J)
        self.it = 2 * J + self.iE

    def rates(self, x):
        J = self.J
        E = x[:2 * J].reshape(2, J)
        t = x[2 * J:4 * J].reshape(2, J)
        u = self.c * E / t
        lp = np.log1p(u)
        g = (t * lp).sum(axis=0) / LN2 - self.q
        if self.phase1:
            g = g - self.qs * x[-1]
        return g, E, t, u, lp

    def derivatives(self, x, tb):
        """Barrier value pieces, gradient and Hessian at x (assumed interior)."""
        ell = self.A @ x + self.b0
        g, E, t, u, lp = self.rates(x)
        inv = 1.0 / ell
        grad = tb * self.cobj - self.A.T @ inv
        H = (self.A.T * inv ** 2) @ self.A
        c = self.c
        fE = c / ((1.0 + u) * LN2)
        ft = (lp - u / (1.0 + u)) / LN2
        k = 1.0 / (t * (1.0 + u) ** 2 * LN2)
        hEE, hEt, htt = -k * c * c, k * c * u, -k * u * u
        for j in range(self.J):
            idx = [self.iE[0, j], self.iE[1, j], self.it[0, j], self.it[1, j]]
            dg = np.array([fE[0, j], fE[1, j], ft[0, j], ft[1, j]])
            gj = g[j]
            if self.phase1:
                idx.append(self.n - 1)
                dg = np.append(dg, -self.qs)
            grad[idx] -= dg / gj
            H[np.ix_(idx, idx)] += np.outer(dg, dg) / gj ** 2
            for i in range(2):
                a_, b_ = self.iE[i, j], self.it[i, j]
                H[a_, a_] -= hEE[i, j] / gj
                H[a_, b_] -= hEt[i, j] / gj
                H[b_, a_] -= hEt[i, j] / gj
                H[b_, b_] -= htt[i, j] / gj
        return ell, g, grad, H


def _newton_step(H, grad):
    d = np.sqrt(np.abs(np.diag(H)))
    d[d == 0] = 1.0
    Hs = H / np.outer(d, d)
    try:
        L = np.linalg.cholesky(Hs)
        y = np.linalg.solve(L, -grad / d)
        dx = np.linalg.solve(L.T, y) / d
    except np.linalg.LinAlgError:
        dx = np.linalg.lstsq(Hs, -grad / d, rcond=None)[0] / d
    return dx


def _center(prog, x, tb, counter, early_exit=False):
    """Damped Newton on the barrier function. Returns (x, ok)."""
    for _ in range(MAX_NEWTON):
        if counter[0] >= MAX_TOTAL:
            return x, False
        counter[0] += 1
        ell, g, grad, H = prog.derivatives(x, tb)
        dx = _newton_step(H, grad)
        slope = float(grad @ dx)
        lam2 = -slope
        if not np.isfinite(lam2):
            return x, False
        if lam2 / 2.0 <= NEWTON_EPS:
            return x, True
        Adx = prog.A @ dx
        neg = Adx < 0
        step = 1.0
        if np.any(neg):
            step = min(1.0, 0.99 * float(np.min(-ell[neg] / Adx[neg])))
        accepted = False
        while step > 1e-18:
            xn = x + step * dx
            gn = prog.rates(xn)[0]
            if np.all(gn > 0) and np.all(ell + step * Adx > 0):
                dphi = (tb * step * float(prog.cobj @ dx)
                        - float(np.sum(np.log1p(step * Adx / ell)))
                        - float(np.sum(np.log(gn / g))))
                if dphi <= ARMIJO * step * slope:
                    accepted = True
                    break
            step *= SHRINK
        if not accepted:
            # no representable progress left; fine only if already nearly centered
            return x, lam2 < 1e-6
        x = xn
        if early_exit and x[-1] > 0:
            return x, True
    return x, False


def _start_point(J, rcap):
    t0 = 1.0 / (2 * J + 1)
    x = np.empty(4 * J + 1)
    x[2 * J:4 * J] = t0
    x[:2 * J] = 0.5 * rcap * t0
    return x


def _slacks(prog1, x):
    """Normalized slacks (rate_j..., time, [budget]) at x, without the s offset."""
    J = prog1.J
    z = x[-1]
    g = prog1.rates(x)[0] + prog1.qs * z
    rate = g / prog1.qs
    ell = prog1.A @ x + prog1.b0
    rest = ell[4 * J:] + z  # time, [budget]
    return np.concatenate([rate, rest])


def barrier_solve(a, b, w, st, r, use_budget, rcap, q, gap_tol, probe):
    """Returns (status, x, slack, family, newton_steps)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    J = len(a)
    counter = [0]
    p1 = _Program(a, b, w, st, r, use_budget, rcap, q, phase1=True)
    x = _start_point(J, rcap)
    x[-1] = 0.0
    x[-1] = float(np.min(_slacks(p1, x))) - 1.0
    tb = 1.0
    feasible = None
    while True:
        x, ok = _center(p1, x, tb, counter, early_exit=not probe)
        gap = p1.m / tb
        if not ok:
            if gap < 1e-7:
                # stalled at machine precision; the slack is accurate enough
                feasible = x[-1] >= -SLACK_TOL
                if feasible and not probe:
                    # no interior to run phase 2 in: the phase-1 point is returned
                    tot = x[:J] + x[J:2 * J]
                    x[-1] = float(np.max(tot))
                    return BOUNDARY, x, 0.0, int(np.argmin(_slacks(p1, x))), counter[0]
                break
            return FAILED, x, x[-1], -1, counter[0]
        if not probe:
            if x[-1] > 0:
                feasible = True
                break
            if x[-1] + gap < 0 or gap < 1e-13:
                feasible = False
                break
        elif gap < 1e-10:
            feasible = x[-1] >= -SLACK_TOL
            break
        tb *= 10.0
    sl = _slacks(p1, x)
    slack = float(x[-1])
    family = int(np.argmin(sl))
    if probe or not feasible:
        return (OK if feasible else INFEASIBLE), x, slack, family, counter[0]

    p2 = _Program(a, b, w, st, r, use_budget, rcap, q, phase1=False)
    tot = x[:J] + x[J:2 * J]
    x[-1] = 1.5 * float(np.max(tot))
    tb = p2.m / x[-1]
    while True:
        x, ok = _center(p2, x, tb, counter)
        if not ok:
            if p2.m / tb <= 1e3 * gap_tol * x[-1]:
                break  # stalled, but within a loose gap: accept
            return FAILED, x, slack, family, counter[0]
        if p2.m / tb <= gap_tol * x[-1]:
            break
        tb *= 10.0
    return OK, x, slack, family, counter[0]
