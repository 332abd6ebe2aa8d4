# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-barrier kernel; same algorithm and signature as ``_pykernel``."""
from libc.math cimport log, log1p, sqrt, isfinite, INFINITY
from libc.stdlib cimport malloc, free, calloc

import numpy as np

cdef double LN2 = 0.6931471805599453
cdef int OK = 0, INFEASIBLE = 1, FAILED = 2, BOUNDARY = 3
cdef double SLACK_TOL = 1e-9
cdef double NEWTON_EPS = 1e-10
cdef int MAX_NEWTON = 200
cdef int MAX_TOTAL = 3000
cdef double ARMIJO = 0.01
cdef double SHRINK = 0.5


cdef struct Prog:
    int J
    int n
    int mL          # linear rows
    int m           # all barrier terms
    double *A       # mL x n row-major
    double *b0
    double *ca      # phase-1 slope per user
    double *cb      # phase-2 slope per user
    double q
    double qs
    int phase1
    double *cobj
    # scratch
    double *ell
    double *g
    double *grad
    double *H
    double *L
    double *dx
    double *Adx
    double *xn
    double *gn
    double *d


cdef int prog_init(Prog *p, double[::1] a, double[::1] b, double[::1] w, double st, double r,
                   bint use_budget, double rcap, double q, bint phase1) noexcept nogil:
    cdef int J = a.shape[0]
    cdef int n = 4 * J + 1
    cdef int z = 4 * J
    cdef int mL = 4 * J + 1 + (1 if use_budget else 0) + (0 if phase1 else J)
    cdef int k, j, row
    p.J = J
    p.n = n
    p.mL = mL
    p.m = mL + J
    p.q = q
    p.qs = q if q > 0 else 1.0
    p.phase1 = phase1
    p.A = <double *> calloc(mL * n, sizeof(double))
    p.b0 = <double *> calloc(mL, sizeof(double))
    p.ca = <double *> malloc(J * sizeof(double))
    p.cb = <double *> malloc(J * sizeof(double))
    p.cobj = <double *> calloc(n, sizeof(double))
    p.ell = <double *> malloc(mL * sizeof(double))
    p.g = <double *> malloc(J * sizeof(double))
    p.grad = <double *> malloc(n * sizeof(double))
    p.H = <double *> malloc(n * n * sizeof(double))
    p.L = <double *> malloc(n * n * sizeof(double))
    p.dx = <double *> malloc(n * sizeof(double))
    p.Adx = <double *> malloc(mL * sizeof(double))
    p.xn = <double *> malloc(n * sizeof(double))
    p.gn = <double *> malloc(J * sizeof(double))
    p.d = <double *> malloc(n * sizeof(double))
    for j in range(J):
        p.ca[j] = a[j]
        p.cb[j] = b[j]
    row = 0
    for k in range(2 * J):
        p.A[row * n + k] = 1.0
        row += 1
    for k in range(2 * J):
        p.A[row * n + 2 * J + k] = rcap
        p.A[row * n + k] = -1.0
        row += 1
    for k in range(2 * J, 4 * J):
        p.A[row * n + k] = -1.0
    if phase1:
        p.A[row * n + z] = -1.0
    p.b0[row] = 1.0
    row += 1
    if use_budget:
        for j in range(J):
            p.A[row * n + J + j] = -w[j]
            p.A[row * n + 3 * J + j] = -st
        if phase1:
            p.A[row * n + z] = -1.0
        p.b0[row] = r
        row += 1
    if not phase1:
        for j in range(J):
            p.A[row * n + z] = 1.0
            p.A[row * n + j] = -1.0
            p.A[row * n + J + j] = -1.0
            row += 1
    p.cobj[z] = -1.0 if phase1 else 1.0
    return 0


cdef void prog_free(Prog *p) noexcept nogil:
    free(p.A); free(p.b0); free(p.ca); free(p.cb); free(p.cobj)
    free(p.ell); free(p.g); free(p.grad); free(p.H); free(p.L)
    free(p.dx); free(p.Adx); free(p.xn); free(p.gn); free(p.d)


cdef inline double _rate(double E, double t, double c) noexcept nogil:
    return t * log1p(c * E / t) / LN2


cdef void rates(Prog *p, double *x, double *g) noexcept nogil:
    cdef int J = p.J, j
    for j in range(J):
        g[j] = (_rate(x[j], x[2 * J + j], p.ca[j]) + _rate(x[J + j], x[3 * J + j], p.cb[j])) - p.q
        if p.phase1:
            g[j] -= p.qs * x[p.n - 1]


cdef void linear(Prog *p, double *x, double *out) noexcept nogil:
    cdef int i, k, n = p.n
    cdef double s
    for i in range(p.mL):
        s = p.b0[i]
        for k in range(n):
            s += p.A[i * n + k] * x[k]
        out[i] = s


cdef void derivatives(Prog *p, double *x, double tb) noexcept nogil:
    cdef int n = p.n, J = p.J
    cdef int i, k, l, j, ph, iE, it, cnt
    cdef double inv, aik, c, E, t, u, lp, fE, ft, kk, gj
    cdef int idx[5]
    cdef double dg[5]
    linear(p, x, p.ell)
    rates(p, x, p.g)
    for k in range(n):
        p.grad[k] = tb * p.cobj[k]
    for k in range(n * n):
        p.H[k] = 0.0
    for i in range(p.mL):
        inv = 1.0 / p.ell[i]
        for k in range(n):
            aik = p.A[i * n + k]
            if aik != 0.0:
                p.grad[k] -= aik * inv
                for l in range(n):
                    p.H[k * n + l] += aik * p.A[i * n + l] * inv * inv
    for j in range(J):
        gj = p.g[j]
        cnt = 0
        for ph in range(2):
            iE = ph * J + j
            it = 2 * J + ph * J + j
            c = p.ca[j] if ph == 0 else p.cb[j]
            E = x[iE]
            t = x[it]
            u = c * E / t
            lp = log1p(u)
            fE = c / ((1.0 + u) * LN2)
            ft = (lp - u / (1.0 + u)) / LN2
            idx[ph] = iE
            dg[ph] = fE
            idx[2 + ph] = it
            dg[2 + ph] = ft
            kk = 1.0 / (t * (1.0 + u) * (1.0 + u) * LN2)
            # minus the rate Hessian over g_j (rate is concave)
            p.H[iE * n + iE] += kk * c * c / gj
            p.H[iE * n + it] -= kk * c * u / gj
            p.H[it * n + iE] -= kk * c * u / gj
            p.H[it * n + it] += kk * u * u / gj
        cnt = 4
        if p.phase1:
            idx[4] = n - 1
            dg[4] = -p.qs
            cnt = 5
        for k in range(cnt):
            p.grad[idx[k]] -= dg[k] / gj
            for l in range(cnt):
                p.H[idx[k] * n + idx[l]] += dg[k] * dg[l] / (gj * gj)


cdef int cholesky_solve(Prog *p) noexcept nogil:
    """dx = -H^-1 grad via Jacobi-scaled Cholesky; returns 0 on success."""
    cdef int n = p.n, i, k, l, attempt
    cdef double s, shift = 0.0
    for i in range(n):
        s = p.H[i * n + i]
        p.d[i] = sqrt(s) if s > 0 else 1.0
    for attempt in range(8):
        for i in range(n):
            for k in range(n):
                p.L[i * n + k] = p.H[i * n + k] / (p.d[i] * p.d[k])
            p.L[i * n + i] += shift
        for k in range(n):
            s = p.L[k * n + k]
            for l in range(k):
                s -= p.L[k * n + l] * p.L[k * n + l]
            if not (s > 0):
                break
            p.L[k * n + k] = sqrt(s)
            for i in range(k + 1, n):
                s = p.L[i * n + k]
                for l in range(k):
                    s -= p.L[i * n + l] * p.L[k * n + l]
                p.L[i * n + k] = s / p.L[k * n + k]
        else:
            # forward / back substitution on the scaled system
            for i in range(n):
                s = -p.grad[i] / p.d[i]
                for l in range(i):
                    s -= p.L[i * n + l] * p.dx[l]
                p.dx[i] = s / p.L[i * n + i]
            for i in range(n - 1, -1, -1):
                s = p.dx[i]
                for l in range(i + 1, n):
                    s -= p.L[l * n + i] * p.dx[l]
                p.dx[i] = s / p.L[i * n + i]
            for i in range(n):
                p.dx[i] /= p.d[i]
            return 0
        shift = 1e-14 if shift == 0.0 else shift * 100.0
    return 1


cdef int center(Prog *p, double *x, double tb, int *counter, bint early_exit) noexcept nogil:
    """Damped Newton; returns 1 when centered, 0 otherwise."""
    cdef int n = p.n, J = p.J, it, i, k, allpos
    cdef bint accepted
    cdef double slope, lam2, step, r, dphi, cdx
    for it in range(MAX_NEWTON):
        if counter[0] >= MAX_TOTAL:
            return 0
        counter[0] += 1
        derivatives(p, x, tb)
        if cholesky_solve(p) != 0:
            return 0
        slope = 0.0
        for i in range(n):
            slope += p.grad[i] * p.dx[i]
        lam2 = -slope
        if not isfinite(lam2):
            return 0
        if lam2 / 2.0 <= NEWTON_EPS:
            return 1
        for i in range(p.mL):
            p.Adx[i] = 0.0
            for k in range(n):
                p.Adx[i] += p.A[i * n + k] * p.dx[k]
        step = 1.0
        for i in range(p.mL):
            if p.Adx[i] < 0:
                r = 0.99 * (-p.ell[i] / p.Adx[i])
                if r < step:
                    step = r
        cdx = 0.0
        for i in range(n):
            cdx += p.cobj[i] * p.dx[i]
        accepted = False
        while step > 1e-18:
            for i in range(n):
                p.xn[i] = x[i] + step * p.dx[i]
            rates(p, p.xn, p.gn)
            allpos = 1
            for i in range(J):
                if not (p.gn[i] > 0):
                    allpos = 0
            for i in range(p.mL):
                if not (p.ell[i] + step * p.Adx[i] > 0):
                    allpos = 0
            if allpos:
                dphi = tb * step * cdx
                for i in range(p.mL):
                    dphi -= log1p(step * p.Adx[i] / p.ell[i])
                for i in range(J):
                    dphi -= log(p.gn[i] / p.g[i])
                if dphi <= ARMIJO * step * slope:
                    accepted = True
                    break
            step *= SHRINK
        if not accepted:
            return 1 if lam2 < 1e-6 else 0
        for i in range(n):
            x[i] = p.xn[i]
        if early_exit and x[n - 1] > 0:
            return 1
    return 0


cdef void slacks(Prog *p, double *x, double *out) noexcept nogil:
    """Normalized slacks (rate_j..., time, [budget]) without the s offset."""
    cdef int J = p.J, i
    cdef double z = x[p.n - 1]
    rates(p, x, p.gn)
    for i in range(J):
        out[i] = (p.gn[i] + p.qs * z) / p.qs
    linear(p, x, p.ell)
    for i in range(4 * J, p.mL):
        out[J + i - 4 * J] = p.ell[i] + z


def barrier_solve(a, b, w, double st, double r, bint use_budget, double rcap, double q,
                  double gap_tol, bint probe):
    """Returns (status, x, slack, family, newton_steps)."""
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef int J = av.shape[0]
    cdef int n = 4 * J + 1
    cdef int i, family = 0, nsl, ok
    cdef int counter = 0
    cdef double tb, gap, slack, mn, t0
    cdef int feasible = -1
    x_arr = np.empty(n)
    sl_arr = np.empty(J + 2)
    cdef double[::1] x = x_arr
    cdef double[::1] sl = sl_arr
    cdef Prog p1, p2
    prog_init(&p1, av, bv, wv, st, r, use_budget, rcap, q, True)
    nsl = J + p1.mL - 4 * J
    try:
        t0 = 1.0 / (2 * J + 1)
        for i in range(2 * J):
            x[2 * J + i] = t0
            x[i] = 0.5 * rcap * t0
        x[n - 1] = 0.0
        slacks(&p1, &x[0], &sl[0])
        mn = INFINITY
        for i in range(nsl):
            if sl[i] < mn:
                mn = sl[i]
        x[n - 1] = mn - 1.0
        tb = 1.0
        while True:
            ok = center(&p1, &x[0], tb, &counter, not probe)
            gap = p1.m / tb
            if not ok:
                if gap < 1e-7:
                    feasible = 1 if x[n - 1] >= -SLACK_TOL else 0
                    if feasible and not probe:
                        mn = 0.0
                        for i in range(J):
                            if x[i] + x[J + i] > mn:
                                mn = x[i] + x[J + i]
                        x[n - 1] = mn
                        slacks(&p1, &x[0], &sl[0])
                        mn = INFINITY
                        for i in range(nsl):
                            if sl[i] < mn:
                                mn = sl[i]
                                family = i
                        return BOUNDARY, x_arr, 0.0, family, counter
                    break
                return FAILED, x_arr, x[n - 1], -1, counter
            if not probe:
                if x[n - 1] > 0:
                    feasible = 1
                    break
                if x[n - 1] + gap < 0 or gap < 1e-13:
                    feasible = 0
                    break
            elif gap < 1e-10:
                feasible = 1 if x[n - 1] >= -SLACK_TOL else 0
                break
            tb *= 10.0
        slacks(&p1, &x[0], &sl[0])
        slack = x[n - 1]
        mn = INFINITY
        for i in range(nsl):
            if sl[i] < mn:
                mn = sl[i]
                family = i
    finally:
        prog_free(&p1)
    if probe or not feasible:
        return (OK if feasible else INFEASIBLE), x_arr, slack, family, counter

    prog_init(&p2, av, bv, wv, st, r, use_budget, rcap, q, False)
    try:
        mn = 0.0
        for i in range(J):
            if x[i] + x[J + i] > mn:
                mn = x[i] + x[J + i]
        x[n - 1] = 1.5 * mn
        tb = p2.m / x[n - 1]
        while True:
            ok = center(&p2, &x[0], tb, &counter, False)
            if not ok:
                if p2.m / tb <= 1e3 * gap_tol * x[n - 1]:
                    break
                return FAILED, x_arr, slack, family, counter
            if p2.m / tb <= gap_tol * x[n - 1]:
                break
            tb *= 10.0
    finally:
        prog_free(&p2)
    return OK, x_arr, slack, family, counter
