# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: dynamics, episode rollouts, counterfactual replays, simplex.

Every function mirrors ``_kernels_py`` operation for operation so that both
backends return bitwise-identical results on the same inputs.
"""

from libc.math cimport sin, cos, tan, sqrt, fabs, isfinite
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

import numpy as np

KIND_LINEAR = 0
KIND_PENDULUM = 1
KIND_CARTPOLE = 2
KIND_SELFDRIVE = 3
KIND_QUADCOPTER = 4
KIND_PLATOON = 5

NORM_LINF = 0
NORM_L2 = 1

BACKEND = "compiled"

cdef enum:
    _LP_OPTIMAL = 0
    _LP_UNBOUNDED = 1
    _LP_PIVOT_LIMIT = 2

LP_OPTIMAL = _LP_OPTIMAL
LP_UNBOUNDED = _LP_UNBOUNDED
LP_PIVOT_LIMIT = _LP_PIVOT_LIMIT


cdef inline long long _now_ns() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return <long long>ts.tv_sec * 1000000000LL + ts.tv_nsec


cdef int _dynamics(int kind, const double[::1] p, const double* s, int m,
                   const double* c, int n, double* out) noexcept nogil:
    cdef int i, j, k, off
    cdef double acc, g, ln, damp, mass, mc, mp, total, sin_t, cos_t, temp, theta_acc, x_acc
    cdef double v, wb, a, b, kk, drag
    if kind == 0:
        off = m * m
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += p[i * m + j] * s[j]
            for k in range(n):
                acc += p[off + i * n + k] * c[k]
            out[i] = acc
    elif kind == 1:
        g = p[0]
        ln = p[1]
        damp = p[2]
        mass = p[3]
        out[0] = (g / ln) * sin(s[0]) - damp * s[1] + c[0] / (mass * ln * ln)
        out[1] = s[0]
    elif kind == 2:
        g = p[0]
        mc = p[1]
        mp = p[2]
        ln = p[3]
        total = mc + mp
        sin_t = sin(s[2])
        cos_t = cos(s[2])
        temp = (c[0] + mp * ln * s[3] * s[3] * sin_t) / total
        theta_acc = (g * sin_t - cos_t * temp) / (ln * (4.0 / 3.0 - mp * cos_t * cos_t / total))
        x_acc = temp - mp * ln * theta_acc * cos_t / total
        out[0] = s[1]
        out[1] = x_acc
        out[2] = s[3]
        out[3] = theta_acc
    elif kind == 3:
        v = p[0]
        wb = p[1]
        out[0] = (v / wb) * tan(c[0])
        out[1] = v * sin(s[0])
    elif kind == 4:
        a = p[0]
        b = p[1]
        kk = p[2]
        out[0] = a * sin(s[0]) + b * sin(s[1])
        out[1] = kk * c[0]
    elif kind == 5:
        drag = p[0]
        for i in range(4):
            v = s[2 * i]
            out[2 * i] = c[i] - drag * v * fabs(v)
        for i in range(3):
            out[2 * i + 1] = s[2 * i] - s[2 * i + 2]
    else:
        return -1
    return 0


cdef inline double _clamp(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef bint _euler_step(int kind, const double[::1] p, double dt, const double[::1] clo,
                      const double[::1] chi, const double* s, int m, const double* c, int n,
                      double* out, double* fbuf, double* cbuf) noexcept nogil:
    cdef int i, k
    cdef double v
    cdef bint ok = True
    for k in range(n):
        cbuf[k] = _clamp(c[k], clo[k], chi[k])
    _dynamics(kind, p, s, m, cbuf, n, fbuf)
    for i in range(m):
        v = s[i] + fbuf[i] * dt
        out[i] = v
        if not isfinite(v):
            ok = False
    return ok


cdef inline void _linear_command(const double[::1] K, const double* s, int m, double* out,
                                 int n) noexcept nogil:
    cdef int k, j
    cdef double acc
    for k in range(n):
        acc = 0.0
        for j in range(m):
            acc += K[k * m + j] * s[j]
        out[k] = -acc


cdef inline bint _shield_decide(const double[::1] K, double lam, int norm, const double* s,
                                int m, const double* c, int n, double* kcmd) noexcept nogil:
    cdef int k
    cdef double dist, diff, acc
    _linear_command(K, s, m, kcmd, n)
    if norm == 0:
        dist = 0.0
        for k in range(n):
            diff = fabs(c[k] - kcmd[k])
            if diff > dist:
                dist = diff
    else:
        acc = 0.0
        for k in range(n):
            diff = c[k] - kcmd[k]
            acc += diff * diff
        dist = sqrt(acc)
    return dist > lam


cdef inline bint _is_safe(const double[::1] D, const double[::1] d, const double* s,
                          int m) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(d.shape[0]):
        acc = 0.0
        for j in range(m):
            acc += D[i * m + j] * s[j]
        if acc > d[i]:
            return False
    return True


cdef inline void _surrogate_command(const double[::1] Kp, const double* s, int m, int t,
                                    const double[::1] noise, const unsigned char[::1] fault,
                                    const double[::1] flo, const double[::1] fhi,
                                    double* out, int n) noexcept nogil:
    cdef int k
    _linear_command(Kp, s, m, out, n)
    if fault[t]:
        for k in range(n):
            if out[k] > 0.0:
                out[k] = flo[k]
            else:
                out[k] = fhi[k]
    else:
        for k in range(n):
            out[k] = out[k] + noise[t * n + k]


def dynamics(int kind, const double[::1] p, const double[::1] s, const double[::1] c,
             double[::1] out):
    if _dynamics(kind, p, &s[0], s.shape[0], &c[0], c.shape[0], &out[0]) != 0:
        raise ValueError(f"unknown dynamics kind {kind}")


def shield_decide(const double[::1] K, double lam, int norm, const double[::1] s,
                  const double[::1] c, double[::1] kcmd):
    return _shield_decide(K, lam, norm, &s[0], s.shape[0], &c[0], c.shape[0], &kcmd[0])


def is_safe(const double[::1] D, const double[::1] d, const double[::1] s):
    return _is_safe(D, d, &s[0], s.shape[0])


def surrogate_command(const double[::1] Kp, const double[::1] s, int t,
                      const double[::1] noise, const unsigned char[::1] fault,
                      const double[::1] flo, const double[::1] fhi, double[::1] out):
    _surrogate_command(Kp, &s[0], s.shape[0], t, noise, fault, flo, fhi, &out[0], out.shape[0])


def rollout(int kind, const double[::1] p, double dt, const double[::1] clo,
            const double[::1] chi, const double[::1] D, const double[::1] d,
            const double[::1] Kp, const double[::1] noise, const unsigned char[::1] fault,
            const double[::1] Ks, double lam, int norm, bint use_shield,
            const double[::1] s0, int steps, double[::1] states, double[::1] raw,
            double[::1] applied, unsigned char[::1] intervened, bint timing):
    """One surrogate-policy episode with an optional shield (see ``_kernels_py.rollout``)."""
    cdef int m = s0.shape[0]
    cdef int n = clo.shape[0]
    cdef int t, i, k, first_bad
    cdef bint hit, finite = True
    cdef long long shield_ns = 0, t0
    cdef double[::1] work = np.empty(3 * m + 3 * n)
    cdef double* s = &work[0]
    cdef double* nxt = s + m
    cdef double* fbuf = nxt + m
    cdef double* c = fbuf + m
    cdef double* kcmd = c + n
    cdef double* cbuf = kcmd + n
    cdef double* use
    cdef double* tmp
    with nogil:
        for i in range(m):
            s[i] = s0[i]
            states[i] = s[i]
        first_bad = -1 if _is_safe(D, d, s, m) else 0
        for t in range(steps):
            _surrogate_command(Kp, s, m, t, noise, fault, clo, chi, c, n)
            for k in range(n):
                raw[t * n + k] = c[k]
            hit = False
            if use_shield:
                if timing:
                    t0 = _now_ns()
                    hit = _shield_decide(Ks, lam, norm, s, m, c, n, kcmd)
                    shield_ns += _now_ns() - t0
                else:
                    hit = _shield_decide(Ks, lam, norm, s, m, c, n, kcmd)
            intervened[t] = 1 if hit else 0
            use = kcmd if hit else c
            for k in range(n):
                applied[t * n + k] = use[k]
            if not _euler_step(kind, p, dt, clo, chi, s, m, use, n, nxt, fbuf, cbuf):
                finite = False
                break
            tmp = s
            s = nxt
            nxt = tmp
            for i in range(m):
                states[(t + 1) * m + i] = s[i]
            if first_bad < 0 and not _is_safe(D, d, s, m):
                first_bad = t + 1
    return first_bad, shield_ns, finite


cdef bint _counterfactual_unsafe(int kind, const double[::1] p, double dt,
                                 const double[::1] clo, const double[::1] chi,
                                 const double[::1] D, const double[::1] d,
                                 const double[::1] Kp, const double[::1] noise,
                                 const unsigned char[::1] fault, const double[::1] Ks,
                                 double lam, int norm, const double[::1] states,
                                 const double[::1] raw, int t, int horizon, int total_steps,
                                 int m, int n, double* work) noexcept nogil:
    cdef double* s = work
    cdef double* nxt = s + m
    cdef double* fbuf = nxt + m
    cdef double* c = fbuf + m
    cdef double* kcmd = c + n
    cdef double* cbuf = kcmd + n
    cdef double* tmp
    cdef int i, k, step, end
    for i in range(m):
        s[i] = states[t * m + i]
    for k in range(n):
        c[k] = raw[t * n + k]
    end = total_steps if total_steps < t + horizon else t + horizon
    step = t
    while True:
        if not _euler_step(kind, p, dt, clo, chi, s, m, c, n, nxt, fbuf, cbuf):
            return True
        tmp = s
        s = nxt
        nxt = tmp
        step += 1
        if not _is_safe(D, d, s, m):
            return True
        if step >= end:
            return False
        _surrogate_command(Kp, s, m, step, noise, fault, clo, chi, c, n)
        if _shield_decide(Ks, lam, norm, s, m, c, n, kcmd):
            for k in range(n):
                c[k] = kcmd[k]


def counterfactual_unsafe(int kind, const double[::1] p, double dt, const double[::1] clo,
                          const double[::1] chi, const double[::1] D, const double[::1] d,
                          const double[::1] Kp, const double[::1] noise,
                          const unsigned char[::1] fault, const double[::1] Ks, double lam,
                          int norm, const double[::1] states, const double[::1] raw, int t,
                          int horizon, int total_steps):
    cdef int n = clo.shape[0]
    cdef int m = states.shape[0] // (total_steps + 1)
    cdef double[::1] work = np.empty(3 * m + 3 * n)
    cdef bint res
    with nogil:
        res = _counterfactual_unsafe(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam,
                                     norm, states, raw, t, horizon, total_steps, m, n, &work[0])
    return res


def necessity(int kind, const double[::1] p, double dt, const double[::1] clo,
              const double[::1] chi, const double[::1] D, const double[::1] d,
              const double[::1] Kp, const double[::1] noise, const unsigned char[::1] fault,
              const double[::1] Ks, double lam, int norm, const double[::1] states,
              const double[::1] raw, const unsigned char[::1] intervened, int horizon,
              int total_steps, unsigned char[::1] out):
    """Counterfactual necessity flag for every intervened step; returns the count."""
    cdef int n = clo.shape[0]
    cdef int m = states.shape[0] // (total_steps + 1)
    cdef double[::1] work = np.empty(3 * m + 3 * n)
    cdef int t, count = 0
    with nogil:
        for t in range(total_steps):
            out[t] = 0
            if intervened[t]:
                if _counterfactual_unsafe(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks,
                                          lam, norm, states, raw, t, horizon, total_steps,
                                          m, n, &work[0]):
                    out[t] = 1
                    count += 1
    return count


def linear_rollout(const double[::1] Acl, const double[::1] s0, int steps,
                   const double[::1] D, const double[::1] d):
    """Iterate ``s <- Acl s``; True iff every iterate (including s0) is safe."""
    cdef int m = s0.shape[0]
    cdef double[::1] work = np.empty(2 * m)
    cdef double* s = &work[0]
    cdef double* nxt = s + m
    cdef double* tmp
    cdef double acc
    cdef int i, j, it
    cdef bint ok = True
    with nogil:
        for i in range(m):
            s[i] = s0[i]
        if not _is_safe(D, d, s, m):
            ok = False
        else:
            for it in range(steps):
                for i in range(m):
                    acc = 0.0
                    for j in range(m):
                        acc += Acl[i * m + j] * s[j]
                    nxt[i] = acc
                tmp = s
                s = nxt
                nxt = tmp
                if not _is_safe(D, d, s, m):
                    ok = False
                    break
    return ok


def time_shield(const double[::1] K, double lam, int norm, const double[::1] S,
                const double[::1] C, int m, int reps):
    """Mean nanoseconds per shield decision over ``reps`` passes of an (s, c) batch.

    ``S`` is (N x m) and ``C`` is (N x n), both flattened row-major.
    """
    cdef int n = K.shape[0] // m
    cdef int N = S.shape[0] // m
    cdef double[::1] kcmd = np.empty(n)
    cdef long long t0, t1
    cdef int r, i
    cdef long hits = 0
    with nogil:
        t0 = _now_ns()
        for r in range(reps):
            for i in range(N):
                if _shield_decide(K, lam, norm, &S[i * m], m, &C[i * n], n, &kcmd[0]):
                    hits += 1
        t1 = _now_ns()
    return (t1 - t0) / (<double>reps * N), hits


def simplex_minimize(double[:, ::1] T, long[::1] basis, int ncols, int max_pivots,
                     double opt_tol, double pivot_tol, double feas_tol):
    """Bland-rule primal simplex on a dense tableau (last row = reduced costs).

    Returns LP_OPTIMAL, LP_UNBOUNDED or LP_PIVOT_LIMIT; ``T`` and ``basis`` are
    updated in place.
    """
    cdef int k = T.shape[0] - 1
    cdef int w = T.shape[1]
    cdef int it, j, i, col, row, r
    cdef double best, ratio, piv, f
    cdef int status = _LP_PIVOT_LIMIT
    with nogil:
        for it in range(max_pivots):
            col = -1
            for j in range(ncols):
                if T[k, j] < -opt_tol:
                    col = j
                    break
            if col < 0:
                status = _LP_OPTIMAL
                break
            # minimum ratio; ties within feas_tol go to the lowest basic index
            best = 0.0
            row = -1
            for i in range(k):
                if T[i, col] > pivot_tol:
                    ratio = T[i, w - 1] / T[i, col]
                    if row < 0 or ratio < best:
                        best = ratio
                        row = i
            if row < 0:
                status = _LP_UNBOUNDED
                break
            r = -1
            for i in range(k):
                if T[i, col] > pivot_tol:
                    ratio = T[i, w - 1] / T[i, col]
                    if ratio <= best + feas_tol and (r < 0 or basis[i] < basis[r]):
                        r = i
            row = r
            piv = T[row, col]
            for j in range(w):
                T[row, j] = T[row, j] / piv
            for i in range(k + 1):
                if i != row:
                    f = T[i, col]
                    if f != 0.0:
                        for j in range(w):
                            T[i, j] = T[i, j] - f * T[row, j]
            basis[row] = col
    return status
