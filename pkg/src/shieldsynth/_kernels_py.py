"""Pure-Python implementations of the hot loops.

Mirrors ``_kernels.pyx`` operation for operation (same evaluation order, same
libm calls) so that both backends agree to the last bit on the same inputs.
Selected automatically when the compiled extension is unavailable.
"""

import math
import time

import numpy as np

KIND_LINEAR = 0
KIND_PENDULUM = 1
KIND_CARTPOLE = 2
KIND_SELFDRIVE = 3
KIND_QUADCOPTER = 4
KIND_PLATOON = 5

NORM_LINF = 0
NORM_L2 = 1

BACKEND = "python"

LP_OPTIMAL = 0
LP_UNBOUNDED = 1
LP_PIVOT_LIMIT = 2


def dynamics(kind, p, s, c, out):
    """Write ``f(s, c)`` into ``out``.  ``p`` is the flat parameter vector."""
    if kind == KIND_LINEAR:
        m = len(s)
        n = len(c)
        off = m * m
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += p[i * m + j] * s[j]
            for k in range(n):
                acc += p[off + i * n + k] * c[k]
            out[i] = acc
    elif kind == KIND_PENDULUM:
        # p = (gravity gain, length, damping, mass); state (angle, rate)
        g, ln, damp, mass = p[0], p[1], p[2], p[3]
        out[0] = (g / ln) * math.sin(s[0]) - damp * s[1] + c[0] / (mass * ln * ln)
        out[1] = s[0]
    elif kind == KIND_CARTPOLE:
        # p = (gravity, cart mass, pole mass, pole half-length)
        g, mc, mp, ln = p[0], p[1], p[2], p[3]
        total = mc + mp
        sin_t = math.sin(s[2])
        cos_t = math.cos(s[2])
        temp = (c[0] + mp * ln * s[3] * s[3] * sin_t) / total
        theta_acc = (g * sin_t - cos_t * temp) / (ln * (4.0 / 3.0 - mp * cos_t * cos_t / total))
        x_acc = temp - mp * ln * theta_acc * cos_t / total
        out[0] = s[1]
        out[1] = x_acc
        out[2] = s[3]
        out[3] = theta_acc
    elif kind == KIND_SELFDRIVE:
        # p = (speed, wheelbase); state (heading, lateral offset), command steering angle
        v, wb = p[0], p[1]
        out[0] = (v / wb) * math.tan(c[0])
        out[1] = v * math.sin(s[0])
    elif kind == KIND_QUADCOPTER:
        # p = (pitch instability, yaw coupling, actuator gain)
        a, b, k = p[0], p[1], p[2]
        out[0] = a * math.sin(s[0]) + b * math.sin(s[1])
        out[1] = k * c[0]
    elif kind == KIND_PLATOON:
        # p = (drag,); state (v1, g12, v2, g23, v3, g34, v4)
        drag = p[0]
        for i in range(4):
            v = s[2 * i]
            out[2 * i] = c[i] - drag * v * abs(v)
        for i in range(3):
            out[2 * i + 1] = s[2 * i] - s[2 * i + 2]
    else:
        raise ValueError(f"unknown dynamics kind {kind}")


def _clamp(x, lo, hi):
    return lo if x < lo else (hi if x > hi else x)


def euler_step(kind, p, dt, clo, chi, s, c, out, fbuf, cbuf):
    """``out = s + f(s, clamp(c)) * dt``; returns False on non-finite output."""
    n = len(c)
    for k in range(n):
        cbuf[k] = _clamp(c[k], clo[k], chi[k])
    dynamics(kind, p, s, cbuf, fbuf)
    ok = True
    for i in range(len(s)):
        v = s[i] + fbuf[i] * dt
        out[i] = v
        if not math.isfinite(v):
            ok = False
    return ok


def linear_command(K, s, out):
    """``out = -K s`` with ``K`` stored row-major (n x m)."""
    m = len(s)
    for k in range(len(out)):
        acc = 0.0
        for j in range(m):
            acc += K[k * m + j] * s[j]
        out[k] = -acc


def shield_decide(K, lam, norm, s, c, kcmd):
    """Fill ``kcmd = -K s``; True when ``||c - kcmd|| > lam`` (shield intervenes)."""
    linear_command(K, s, kcmd)
    if norm == NORM_LINF:
        dist = 0.0
        for k in range(len(c)):
            diff = abs(c[k] - kcmd[k])
            if diff > dist:
                dist = diff
    else:
        acc = 0.0
        for k in range(len(c)):
            diff = c[k] - kcmd[k]
            acc += diff * diff
        dist = math.sqrt(acc)
    return dist > lam


def is_safe(D, d, s):
    rows = len(d)
    m = len(s)
    for i in range(rows):
        acc = 0.0
        for j in range(m):
            acc += D[i * m + j] * s[j]
        if acc > d[i]:
            return False
    return True


def surrogate_command(Kp, s, t, noise, fault, flo, fhi, out):
    """Perturbed linear policy: ``-Kp s + noise[t]``, or a saturated command.

    When ``fault[t]`` is set every entry jumps to the bound opposite to the
    nominal command's sign, i.e. the actuator pushes away from recovery.
    """
    n = len(out)
    linear_command(Kp, s, out)
    if fault[t]:
        for k in range(n):
            out[k] = flo[k] if out[k] > 0.0 else fhi[k]
    else:
        base = t * n
        for k in range(n):
            out[k] = out[k] + noise[base + k]


def _lists(*arrays):
    return [a.tolist() if isinstance(a, np.ndarray) else list(a) for a in arrays]


def rollout(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam, norm, use_shield,
            s0, steps, states, raw, applied, intervened, timing):
    """Simulate one episode of a surrogate policy with an optional shield.

    Arrays are flat: ``states`` is ((steps+1) x m), ``raw``/``applied`` are
    (steps x n).  Returns ``(first_violation_step or -1, shield_ns_total,
    finite_flag)``; on a non-finite state the remaining rows are left as-is.
    """
    p, clo, chi, D, d, Kp, noise, fault, Ks = _lists(p, clo, chi, D, d, Kp, noise, fault, Ks)
    m = len(s0)
    n = len(clo)
    s = [float(x) for x in s0]
    nxt = [0.0] * m
    fbuf = [0.0] * m
    cbuf = [0.0] * n
    c = [0.0] * n
    kcmd = [0.0] * n
    st = [0.0] * ((steps + 1) * m)
    rw = [0.0] * (steps * n)
    ap = [0.0] * (steps * n)
    iv = [0] * steps
    for i in range(m):
        st[i] = s[i]
    first_bad = -1 if is_safe(D, d, s) else 0
    shield_ns = 0
    finite = True
    done = 0
    for t in range(steps):
        surrogate_command(Kp, s, t, noise, fault, clo, chi, c)
        base = t * n
        for k in range(n):
            rw[base + k] = c[k]
        hit = False
        if use_shield:
            if timing:
                t0 = time.perf_counter_ns()
                hit = shield_decide(Ks, lam, norm, s, c, kcmd)
                shield_ns += time.perf_counter_ns() - t0
            else:
                hit = shield_decide(Ks, lam, norm, s, c, kcmd)
        iv[t] = 1 if hit else 0
        use = kcmd if hit else c
        for k in range(n):
            ap[base + k] = use[k]
        done = t + 1
        if not euler_step(kind, p, dt, clo, chi, s, use, nxt, fbuf, cbuf):
            finite = False
            break
        s, nxt = nxt, s
        for i in range(m):
            st[(t + 1) * m + i] = s[i]
        if first_bad < 0 and not is_safe(D, d, s):
            first_bad = t + 1
    rows = done + 1 if finite else done
    states[:rows * m] = st[:rows * m]
    raw[:done * n] = rw[:done * n]
    applied[:done * n] = ap[:done * n]
    intervened[:done] = iv[:done]
    return first_bad, shield_ns, finite


def _counterfactual(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam, norm,
                    states, raw, t, horizon, total_steps, m):
    n = len(clo)
    s = states[t * m:(t + 1) * m]
    nxt = [0.0] * m
    fbuf = [0.0] * m
    cbuf = [0.0] * n
    c = raw[t * n:(t + 1) * n]
    kcmd = [0.0] * n
    end = min(total_steps, t + horizon)
    step = t
    while True:
        if not euler_step(kind, p, dt, clo, chi, s, c, nxt, fbuf, cbuf):
            return True
        s, nxt = nxt, s
        step += 1
        if not is_safe(D, d, s):
            return True
        if step >= end:
            return False
        surrogate_command(Kp, s, step, noise, fault, clo, chi, c)
        if shield_decide(Ks, lam, norm, s, c, kcmd):
            for k in range(n):
                c[k] = kcmd[k]


def counterfactual_unsafe(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam, norm,
                          states, raw, t, horizon, total_steps):
    """Replay from ``states[t]`` applying ``raw[t]`` then shielded commands.

    Returns True iff some state within ``horizon`` steps (counting the
    counterfactual step itself) leaves the safe set.
    """
    m = len(states) // (total_steps + 1)
    args = _lists(p, clo, chi, D, d, Kp, noise, fault, Ks, states, raw)
    p, clo, chi, D, d, Kp, noise, fault, Ks, states, raw = args
    return _counterfactual(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam, norm,
                           states, raw, t, horizon, total_steps, m)


def necessity(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam, norm,
              states, raw, intervened, horizon, total_steps, out):
    """Counterfactual necessity flag for every intervened step; returns the count."""
    m = len(states) // (total_steps + 1)
    args = _lists(p, clo, chi, D, d, Kp, noise, fault, Ks, states, raw, intervened)
    p, clo, chi, D, d, Kp, noise, fault, Ks, states, raw, intervened = args
    count = 0
    flags = [0] * total_steps
    for t in range(total_steps):
        if intervened[t]:
            if _counterfactual(kind, p, dt, clo, chi, D, d, Kp, noise, fault, Ks, lam, norm,
                               states, raw, t, horizon, total_steps, m):
                flags[t] = 1
                count += 1
    out[:total_steps] = flags
    return count


def linear_rollout(Acl, s0, steps, D, d):
    """Iterate ``s <- Acl s``; True iff every iterate (including s0) is safe."""
    Acl, s0, D, d = _lists(Acl, s0, D, d)
    m = len(s0)
    s = list(s0)
    nxt = [0.0] * m
    if not is_safe(D, d, s):
        return False
    for _ in range(steps):
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += Acl[i * m + j] * s[j]
            nxt[i] = acc
        s, nxt = nxt, s
        if not is_safe(D, d, s):
            return False
    return True


def time_shield(K, lam, norm, S, C, m, reps):
    """Mean nanoseconds per shield decision over ``reps`` passes of an (s, c) batch."""
    K = K.tolist()
    n = len(K) // m
    N = len(S) // m
    rows_s = [S[i * m:(i + 1) * m].tolist() for i in range(N)]
    rows_c = [C[i * n:(i + 1) * n].tolist() for i in range(N)]
    kcmd = [0.0] * n
    hits = 0
    t0 = time.perf_counter_ns()
    for _ in range(reps):
        for s, c in zip(rows_s, rows_c):
            if shield_decide(K, lam, norm, s, c, kcmd):
                hits += 1
    t1 = time.perf_counter_ns()
    return (t1 - t0) / (reps * N), hits


def simplex_minimize(T, basis, ncols, max_pivots, opt_tol, pivot_tol, feas_tol):
    """Bland-rule primal simplex on a dense tableau (last row = reduced costs).

    Returns LP_OPTIMAL, LP_UNBOUNDED or LP_PIVOT_LIMIT; ``T`` and ``basis`` are
    updated in place.
    """
    k = T.shape[0] - 1
    for _ in range(max_pivots):
        cand = np.flatnonzero(T[-1, :ncols] < -opt_tol)
        if cand.size == 0:
            return LP_OPTIMAL
        col = int(cand[0])
        a = T[:k, col]
        pos = np.flatnonzero(a > pivot_tol)
        if pos.size == 0:
            return LP_UNBOUNDED
        ratios = T[pos, -1] / a[pos]
        best = ratios.min()
        ties = pos[ratios <= best + feas_tol]
        row = int(ties[np.argmin(basis[ties])])
        T[row] /= T[row, col]
        colv = T[:, col].copy()
        colv[row] = 0.0
        T -= np.outer(colv, T[row])
        basis[row] = col
    return LP_PIVOT_LIMIT
