"""Independent reference implementations used as test oracles.

None of these share code with the package: they are deliberately naive.
"""

import itertools
import math

import numpy as np


def lp_vertex_max(c, D, d, tol=1e-9):
    """Max of ``c.x`` over ``D x <= d`` by enumerating every basic solution.

    Returns ``None`` when no vertex is feasible.  Only valid for bounded,
    full-dimensional polytopes (the optimum is then attained at a vertex).
    """
    m, n = D.shape
    best = None
    for rows in itertools.combinations(range(m), n):
        A = D[list(rows)]
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, d[list(rows)])
        if np.all(D @ x <= d + tol * max(1.0, np.abs(d).max())):
            v = float(c @ x)
            if best is None or v > best:
                best = v
    return best


def mlp_loops(layers, s):
    """Triple-loop matrix multiply with scalar activations."""
    x = [float(v) for v in s]
    for w, b, act in layers:
        out = []
        for i in range(len(w)):
            acc = 0.0
            for j in range(len(x)):
                acc += w[i][j] * x[j]
            acc += b[i]
            if act == "tanh":
                acc = math.tanh(acc)
            elif act == "relu":
                acc = acc if acc > 0.0 else 0.0
            out.append(acc)
        x = out
    return np.array(x)


def reference_pendulum_shield(c, eta, omega):
    # direct transcription of the published three-line pendulum shield
    K = -1.91256926 * eta + 0.98893131 * omega
    if abs(c - K) > 0.21988415:
        return K
    return c


def scalar_dare_fixed_point(a, b, q, r, iters=10_000):
    """Scalar Riccati value iteration written out by hand."""
    p = q
    for _ in range(iters):
        p = q + a * a * p - (a * p * b) ** 2 / (r + b * b * p)
    return p


def simulate_linear(A_cl, s, steps):
    out = [np.asarray(s, dtype=float)]
    for _ in range(steps):
        out.append(A_cl @ out[-1])
    return np.array(out)


# frozen values, computed independently (30-digit arithmetic)
EI_THREE_SIGMA = 3.00038215431704772  # 3 Phi(3) + phi(3)
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
STEADY_GEOMETRIC_T = 22  # ceil(ln 0.1 / ln 0.9)
PENDULUM_A = np.array([[1.9027, -1.0], [1.0, 0.0]])
PENDULUM_B = np.array([[1.0], [0.0]])


def grid_forward_safe(a_cl, D, d, points, steps):
    """Vectorized brute force: which rows of ``points`` stay in ``D s <= d`` for ``steps`` steps."""
    S = np.array(points, dtype=float)
    ok = np.ones(len(S), dtype=bool)
    for _ in range(steps + 1):
        ok &= np.all(S @ D.T <= d, axis=1)
        S = S @ a_cl.T
    return ok
