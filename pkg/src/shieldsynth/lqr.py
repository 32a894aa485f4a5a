"""Discrete LQR on Euler-discretized dynamics, solved by Riccati value iteration."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ConvergenceError, NumericalError


@dataclass(frozen=True)
class LqrConfig:
    Q: np.ndarray
    R: np.ndarray
    max_iters: int = 100_000
    tol: float = 1e-10

    def __post_init__(self):
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        R = np.atleast_2d(np.array(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ContractError("Q and R must be square")
        if not (np.allclose(Q, Q.T) and np.allclose(R, R.T)):
            raise ContractError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ContractError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ContractError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls, m, n, **kw):
        return cls(np.eye(m), np.eye(n), **kw)

    def scaled(self, k):
        return LqrConfig(self.Q * k, self.R * k, self.max_iters, self.tol)


@dataclass(frozen=True)
class LinearPolicy:
    """State feedback ``command = -K s``; ``K`` is (command_dim x state_dim)."""

    K: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        K = np.atleast_2d(np.array(self.K, dtype=float))
        if not np.all(np.isfinite(K)):
            raise NumericalError("gain matrix must be finite")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def command(self, s):
        return -(self.K @ np.asarray(s, dtype=float))

    def bind(self, rng, steps):
        return lambda t, s: self.command(s)

    @property
    def command_dim(self):
        return self.K.shape[0]

    @property
    def state_dim(self):
        return self.K.shape[1]


def solve_linear(M, b):
    """Gaussian elimination with partial pivoting; ``b`` may be a matrix."""
    M = np.array(M, dtype=float)
    x = np.array(b, dtype=float)
    vec = x.ndim == 1
    if vec:
        x = x[:, None]
    n = M.shape[0]
    scale = max(np.abs(M).max(), 1.0)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(M[col:, col])))
        if abs(M[piv, col]) <= 1e-14 * scale:
            raise NumericalError("singular matrix in Gaussian elimination")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            x[[col, piv]] = x[[piv, col]]
        f = M[col + 1:, col] / M[col, col]
        M[col + 1:] -= np.outer(f, M[col])
        x[col + 1:] -= np.outer(f, x[col])
    for col in range(n - 1, -1, -1):
        x[col] = (x[col] - M[col, col + 1:] @ x[col + 1:]) / M[col, col]
    return x[:, 0] if vec else x


def discretize(model, dt):
    m = model.state_dim
    return np.eye(m) + dt * model.A, dt * model.B


def riccati_step(P, Ad, Bd, Q, R):
    """One backward Riccati update; returns (P_next, K) where K uses ``P``."""
    BtP = Bd.T @ P
    K = solve_linear(R + BtP @ Bd, BtP @ Ad)
    P_next = Q + Ad.T @ P @ Ad - (Ad.T @ P @ Bd) @ K
    return 0.5 * (P_next + P_next.T), K


def solve_riccati(Ad, Bd, cfg):
    """Value iteration from ``P = Q`` to the DARE fixed point; returns (P, iterations)."""
    Q, R = cfg.Q, cfg.R
    if Q.shape[0] != Ad.shape[0] or R.shape[0] != Bd.shape[1]:
        raise ContractError("Q/R dimensions do not match the model")
    P = Q.copy()
    for it in range(1, cfg.max_iters + 1):
        P_next, _ = riccati_step(P, Ad, Bd, Q, R)
        if not np.all(np.isfinite(P_next)):
            raise ConvergenceError(f"Riccati iterates diverged after {it} iterations")
        if np.abs(P_next - P).max() <= cfg.tol:
            return P_next, it
        P = P_next
    raise ConvergenceError(f"Riccati value iteration did not converge in {cfg.max_iters} iterations")


def solve_lqr(model, dt, cfg):
    """Optimal gain for ``s+ = (I + dt A) s + dt B c`` under the quadratic cost ``cfg``."""
    Ad, Bd = discretize(model, dt)
    P, iters = solve_riccati(Ad, Bd, cfg)
    K = solve_linear(cfg.R + Bd.T @ P @ Bd, Bd.T @ P @ Ad)
    return LinearPolicy(K, {"riccati_iterations": iters, "P": P})


def closed_loop(model, policy, dt):
    """``A_cl = I + dt (A - B K)``."""
    return np.eye(model.state_dim) + dt * (model.A - model.B @ policy.K)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M))))
