"""Linear time-invariant models inferred from black-box dynamics."""

from dataclasses import dataclass

import numpy as np

from .envs import evaluate_dynamics, sample_initial, step
from .errors import ContractError, NumericalError

# square root of double-precision machine epsilon
DEFAULT_EPS = 1.49e-8


@dataclass(frozen=True)
class LinearModel:
    """``f'(s, c) = A s + B c`` around ``(s0, c0)``."""

    A: np.ndarray
    B: np.ndarray
    s0: np.ndarray
    c0: np.ndarray
    eps: float

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.atleast_2d(np.array(self.B, dtype=float))
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ContractError(f"incompatible model shapes A{A.shape}, B{B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise NumericalError("model matrices must be finite")
        for name, val in (("A", A), ("B", B),
                          ("s0", np.array(self.s0, dtype=float).ravel()),
                          ("c0", np.array(self.c0, dtype=float).ravel())):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def command_dim(self):
        return self.B.shape[1]

    def derivative(self, s, c):
        return self.A @ s + self.B @ c

    def to_json(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "s0": self.s0.tolist(),
                "c0": self.c0.tolist(), "eps": self.eps}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["A"], obj["B"], obj["s0"], obj["c0"], float(obj["eps"]))


def infer_dynamics(env, s0=None, c0=None, eps=DEFAULT_EPS):
    """Central-difference Jacobians of ``env.dynamics`` at ``(s0, c0)``.

    Only input/output access to the dynamics is used.  A negative ``eps``
    gives the same matrices (central differences are antisymmetric).
    """
    if not (np.isfinite(eps) and eps != 0.0):
        raise ContractError(f"eps must be finite and nonzero, got {eps}")
    m, n = env.state_dim, env.command_dim
    s0 = env.equilibrium if s0 is None else np.asarray(s0, dtype=float).ravel()
    c0 = np.zeros(n) if c0 is None else np.asarray(c0, dtype=float).ravel()
    if s0.shape[0] != m or c0.shape[0] != n:
        raise ContractError("operating point dimensions do not match the environment")
    if not (np.all(np.isfinite(s0)) and np.all(np.isfinite(c0))):
        raise ContractError("operating point must be finite")
    h = abs(eps)
    A = np.empty((m, m))
    B = np.empty((m, n))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        A[:, j] = (evaluate_dynamics(env, s0 + e, c0) - evaluate_dynamics(env, s0 - e, c0)) / (2 * h)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        B[:, k] = (evaluate_dynamics(env, s0, c0 + e) - evaluate_dynamics(env, s0, c0 - e)) / (2 * h)
    return LinearModel(A, B, s0, c0, h)


def predict_next(model, s, c, dt):
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    return s + (model.A @ s + model.B @ c) * dt


def fidelity_mse(env, model, policy, steps, rng_seed, s_init=None):
    """Mean squared state error between true and linear-model closed-loop rollouts.

    Both rollouts start from the same state (``s_init`` or a seeded draw from
    the initial box) and are driven by ``policy`` on their own states.
    Returns ``mean_i ||y_i - yhat_i||^2`` over ``steps`` transitions.
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    rng = np.random.default_rng(rng_seed)
    s = sample_initial(env, rng) if s_init is None else np.asarray(s_init, dtype=float)
    # same stream for both rollouts so only the dynamics differ
    policy_seed = int(rng.integers(2**63))
    act_true = policy.bind(np.random.default_rng(policy_seed), steps)
    act_model = policy.bind(np.random.default_rng(policy_seed), steps)
    y = s.copy()
    yhat = s.copy()
    total = 0.0
    for t in range(steps):
        y = step(env, y, act_true(t, y))
        yhat = predict_next(model, yhat, env.clamp(act_model(t, yhat)), env.dt)
        if not np.all(np.isfinite(yhat)):
            raise NumericalError("linear model rollout diverged to non-finite values")
        diff = y - yhat
        total += float(diff @ diff)
    return total / steps
