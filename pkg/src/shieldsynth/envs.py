"""Benchmark control environments with input/output-only dynamics access."""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels_py as kp
from .errors import ContractError, NumericalError
from .polytope import Polytope

UNSAFE_PENALTY = 100.0


def deg(x):
    return x * math.pi / 180.0


@dataclass(frozen=True)
class Environment:
    """Deterministic continuous-time dynamics integrated with forward Euler.

    ``dynamics`` is treated as a black box by synthesis; ``kind``/``params``
    additionally let the compiled kernels run the same model without a
    Python callback (``kind is None`` means callback only).
    """

    name: str
    state_dim: int
    command_dim: int
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dt: float
    init_lo: np.ndarray
    init_hi: np.ndarray
    safe_set: Polytope
    command_lo: np.ndarray
    command_hi: np.ndarray
    kind: Optional[int] = None
    params: Optional[np.ndarray] = None
    state_names: Sequence[str] = ()
    equilibrium: Optional[np.ndarray] = None
    reward_fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        m, n = self.state_dim, self.command_dim
        if m < 1 or n < 1:
            raise ContractError("state_dim and command_dim must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ContractError(f"dt must be positive, got {self.dt}")
        for attr, size in (("init_lo", m), ("init_hi", m), ("command_lo", n), ("command_hi", n)):
            arr = np.array(getattr(self, attr), dtype=float).ravel()
            if arr.shape[0] != size:
                raise ContractError(f"{attr} needs {size} entries, got {arr.shape[0]}")
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if np.any(self.init_lo > self.init_hi) or np.any(self.command_lo > self.command_hi):
            raise ContractError("interval bounds must satisfy lo <= hi")
        if self.safe_set.dim != m:
            raise ContractError("safe set dimension does not match state_dim")
        if self.params is not None:
            p = np.array(self.params, dtype=float).ravel()
            p.setflags(write=False)
            object.__setattr__(self, "params", p)
        eq = np.zeros(m) if self.equilibrium is None else np.array(self.equilibrium, dtype=float)
        eq.setflags(write=False)
        object.__setattr__(self, "equilibrium", eq)
        # every corner of the initial box must be strictly inside the safe set
        for corner in box_corners(self.init_lo, self.init_hi):
            if np.any(self.safe_set.slack(corner) <= 0):
                raise ContractError(f"{self.name}: initial box corner {corner} not strictly safe")

    @property
    def init_box(self):
        return Polytope.from_box(self.init_lo, self.init_hi)

    @property
    def command_diameter(self):
        return float(np.max(self.command_hi - self.command_lo))

    def clamp(self, c):
        return np.minimum(np.maximum(c, self.command_lo), self.command_hi)

    def reward(self, s, c):
        if self.reward_fn is not None:
            return float(self.reward_fn(s, c))
        return default_reward(self.safe_set, s, c)

    def with_overrides(self, **changes):
        return replace(self, **changes)


def default_reward(safe, s, c):
    """Negative quadratic cost with a flat penalty outside the safe set."""
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    r = -float(s @ s) - 0.01 * float(c @ c)
    if not safe.contains(s):
        r -= UNSAFE_PENALTY
    return r


def box_corners(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = lo.shape[0]
    out = np.empty((2 ** m, m))
    for idx in range(2 ** m):
        for j in range(m):
            out[idx, j] = hi[j] if (idx >> (m - 1 - j)) & 1 else lo[j]
    return out


def _as_state(env, s, what="state"):
    s = np.asarray(s, dtype=float).ravel()
    if s.shape[0] != env.state_dim:
        raise ContractError(f"{what} has {s.shape[0]} entries, expected {env.state_dim}")
    return s


def _as_command(env, c):
    c = np.asarray(c, dtype=float).ravel()
    if c.shape[0] != env.command_dim:
        raise ContractError(f"command has {c.shape[0]} entries, expected {env.command_dim}")
    return c


def evaluate_dynamics(env, s, c):
    """Call the black-box ``f(s, c)`` with shape and finiteness checks."""
    out = np.asarray(env.dynamics(s, c), dtype=float).ravel()
    if out.shape[0] != env.state_dim:
        raise ContractError(f"dynamics returned {out.shape[0]} entries, expected {env.state_dim}")
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{env.name}: non-finite dynamics at s={s}, c={c}")
    return out


def step(env, s, c):
    """One forward-Euler transition ``s + f(s, clamp(c)) * dt``."""
    s = _as_state(env, s)
    c = env.clamp(_as_command(env, c))
    return s + evaluate_dynamics(env, s, c) * env.dt


def is_safe(p, s):
    return p.contains(s)


def sample_initial(env, rng_seed):
    """Uniform draw from the initial box; ``rng_seed`` may be an int or a Generator."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.uniform(env.init_lo, env.init_hi)


# --- benchmark registry ---------------------------------------------------

def kernel_dynamics(kind, params):
    params = np.asarray(params, dtype=float)
    plist = params.tolist()

    def f(s, c):
        out = [0.0] * len(s)
        kp.dynamics(kind, plist, np.asarray(s, dtype=float).tolist(),
                    np.asarray(c, dtype=float).tolist(), out)
        return np.array(out)

    return f


def make_env(name, kind, params, dt, init_lo, init_hi, safe_hi, command_hi, state_names):
    safe_hi = np.asarray(safe_hi, dtype=float)
    command_hi = np.asarray(command_hi, dtype=float)
    return Environment(
        name=name,
        state_dim=len(safe_hi),
        command_dim=len(command_hi),
        dynamics=kernel_dynamics(kind, params),
        dt=dt,
        init_lo=init_lo,
        init_hi=init_hi,
        safe_set=Polytope.from_box(-safe_hi, safe_hi),
        command_lo=-command_hi,
        command_hi=command_hi,
        kind=kind,
        params=np.asarray(params, dtype=float),
        state_names=tuple(state_names),
    )


def linear_env(A, B, dt, init_hi, safe_hi, command_hi, name="linear"):
    """Exactly linear dynamics ``f = A s + B c`` (test fixture and toy benchmark)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    init_hi = np.asarray(init_hi, dtype=float)
    params = np.concatenate([A.ravel(), B.ravel()])
    return make_env(name, kp.KIND_LINEAR, params, dt, -init_hi, init_hi, safe_hi, command_hi,
                    [f"x{i + 1}" for i in range(A.shape[0])])


# gravity gain chosen so the upright linearization of the unit-length
# pendulum has a (1, 1) entry of 1.9027
PENDULUM_GRAVITY_GAIN = 1.9027


def _pendulum(name, length):
    b = np.array([deg(20.0), deg(20.0)])
    return make_env(name, kp.KIND_PENDULUM, [PENDULUM_GRAVITY_GAIN, length, 1.0, 1.0], 0.01,
                    -b, b, [deg(30.0), deg(30.0)], [15.0], ["eta", "omega"])


def _cartpole(name, half_width):
    b = np.full(4, half_width)
    return make_env(name, kp.KIND_CARTPOLE, [9.8, 1.0, 0.1, 0.5], 0.01,
                    -b, b, [0.3, 0.5, deg(30.0), 0.5], [15.0], ["x", "x_dot", "theta", "theta_dot"])


def _selfdrive(name, offset_bound):
    b = np.array([deg(15.0), 0.3])
    return make_env(name, kp.KIND_SELFDRIVE, [2.0, 1.0], 0.02,
                    -b, b, [deg(90.0), offset_bound], [0.6], ["eta", "d"])


def _quadcopter():
    b = np.array([0.3, 0.3])
    return make_env("quadcopter", kp.KIND_QUADCOPTER, [0.5, 1.0, 1.0], 0.01,
                    -b, b, [math.pi / 2, math.pi / 2], [5.0], ["eta1", "eta2"])


def _platoon():
    safe = np.array([2.0, 0.5, 0.35, 0.5, 1.0, 0.5, 1.0])
    b = 0.1 * safe
    return make_env("platoon4", kp.KIND_PLATOON, [0.2], 0.02,
                    -b, b, safe, [2.0, 2.0, 2.0, 2.0],
                    ["v1", "g12", "v2", "g23", "v3", "g34", "v4"])


_FACTORIES = {
    "pendulum-v1": lambda: _pendulum("pendulum-v1", 1.0),
    "pendulum-v2": lambda: _pendulum("pendulum-v2", 1.5),
    "cartpole-v1": lambda: _cartpole("cartpole-v1", 0.05),
    # wider start box: the LQR gain alone no longer certifies it
    "cartpole-v2": lambda: _cartpole("cartpole-v2", 0.06),
    "selfdrive-v1": lambda: _selfdrive("selfdrive-v1", 2.0),
    "selfdrive-v2": lambda: _selfdrive("selfdrive-v2", 1.5),
    "quadcopter": _quadcopter,
    "platoon4": _platoon,
}

BENCHMARKS = tuple(_FACTORIES)


def get_env(name):
    try:
        return _FACTORIES[name]()
    except KeyError:
        raise ContractError(f"unknown environment {name!r}; choose from {', '.join(BENCHMARKS)}") from None


def apply_overrides(env, overrides):
    """Apply a JSON override dict ``{dt, init_box, safe_halfspaces, command_bounds}``."""
    changes = {}
    if "dt" in overrides:
        changes["dt"] = float(overrides["dt"])
    if "init_box" in overrides:
        box = np.asarray(overrides["init_box"], dtype=float)
        changes["init_lo"], changes["init_hi"] = box[:, 0], box[:, 1]
    if "safe_halfspaces" in overrides:
        rows = overrides["safe_halfspaces"]
        changes["safe_set"] = Polytope([r["coeffs"] for r in rows], [r["bound"] for r in rows])
    if "command_bounds" in overrides:
        box = np.asarray(overrides["command_bounds"], dtype=float)
        changes["command_lo"], changes["command_hi"] = box[:, 0], box[:, 1]
    unknown = set(overrides) - {"dt", "init_box", "safe_halfspaces", "command_bounds"}
    if unknown:
        raise ContractError(f"unknown override fields: {sorted(unknown)}")
    return env.with_overrides(**changes)


def load_overrides(env, path):
    with open(path) as fh:
        return apply_overrides(env, json.load(fh))
