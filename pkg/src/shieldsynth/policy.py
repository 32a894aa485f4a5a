"""Black-box control policies: JSON-loaded MLPs and perturbed linear surrogates.

A policy is called as ``policy(s) -> command``.  For simulation it is bound
to a per-episode random stream with ``policy.bind(rng, steps)``, which
returns ``act(t, s)``; that function is pure, so counterfactual replays can
call it again for any step.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError
from .kernels import _kernels_py

ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "id": lambda x: x,
}


@dataclass(frozen=True)
class Layer:
    w: np.ndarray
    b: np.ndarray
    act: str = "id"

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.w, dtype=float))
        b = np.array(self.b, dtype=float).ravel()
        if w.shape[0] != b.shape[0]:
            raise ContractError(f"layer weight has {w.shape[0]} rows but bias has {b.shape[0]}")
        if self.act not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.act!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)


def mlp_forward(layers, s):
    """Compose ``act(w x + b)`` over ``layers``."""
    x = np.asarray(s, dtype=float).ravel()
    for i, layer in enumerate(layers):
        if layer.w.shape[1] != x.shape[0]:
            raise ContractError(f"layer {i} expects {layer.w.shape[1]} inputs, got {x.shape[0]}")
        x = ACTIVATIONS[layer.act](layer.w @ x + layer.b)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite activation after layer {i}")
    return x


@dataclass(frozen=True)
class MlpPolicy:
    layers: tuple
    state_dim: int
    command_dim: int
    name: str = "mlp"

    def __post_init__(self):
        layers = tuple(l if isinstance(l, Layer) else Layer(**l) for l in self.layers)
        if not layers:
            raise ContractError("an MLP needs at least one layer")
        if layers[0].w.shape[1] != self.state_dim:
            raise ContractError("first layer input size does not match state_dim")
        for a, b in zip(layers, layers[1:]):
            if b.w.shape[1] != a.w.shape[0]:
                raise ContractError("consecutive layer dimensions do not chain")
        if layers[-1].w.shape[0] != self.command_dim:
            raise ContractError("final layer output size does not match command_dim")
        object.__setattr__(self, "layers", layers)

    def __call__(self, s):
        return mlp_forward(self.layers, s)

    def bind(self, rng, steps):
        return lambda t, s: mlp_forward(self.layers, s)

    def to_json(self):
        return {
            "layers": [{"w": l.w.tolist(), "b": l.b.tolist(), "act": l.act} for l in self.layers],
            "state_dim": self.state_dim,
            "command_dim": self.command_dim,
        }

    @classmethod
    def from_json(cls, obj, name="mlp"):
        try:
            layers = [Layer(l["w"], l["b"], l.get("act", "id")) for l in obj["layers"]]
            return cls(tuple(layers), int(obj["state_dim"]), int(obj["command_dim"]), name)
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed MLP description: {exc}") from None


def load_mlp(path):
    with open(path) as fh:
        return MlpPolicy.from_json(json.load(fh), name=str(path))


@dataclass(frozen=True)
class FaultSchedule:
    """Pre-drawn per-episode randomness of a surrogate policy."""

    noise: np.ndarray  # (steps * n,) additive command noise
    fault: np.ndarray  # (steps,) uint8, 1 where the actuator saturates


@dataclass(frozen=True)
class PerturbedLinearPolicy:
    """``-K s`` plus Gaussian noise, with occasional saturating faults.

    A fault starts at each step with probability ``fault_prob`` and lasts a
    geometric number of steps with mean ``fault_len`` (``fault_len = 1``:
    independent single-step faults).  While faulty, every command entry sits
    at the bound opposite to the nominal command's sign, i.e. the actuator
    pushes away from recovery.
    """

    K: np.ndarray
    noise_scale: float
    fault_prob: float
    command_lo: np.ndarray
    command_hi: np.ndarray
    fault_len: float = 1.0
    rng_seed: int = 0
    name: str = "surrogate"
    _rng: np.random.Generator = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        K = np.atleast_2d(np.array(getattr(self.K, "K", self.K), dtype=float))
        if not np.all(np.isfinite(K)):
            raise NumericalError("gain matrix must be finite")
        if not (self.noise_scale >= 0):
            raise ContractError("noise_scale must be >= 0")
        if not (0.0 <= self.fault_prob <= 1.0):
            raise ContractError("fault_prob must lie in [0, 1]")
        if not (self.fault_len >= 1.0):
            raise ContractError("fault_len must be >= 1")
        lo = np.array(self.command_lo, dtype=float).ravel()
        hi = np.array(self.command_hi, dtype=float).ravel()
        if lo.shape[0] != K.shape[0] or hi.shape[0] != K.shape[0]:
            raise ContractError("command bounds do not match the gain's output dimension")
        for name, val in (("K", K), ("command_lo", lo), ("command_hi", hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_rng", np.random.default_rng(self.rng_seed))

    @property
    def state_dim(self):
        return self.K.shape[1]

    @property
    def command_dim(self):
        return self.K.shape[0]

    @property
    def K_flat(self):
        return np.ascontiguousarray(self.K.ravel())

    def draw(self, rng, steps):
        """Noise and fault arrays for one episode of ``steps`` steps."""
        n = self.command_dim
        noise = rng.standard_normal(steps * n) * self.noise_scale
        starts = rng.random(steps) < self.fault_prob
        lengths = rng.geometric(1.0 / self.fault_len, size=steps)
        fault = np.zeros(steps, dtype=np.uint8)
        for t in np.flatnonzero(starts):
            fault[t:t + lengths[t]] = 1
        return FaultSchedule(noise, fault)

    def command_at(self, sched, t, s):
        out = np.empty(self.command_dim)
        _kernels_py.surrogate_command(self.K_flat.tolist(), np.asarray(s, dtype=float).tolist(), t,
                                      sched.noise, sched.fault, self.command_lo.tolist(),
                                      self.command_hi.tolist(), out)
        return out

    def bind(self, rng, steps):
        sched = self.draw(rng, steps)

        def act(t, s):
            return self.command_at(sched, t, s)

        act.schedule = sched
        return act

    def __call__(self, s):
        # stand-alone use: one fresh draw per call from the policy's own stream
        return self.command_at(self.draw(self._rng, 1), 0, s)


def perturbed_linear_policy(K, noise_scale, fault_prob, rng_seed=0, *, command_lo, command_hi,
                            fault_len=1.0):
    return PerturbedLinearPolicy(K, noise_scale, fault_prob, command_lo, command_hi,
                                 fault_len=fault_len, rng_seed=rng_seed)


def linear_as_policy(K):
    """Noise-free surrogate equal to ``-K s`` everywhere (bounds irrelevant)."""
    K = np.atleast_2d(np.asarray(getattr(K, "K", K), dtype=float))
    big = np.full(K.shape[0], np.inf)
    return PerturbedLinearPolicy(K, 0.0, 0.0, -big, big)
