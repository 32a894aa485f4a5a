"""Episode simulation and shield metrics.

Episodes of a surrogate policy on a benchmark environment run entirely in
the kernel backend; any other policy/environment pair falls back to a Python
loop with the same semantics.  Each episode draws its initial state and its
policy randomness from its own seed, so shielded and unshielded runs, or runs
with different thresholds, see identical initial states and noise.
"""

import csv
import io
import json
import time
import tracemalloc
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Optional

import numpy as np

from .envs import sample_initial, step
from .errors import ContractError, NumericalError
from .kernels import backend as _k
from .policy import PerturbedLinearPolicy
from .shield import shield_command

DEFAULT_HORIZON = 500
STEADY_WINDOW = 10
STEADY_FRACTION = 0.05


@dataclass
class EpisodeTrace:
    """One episode.  Row ``t`` of ``states`` is the state the command at ``t`` saw."""

    states: np.ndarray
    final_state: np.ndarray
    commands_raw: np.ndarray
    commands_applied: np.ndarray
    intervened: np.ndarray
    violated: bool
    first_violation: int = -1
    shield_ns: int = 0
    necessary: Optional[np.ndarray] = None
    steps_to_steady: Optional[int] = None

    @property
    def steps(self):
        return len(self.intervened)

    @property
    def trajectory(self):
        """All visited states, including the final one."""
        return np.vstack([self.states, self.final_state[None, :]])

    @property
    def interventions(self):
        return int(self.intervened.sum())

    @property
    def necessary_interventions(self):
        return 0 if self.necessary is None else int(self.necessary.sum())


def default_steady_eps(env):
    D, d = env.safe_set.D, env.safe_set.d
    return STEADY_FRACTION * float(np.min(d / np.linalg.norm(D, axis=1)))


def steps_to_steady(trace, eps_norm, k=STEADY_WINDOW):
    """First ``t`` with ``||s_i||_inf <= eps_norm`` for every ``i`` in ``[t, t + k)``."""
    S = trace.trajectory if isinstance(trace, EpisodeTrace) else np.asarray(trace, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if k < 1:
        raise ContractError("window must be >= 1")
    inside = np.max(np.abs(S), axis=1) <= eps_norm
    run = 0
    for t, ok in enumerate(inside):
        run = run + 1 if ok else 0
        if run == k:
            return t - k + 1
    return None


def _fast_path(env, policy):
    return env.kind is not None and env.params is not None and isinstance(policy, PerturbedLinearPolicy)


def _shield_args(env, shield):
    if shield is None:
        return np.zeros(env.state_dim * env.command_dim), 0.0, 0, False
    if shield.state_dim != env.state_dim or shield.command_dim != env.command_dim:
        raise ContractError("shield dimensions do not match the environment")
    return shield.K_flat, shield.lam, shield.norm_code, True


def _env_args(env):
    return (env.kind, env.params, env.dt, env.command_lo, env.command_hi,
            np.ascontiguousarray(env.safe_set.D.ravel()), env.safe_set.d)


def _kernel_episode(env, policy, shield, steps, s0, sched, timing):
    m, n = env.state_dim, env.command_dim
    states = np.zeros((steps + 1) * m)
    raw = np.zeros(steps * n)
    applied = np.zeros(steps * n)
    iv = np.zeros(steps, dtype=np.uint8)
    Ks, lam, norm, use = _shield_args(env, shield)
    first_bad, ns, finite = _k.rollout(*_env_args(env), policy.K_flat, sched.noise, sched.fault,
                                       Ks, lam, norm, use, s0, steps, states, raw, applied, iv,
                                       timing)
    if not finite:
        raise NumericalError(f"{env.name}: simulation produced a non-finite state")
    S = states.reshape(steps + 1, m)
    return EpisodeTrace(S[:-1].copy(), S[-1].copy(), raw.reshape(steps, n), applied.reshape(steps, n),
                        iv.astype(bool), first_bad >= 0, first_bad, ns)


def _python_episode(env, act, shield, steps, s0, timing):
    m, n = env.state_dim, env.command_dim
    S = np.zeros((steps, m))
    raw = np.zeros((steps, n))
    applied = np.zeros((steps, n))
    iv = np.zeros(steps, dtype=bool)
    safe = env.safe_set
    s = np.array(s0, dtype=float)
    first_bad = -1 if safe.contains(s) else 0
    ns = 0
    for t in range(steps):
        S[t] = s
        c = np.asarray(act(t, s), dtype=float).ravel()
        raw[t] = c
        use = c
        if shield is not None:
            t0 = time.perf_counter_ns() if timing else 0
            use, hit = shield_command(shield, s, c)
            if timing:
                ns += time.perf_counter_ns() - t0
            iv[t] = hit
        applied[t] = use
        s = step(env, s, use)
        if first_bad < 0 and not safe.contains(s):
            first_bad = t + 1
    return EpisodeTrace(S, s, raw, applied, iv, first_bad >= 0, first_bad, ns)


def _episode_setup(env, policy, steps, rng_seed):
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    s0 = sample_initial(env, rng)
    act = policy.bind(rng, steps)
    return s0, act


def run_episode(env, policy, shield=None, steps=1000, rng_seed=0, timing=False,
                force_python=False):
    """Simulate ``steps`` transitions from a seeded initial state."""
    if steps < 1:
        raise ContractError("steps must be >= 1")
    s0, act = _episode_setup(env, policy, steps, rng_seed)
    if _fast_path(env, policy) and not force_python:
        trace = _kernel_episode(env, policy, shield, steps, s0, act.schedule, timing)
    else:
        trace = _python_episode(env, act, shield, steps, s0, timing)
    trace.act = act
    return trace


def _counterfactual_python(env, act, shield, trace, t, horizon):
    end = min(trace.steps, t + horizon)
    s = step(env, trace.states[t], trace.commands_raw[t])
    k = t + 1
    while True:
        if not env.safe_set.contains(s):
            return True
        if k >= end:
            return False
        c, _ = shield_command(shield, s, act(k, s))
        s = step(env, s, c)
        k += 1


def necessary_intervention(env, policy, trace, t, horizon=DEFAULT_HORIZON, shield=None):
    """Would letting the raw command through at step ``t`` have led to a violation?

    The counterfactual applies ``commands_raw[t]`` at step ``t`` and then runs
    with the shield active for up to ``horizon`` steps in total (capped by
    the episode length), replaying the same policy randomness.
    """
    if not trace.intervened[t]:
        raise ContractError(f"no intervention at step {t}")
    if shield is None:
        raise ContractError("the counterfactual needs the shield that produced the trace")
    act = getattr(trace, "act", None)
    if act is None:
        raise ContractError("trace was not produced by run_episode")
    if _fast_path(env, policy):
        Ks, lam, norm, _ = _shield_args(env, shield)
        return bool(_k.counterfactual_unsafe(
            *_env_args(env), policy.K_flat, act.schedule.noise, act.schedule.fault, Ks, lam, norm,
            np.ascontiguousarray(trace.trajectory.ravel()),
            np.ascontiguousarray(trace.commands_raw.ravel()), t, horizon, trace.steps))
    return _counterfactual_python(env, act, shield, trace, t, horizon)


def _all_necessary(env, policy, shield, trace, horizon, force_python=False):
    T = trace.steps
    out = np.zeros(T, dtype=np.uint8)
    if _fast_path(env, policy) and not force_python:
        Ks, lam, norm, _ = _shield_args(env, shield)
        _k.necessity(*_env_args(env), policy.K_flat, trace.act.schedule.noise,
                     trace.act.schedule.fault, Ks, lam, norm,
                     np.ascontiguousarray(trace.trajectory.ravel()),
                     np.ascontiguousarray(trace.commands_raw.ravel()),
                     trace.intervened.astype(np.uint8), horizon, T, out)
    else:
        for t in np.flatnonzero(trace.intervened):
            out[t] = _counterfactual_python(env, trace.act, shield, trace, int(t), horizon)
    return out.astype(bool)


@dataclass
class EvalReport:
    episodes: int
    steps: int
    violations: int
    interventions: int
    necessary_interventions: int
    shield_time_ns_per_step: float
    mean_steps_to_steady: float
    rows: list = field(default_factory=list, repr=False)

    @property
    def necessary_ratio(self):
        return self.necessary_interventions / self.interventions if self.interventions else 0.0

    def counts(self):
        return self.violations, self.necessary_interventions, self.interventions

    def summary(self):
        """Counts and metrics; NaN metrics (not measured) become ``None``."""
        out = {
            "episodes": self.episodes,
            "steps": self.steps,
            "violations": self.violations,
            "interventions": self.interventions,
            "necessary_interventions": self.necessary_interventions,
            "necessary_ratio": self.necessary_ratio,
            "shield_time_ns_per_step": self.shield_time_ns_per_step,
            "mean_steps_to_steady": self.mean_steps_to_steady,
        }
        return {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in out.items()}

    def to_json(self):
        return json.dumps(self.summary(), indent=2)

    def to_csv(self):
        buf = io.StringIO()
        cols = ["episode", "violated", "first_violation", "interventions",
                "necessary_interventions", "steps_to_steady", "shield_ns"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if row[k] is None else row[k]) for k in cols})
        return buf.getvalue()

    def write(self, stem):
        with open(f"{stem}.csv", "w") as fh:
            fh.write(self.to_csv())
        with open(f"{stem}.json", "w") as fh:
            fh.write(self.to_json())


def episode_seeds(seed, episodes):
    return np.random.SeedSequence(seed).spawn(episodes)


def evaluate(env, policy, shield=None, episodes=100, steps=1000, seed=0,
             horizon=DEFAULT_HORIZON, threads=1, necessity=True, steady_eps=None,
             steady_k=STEADY_WINDOW, force_python=False):
    """Aggregate seeded episodes into violation/intervention counts.

    A violating episode counts once.  Shield latency is the mean of
    monotonic-clock deltas around the switching decision; it is only
    measured when ``threads == 1`` (NaN otherwise).
    """
    if episodes < 1:
        raise ContractError("episodes must be >= 1")
    eps = default_steady_eps(env) if steady_eps is None else steady_eps
    timing = threads == 1 and shield is not None
    seeds = episode_seeds(seed, episodes)

    def one(i):
        tr = run_episode(env, policy, shield, steps, np.random.default_rng(seeds[i]), timing,
                         force_python)
        if shield is not None and necessity and tr.interventions:
            tr.necessary = _all_necessary(env, policy, shield, tr, horizon, force_python)
        tr.steps_to_steady = steps_to_steady(tr, eps, steady_k)
        return {"episode": i, "violated": int(tr.violated), "first_violation": tr.first_violation,
                "interventions": tr.interventions,
                "necessary_interventions": tr.necessary_interventions,
                "steps_to_steady": tr.steps_to_steady, "shield_ns": tr.shield_ns}

    if threads > 1:
        with ThreadPool(threads) as pool:
            rows = pool.map(one, range(episodes))
    else:
        rows = [one(i) for i in range(episodes)]
    steady = [r["steps_to_steady"] for r in rows if r["steps_to_steady"] is not None]
    per_step = (sum(r["shield_ns"] for r in rows) / (episodes * steps)) if timing else float("nan")
    return EvalReport(
        episodes=episodes,
        steps=steps,
        violations=sum(r["violated"] for r in rows),
        interventions=sum(r["interventions"] for r in rows),
        necessary_interventions=sum(r["necessary_interventions"] for r in rows),
        shield_time_ns_per_step=per_step,
        mean_steps_to_steady=float(np.mean(steady)) if steady else float("nan"),
        rows=rows,
    )


def shield_latency_ns(shield, states, commands, reps=200):
    """Mean nanoseconds per switching decision over a batch, in the kernel backend."""
    S = np.ascontiguousarray(states, dtype=float).ravel()
    C = np.ascontiguousarray(commands, dtype=float).ravel()
    mean_ns, _ = _k.time_shield(shield.K_flat, shield.lam, shield.norm_code, S, C,
                                shield.state_dim, reps)
    return mean_ns


def shield_memory(shield, states, commands):
    """Serialized size and peak extra allocation of ``shield_command`` over a batch."""
    tracemalloc.start()
    try:
        base, _ = tracemalloc.get_traced_memory()
        tracemalloc.reset_peak()
        for s, c in zip(states, commands):
            shield_command(shield, s, c)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return {"serialized_bytes": len(shield.dumps().encode()), "peak_alloc_bytes": peak - base}
