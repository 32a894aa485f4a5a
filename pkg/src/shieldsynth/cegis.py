"""Counterexample-guided synthesis of a verified linear backup policy.

Starting from the LQR gain, the loop alternates verification (MOAS of the
closed loop, then counterexamples from the initial box) and refinement of
the gain on those counterexamples, until the initial box is certified.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import moas as moas_mod
from .envs import UNSAFE_PENALTY, box_corners
from .errors import ContractError, NumericalError, SynthesisFailure
from .lqr import LinearPolicy, closed_loop, discretize, solve_lqr
from .polytope import Polytope

log = logging.getLogger(__name__)

MODES = ("uniform", "ars")


@dataclass(frozen=True)
class RefineConfig:
    """Refinement step size, rollout horizon and perturbation size.

    ``mode="uniform"`` shifts every gain entry by the same scalar and updates
    once per rollout step.  ``mode="ars"`` draws one Gaussian direction per
    counterexample, scores ``K +- perturb_scale * delta`` by their
    ``horizon``-step returns, and takes a single normalized step.
    """

    lr: float = 1e-3
    horizon: int = 200
    perturb_scale: float = 1e-2
    max_outer_iters: int = 50
    mode: str = "uniform"
    command_weight: float = 1.0
    samples: int = 256

    def __post_init__(self):
        if self.lr < 0 or self.perturb_scale <= 0 or self.command_weight < 0:
            raise ContractError("lr, command_weight must be >= 0 and perturb_scale > 0")
        if self.horizon < 1 or self.max_outer_iters < 1 or self.samples < 0:
            raise ContractError("horizon and max_outer_iters must be positive")
        if self.mode not in MODES:
            raise ContractError(f"unknown refine mode {self.mode!r}; choose from {MODES}")

    def to_json(self):
        return dict(self.__dict__)


def _gain(K):
    return np.atleast_2d(np.array(getattr(K, "K", K), dtype=float))


def _refine_uniform(K, points, model, reward, cfg, rng, dt):
    w = cfg.command_weight
    for ce in points:
        eps = rng.uniform(0.5 * cfg.perturb_scale, cfg.perturb_scale)
        s = np.array(ce, dtype=float)
        for _ in range(cfg.horizon):
            s = s + (model.A @ s + model.B @ (-(K @ s))) * dt
            if not np.all(np.isfinite(s)):
                raise NumericalError("refinement rollout diverged")
            c = -(K @ s)
            shift = eps * s.sum()
            c_plus = c - shift
            c_minus = c + shift
            d_plus = -w * float(np.sum(c_plus - c)) + reward(s, c_plus)
            d_minus = -w * float(np.sum(c_minus - c)) + reward(s, c_minus)
            K = K + cfg.lr * (d_plus - d_minus) / (2.0 * eps)
            if not np.all(np.isfinite(K)):
                raise NumericalError("refined gain is not finite")
    return K


def linear_return(K, s0, Ad, Bd, reward, horizon):
    """Sum of rewards of ``c = -K s`` on ``s+ = Ad s + Bd c`` from ``s0``."""
    s = np.array(s0, dtype=float)
    total = 0.0
    for _ in range(horizon):
        c = -(K @ s)
        total += reward(s, c)
        s = Ad @ s + Bd @ c
    if not np.isfinite(total):
        raise NumericalError("refinement rollout diverged")
    return total


def _refine_ars(K, points, model, reward, cfg, rng, dt):
    Ad, Bd = discretize(model, dt)
    nu = cfg.perturb_scale
    step = np.zeros_like(K)
    returns = []
    for ce in points:
        delta = rng.standard_normal(K.shape)
        r_plus = linear_return(K + nu * delta, ce, Ad, Bd, reward, cfg.horizon)
        r_minus = linear_return(K - nu * delta, ce, Ad, Bd, reward, cfg.horizon)
        step += (r_plus - r_minus) * delta
        returns += [r_plus, r_minus]
    sigma = float(np.std(returns)) or 1.0
    return K + cfg.lr / (len(points) * sigma) * step


def refine_policy(K, Z, model, reward, cfg, rng_seed=0, *, dt):
    """One refinement pass of the gain over the counterexamples ``Z``.

    Rollouts use the linear model ``model`` with Euler step ``dt``; ``reward``
    is called as ``reward(s, c)``.
    """
    points = np.atleast_2d(np.asarray(getattr(Z, "points", Z), dtype=float))
    if points.size == 0:
        raise ContractError("refinement needs at least one counterexample")
    K = _gain(K)
    if points.shape[1] != K.shape[1]:
        raise ContractError("counterexample dimension does not match the gain")
    rng = np.random.default_rng(rng_seed)
    refine = _refine_uniform if cfg.mode == "uniform" else _refine_ars
    out = refine(K.copy(), points, model, reward, cfg, rng, dt)
    if not np.all(np.isfinite(out)):
        raise NumericalError("refined gain is not finite")
    return LinearPolicy(out)


def refinement_reward(env):
    """Environment reward, also penalizing commands outside the actuator bounds.

    The certified set constrains both the state and the backup command, so
    the refinement signal penalizes leaving either.
    """
    lo, hi = env.command_lo, env.command_hi

    def reward(s, c):
        r = env.reward(s, c)
        if np.any(c < lo) or np.any(c > hi):
            r -= UNSAFE_PENALTY
        return r

    return reward


def admissible_set(env, K):
    """Safe polytope plus the rows keeping ``-K s`` inside the command bounds."""
    K = _gain(K)
    D = np.vstack([env.safe_set.D, -K, K])
    d = np.concatenate([env.safe_set.d, env.command_hi, -env.command_lo])
    return Polytope(D, d, check=False)


def verify(env, model, K, max_horizon=500, samples=256, rng_seed=0):
    """MOAS of the closed loop, counterexamples, and the exact box certificate.

    Returns ``(moas, points, certified, slack)``.  When the MOAS does not
    converge every corner of the initial box is returned as a counterexample.
    """
    a_cl = closed_loop(model, LinearPolicy(K), env.dt)
    result = moas_mod.compute_moas(a_cl, admissible_set(env, K), max_horizon)
    if not result.converged:
        return result, box_corners(env.init_lo, env.init_hi), False, -np.inf
    points = moas_mod.find_counterexamples(result, env.init_lo, env.init_hi, samples, rng_seed).points
    certified, slack = moas_mod.box_containment(result, env.init_lo, env.init_hi)
    if not certified and len(points) == 0:
        # sampling missed a sliver the LP found; use the violating corners
        corners = box_corners(env.init_lo, env.init_hi)
        viol = (corners @ result.set.D.T - result.set.d).max(axis=1) > -moas_mod.COUNTEREXAMPLE_TOL
        points = corners[viol] if viol.any() else corners
    return result, points, certified, slack


def synthesize_linear_policy(env, model, cfg, lqr_cfg, rng_seed=0, max_horizon=500,
                             log_path=None, initial=None):
    """LQR initialization followed by verify/refine rounds.

    Returns ``(policy, moas)`` where ``moas`` certifies the initial box.
    ``policy.meta`` records the iteration count and per-iteration history.
    Raises :class:`SynthesisFailure` after ``cfg.max_outer_iters`` refinements.
    """
    K = _gain(initial) if initial is not None else solve_lqr(model, env.dt, lqr_cfg).K
    seeds = np.random.SeedSequence(rng_seed).spawn(cfg.max_outer_iters + 1)
    history = []
    reward = refinement_reward(env) if cfg.mode == "ars" else env.reward
    sink = open(log_path, "w") if log_path else None
    try:
        for it in range(cfg.max_outer_iters + 1):
            sample_seed = int(seeds[it].generate_state(1)[0])
            result, points, certified, slack = verify(env, model, K, max_horizon, cfg.samples,
                                                      sample_seed)
            rec = {"iter": it, "num_counterexamples": int(len(points)), "K": K.tolist(),
                   "moas_horizon": result.horizon, "converged": result.converged,
                   "slack": float(slack)}
            history.append(rec)
            if sink:
                sink.write(json.dumps(rec) + "\n")
            log.info("cegis iter %d: %d counterexamples, horizon %d, slack %.3g",
                     it, len(points), result.horizon, slack)
            if certified:
                return LinearPolicy(K, {"iterations": it, "history": history}), result
            if it == cfg.max_outer_iters:
                break
            K = refine_policy(K, points, model, reward, cfg,
                              int(seeds[it].generate_state(2)[1]), dt=env.dt).K
    finally:
        if sink:
            sink.close()
    raise SynthesisFailure(
        f"{env.name}: initial box not certified after {cfg.max_outer_iters} refinements "
        f"(last slack {history[-1]['slack']:.3g}, {history[-1]['num_counterexamples']} counterexamples)"
    )
