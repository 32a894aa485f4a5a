"""End-to-end synthesis and evaluation driven by a :class:`RunConfig`."""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import cegis, linearize, lqr, switching
from .errors import ContractError
from .moas import box_containment
from .policy import load_mlp, perturbed_linear_policy
from .shield import Shield
from .sim import evaluate

log = logging.getLogger(__name__)

ABLATIONS = ("none", "no-synthesis", "no-optimization")

# independent random streams derived from the single run seed
STREAM_SYNTH, STREAM_BO, STREAM_EVAL, STREAM_POLICY, STREAM_ABLATE = range(5)


def derive_seed(seed, stream):
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1)[0])


@dataclass
class Setup:
    env: object
    model: object
    lqr_gain: np.ndarray
    policy: object


def build(cfg, linearize_seed=None):
    """Environment, linear model, LQR gain and the black-box policy for ``cfg``."""
    env = cfg.environment()
    s0 = None
    if cfg.linearize.get("at", "equilibrium") == "random":
        seed = derive_seed(cfg.seed, STREAM_SYNTH) if linearize_seed is None else linearize_seed
        s0 = np.random.default_rng(seed).uniform(env.init_lo, env.init_hi)
    model = linearize.infer_dynamics(env, s0=s0, eps=cfg.linearize_eps())
    gain = lqr.solve_lqr(model, env.dt, cfg.lqr_config(env)).K
    if cfg.policy.get("type", "surrogate") == "mlp":
        pol = load_mlp(cfg.policy["path"])
        if pol.state_dim != env.state_dim or pol.command_dim != env.command_dim:
            raise ContractError("MLP dimensions do not match the environment")
    else:
        p = cfg.surrogate_params(env)
        pol = perturbed_linear_policy(gain, p["noise_scale"], p["fault_prob"],
                                      derive_seed(cfg.seed, STREAM_POLICY),
                                      command_lo=env.command_lo, command_hi=env.command_hi,
                                      fault_len=p["fault_len"])
    return Setup(env, model, gain, pol)


def bo_config(cfg, env):
    params = cfg.bo_params(env)
    params["seed"] = derive_seed(params["seed"], STREAM_BO)
    try:
        return switching.BoConfig(**params)
    except TypeError as exc:
        raise ContractError(f"malformed bo section: {exc}") from None


def ablated_threshold(cfg, env):
    return switching.random_threshold(env.command_diameter, derive_seed(cfg.seed, STREAM_ABLATE))


@dataclass
class SynthResult:
    shield: Shield
    moas: object
    iterations: int
    synthesis_seconds: float
    bo_trace: list
    history: list = field(default_factory=list)
    certified: bool = True
    slack: float = 0.0


def synthesize(cfg, ablate="none", setup=None, log_path=None):
    """Linearize, synthesize the backup gain, then choose the threshold."""
    if ablate not in ABLATIONS:
        raise ContractError(f"unknown ablation {ablate!r}; choose from {ABLATIONS}")
    setup = setup or build(cfg)
    env, model = setup.env, setup.model
    t0 = time.perf_counter()
    if ablate == "no-synthesis":
        moas, _, certified, slack = cegis.verify(env, model, setup.lqr_gain, cfg.max_horizon)
        gain, iterations, history = setup.lqr_gain, 0, []
    else:
        pol, moas = cegis.synthesize_linear_policy(
            env, model, cfg.refine_config(), cfg.lqr_config(env),
            rng_seed=derive_seed(cfg.seed, STREAM_SYNTH), max_horizon=cfg.max_horizon,
            log_path=log_path)
        gain, iterations, history = pol.K, pol.meta["iterations"], pol.meta["history"]
        certified, slack = box_containment(moas, env.init_lo, env.init_hi)
    if ablate == "no-optimization":
        lam, trace = ablated_threshold(cfg, env), []
    else:
        lam, trace = switching.optimize_threshold(env, setup.policy, Shield(gain, 0.0, cfg.norm),
                                                  bo_config(cfg, env))
    elapsed = time.perf_counter() - t0
    prov = {"env": env.name, "seed": cfg.seed, "ablate": ablate, "iterations": iterations,
            "moas_horizon": moas.horizon, "synthesis_seconds": round(elapsed, 3)}
    sh = Shield(gain, lam, cfg.norm, prov)
    log.info("%s: lambda=%.6g after %d refinements (%.2fs)", env.name, lam, iterations, elapsed)
    return SynthResult(sh, moas, iterations, elapsed, trace, history, bool(certified), float(slack))


def apply_ablation(cfg, setup, sh, ablate):
    """Swap in the LQR gain or a random threshold on an existing shield."""
    if ablate == "no-synthesis":
        return Shield(setup.lqr_gain, sh.lam, sh.norm, dict(sh.provenance, ablate=ablate))
    if ablate == "no-optimization":
        return Shield(sh.K, ablated_threshold(cfg, setup.env), sh.norm,
                      dict(sh.provenance, ablate=ablate))
    if ablate != "none":
        raise ContractError(f"unknown ablation {ablate!r}; choose from {ABLATIONS}")
    return sh


def run_eval(cfg, sh, setup=None, shielded=True, threads=1, episodes=None, steps=None):
    setup = setup or build(cfg)
    p = cfg.eval_params()
    return evaluate(setup.env, setup.policy, sh if shielded else None,
                    episodes or p["episodes"], steps or p["steps"],
                    derive_seed(cfg.seed, STREAM_EVAL), p["horizon"], threads)


def nominal_policy(cfg, setup):
    """The black-box policy without fault injection (noise only)."""
    if cfg.policy.get("type", "surrogate") == "mlp":
        return setup.policy
    env = setup.env
    p = cfg.surrogate_params(env)
    return perturbed_linear_policy(setup.lqr_gain, p["noise_scale"], 0.0,
                                   derive_seed(cfg.seed, STREAM_POLICY),
                                   command_lo=env.command_lo, command_hi=env.command_hi)


def fidelity(cfg, steps=5000, setup=None):
    """Rollout MSE of the model inferred at a random initial state and at the operating point.

    Both models are rolled out against the true dynamics from the operating
    point under the same noise stream, so only the linearization point differs.
    """
    setup = setup or build(cfg)
    env = setup.env
    eps = cfg.linearize_eps()
    s_rand = np.random.default_rng(derive_seed(cfg.seed, STREAM_SYNTH)).uniform(env.init_lo, env.init_hi)
    model_eq = linearize.infer_dynamics(env, eps=eps)
    model_rand = linearize.infer_dynamics(env, s0=s_rand, eps=eps)
    pol = nominal_policy(cfg, setup)
    seed = derive_seed(cfg.seed, STREAM_EVAL)
    mse = {name: linearize.fidelity_mse(env, m, pol, steps, seed, s_init=model_eq.s0)
           for name, m in (("random", model_rand), ("equilibrium", model_eq))}
    return {"env": env.name, "mse_random": mse["random"], "mse_equilibrium": mse["equilibrium"]}


def write_synth_outputs(result, out_dir, stem):
    paths = {
        "shield": out_dir / f"{stem}.shield.json",
        "program": out_dir / f"{stem}.shield.py",
        "trace": out_dir / f"{stem}.bo_trace.csv",
    }
    result.shield.save(paths["shield"])
    from .shield import emit_program
    paths["program"].write_text(emit_program(result.shield))
    paths["trace"].write_text(switching.trace_csv(result.bo_trace))
    return paths


def summary_record(result):
    return {"event": "done", "lambda": result.shield.lam, "iterations": result.iterations,
            "certified": result.certified, "slack": result.slack,
            "synthesis_seconds": result.synthesis_seconds}


def append_jsonl(path, record):
    with open(path, "a") as fh:
        fh.write(json.dumps(record) + "\n")
