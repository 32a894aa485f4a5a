"""Compare the compiled kernels against the pure-Python mirror.

Each workload runs once per backend, and the results are checked for exact
agreement before timings are reported.

    python3 benchmarks/bench_kernels.py [--env pendulum-v1] [--episodes 10]
"""

import argparse
import contextlib
import time

import numpy as np

from shieldsynth import _kernels_py, lp, moas, shield, sim
from shieldsynth.config import RunConfig
from shieldsynth.pipeline import build
from shieldsynth.shield import Shield

try:
    from shieldsynth import _kernels as compiled
except ImportError:
    compiled = None

MODULES = (sim, lp, shield)


@contextlib.contextmanager
def use_backend(mod):
    saved = [m._k for m in MODULES]
    for m in MODULES:
        m._k = mod
    try:
        yield
    finally:
        for m, k in zip(MODULES, saved):
            m._k = k


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def workloads(env_name, episodes, steps):
    cfg = RunConfig(env=env_name)
    setup = build(cfg)
    env = setup.env
    sh = Shield(setup.lqr_gain, 0.5 * env.command_diameter)
    rng = np.random.default_rng(0)
    S = rng.uniform(env.init_lo, env.init_hi, size=(1000, env.state_dim))
    C = rng.uniform(env.command_lo, env.command_hi, size=(1000, env.command_dim))
    a_cl = np.eye(env.state_dim) + (setup.model.A - setup.model.B @ setup.lqr_gain) * env.dt

    def rollout():
        rep = sim.evaluate(env, setup.policy, sh, episodes, steps, seed=0)
        return rep.counts()

    def moas_lp():
        res = moas.compute_moas(a_cl, env.safe_set, 500)
        return res.horizon, res.set.D.tolist(), res.set.d.tolist()

    def shield_calls():
        return sim.shield_latency_ns(sh, S, C, reps=20)

    return [("evaluate (rollout + necessity)", rollout, True),
            ("compute_moas (simplex)", moas_lp, True),
            ("shield decision, ns/call", shield_calls, False)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", default="pendulum-v1")
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--steps", type=int, default=1000)
    args = ap.parse_args(argv)
    if compiled is None:
        raise SystemExit("the compiled extension is not built; run pip install -e . first")

    print(f"{'workload':34s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}")
    for name, fn, compare in workloads(args.env, args.episodes, args.steps):
        with use_backend(compiled):
            tc, out_c = timed(fn)
        with use_backend(_kernels_py):
            tp, out_p = timed(fn)
        if compare and out_c != out_p:
            raise SystemExit(f"{name}: backends disagree ({out_c} vs {out_p})")
        if compare:
            print(f"{name:34s} {tc:11.3f}s {tp:11.3f}s {tp / tc:8.1f}x")
        else:
            print(f"{name:34s} {out_c:11.1f}  {out_p:11.1f}  {out_p / out_c:8.1f}x")


if __name__ == "__main__":
    main()
