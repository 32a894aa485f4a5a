import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shieldsynth import _kernels_py, lp, shield as shield_mod, sim
from shieldsynth.config import RunConfig
from shieldsynth.envs import BENCHMARKS, get_env
from shieldsynth.moas import compute_moas
from shieldsynth.pipeline import build
from shieldsynth.shield import Shield

compiled = pytest.importorskip("shieldsynth._kernels")


def test_compiled_backend_is_default():
    from shieldsynth.kernels import BACKEND
    assert BACKEND == compiled.BACKEND != _kernels_py.BACKEND


def test_environment_variable_forces_python():
    env = dict(os.environ, SHIELDSYNTH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from shieldsynth.kernels import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_constants_agree():
    for name in dir(_kernels_py):
        if name.isupper() and name != "BACKEND":
            assert getattr(compiled, name) == getattr(_kernels_py, name), name


@given(st.sampled_from(BENCHMARKS), st.integers(0, 2**32 - 1))
def test_dynamics_bitwise(name, seed):
    env = get_env(name)
    rng = np.random.default_rng(seed)
    s = rng.uniform(2 * env.init_lo, 2 * env.init_hi)
    c = rng.uniform(env.command_lo, env.command_hi)
    a, b = np.empty(env.state_dim), np.empty(env.state_dim)
    compiled.dynamics(env.kind, env.params, s, c, a)
    _kernels_py.dynamics(env.kind, env.params, s, c, b)
    assert np.array_equal(a, b)


@given(st.integers(1, 7), st.integers(1, 3), st.sampled_from([0, 1]), st.integers(0, 2**32 - 1))
def test_shield_decision_bitwise(m, n, norm, seed):
    rng = np.random.default_rng(seed)
    K = rng.standard_normal(m * n)
    s, c = rng.standard_normal(m), rng.standard_normal(n)
    lam = float(rng.exponential())
    ka, kb = np.empty(n), np.empty(n)
    assert compiled.shield_decide(K, lam, norm, s, c, ka) == _kernels_py.shield_decide(K, lam, norm, s, c, kb)
    assert np.array_equal(ka, kb)


@pytest.fixture
def python_backend(monkeypatch):
    def use():
        for mod in (sim, lp, shield_mod):
            monkeypatch.setattr(mod, "_k", _kernels_py)
    return use


@pytest.mark.parametrize("name", ["pendulum-v1", "quadcopter"])
def test_evaluation_counts_agree(name, python_backend):
    setup = build(RunConfig(env=name))
    sh = Shield(setup.lqr_gain, 0.02 * setup.env.command_diameter)
    fast = sim.evaluate(setup.env, setup.policy, sh, 5, 400, seed=2)
    python_backend()
    slow = sim.evaluate(setup.env, setup.policy, sh, 5, 400, seed=2)
    assert fast.counts() == slow.counts()
    assert [r["steps_to_steady"] for r in fast.rows] == [r["steps_to_steady"] for r in slow.rows]


def test_moas_agrees(python_backend):
    setup = build(RunConfig(env="cartpole-v1"))
    env, model = setup.env, setup.model
    a_cl = np.eye(4) + env.dt * (model.A - model.B @ setup.lqr_gain)
    fast = compute_moas(a_cl, env.safe_set)
    python_backend()
    slow = compute_moas(a_cl, env.safe_set)
    assert fast.horizon == slow.horizon
    assert np.array_equal(fast.set.D, slow.set.D) and np.array_equal(fast.set.d, slow.set.d)
