import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shieldsynth.envs import (BENCHMARKS, Environment, apply_overrides, deg, get_env, is_safe,
                              linear_env, load_overrides, sample_initial, step)
from shieldsynth.errors import ContractError, NumericalError
from shieldsynth.polytope import Polytope


def zero_env():
    return linear_env(np.zeros((2, 2)), np.zeros((2, 1)), 0.1, [0.1, 0.1], [1.0, 1.0], [1.0])


def test_zero_dynamics_leave_state_unchanged():
    s = np.array([0.3, -0.2])
    assert np.array_equal(step(zero_env(), s, [0.5]), s)


def test_pendulum_upright_is_equilibrium():
    assert np.array_equal(step(get_env("pendulum-v1"), [0.0, 0.0], [0.0]), [0.0, 0.0])


def test_double_integrator_euler_arithmetic():
    env = linear_env([[0, 1], [0, 0]], [[0], [1]], 0.1, [0.1, 0.1], [5.0, 5.0], [2.0])
    assert np.allclose(step(env, [1.0, 0.0], [1.0]), [1.0, 0.1], atol=1e-15)


def test_step_rejects_dimension_mismatch():
    with pytest.raises(ContractError):
        step(get_env("pendulum-v1"), [0.0, 0.0, 0.0], [0.0])
    with pytest.raises(ContractError):
        step(get_env("pendulum-v1"), [0.0, 0.0], [0.0, 1.0])


def test_step_reports_non_finite_dynamics():
    env = get_env("pendulum-v1").with_overrides(dynamics=lambda s, c: np.array([np.nan, 0.0]),
                                                kind=None)
    with pytest.raises(NumericalError):
        step(env, [0.0, 0.0], [0.0])


def test_pendulum_safety_examples():
    safe = get_env("pendulum-v1").safe_set
    assert is_safe(safe, [0.0, 0.0])
    assert not is_safe(safe, [deg(35.0), 0.0])
    assert is_safe(safe, [deg(30.0), 0.0])  # boundary counts as safe


def test_sample_initial_examples():
    env = zero_env().with_overrides(init_lo=np.zeros(2), init_hi=np.zeros(2))
    assert np.array_equal(sample_initial(env, 3), [0.0, 0.0])
    pend = get_env("pendulum-v1")
    s = sample_initial(pend, 42)
    assert np.all(np.abs(s) <= deg(20.0))
    assert np.array_equal(s, sample_initial(pend, 42))


def test_registry_has_eight_benchmarks():
    assert len(BENCHMARKS) == 8
    with pytest.raises(ContractError):
        get_env("acrobot")


@pytest.mark.parametrize("name", BENCHMARKS)
def test_initial_samples_are_safe(name):
    env = get_env(name)
    S = np.random.default_rng(0).uniform(env.init_lo, env.init_hi, size=(10_000, env.state_dim))
    assert np.all(S @ env.safe_set.D.T <= env.safe_set.d)


@pytest.mark.parametrize("name", BENCHMARKS)
def test_benchmark_invariants(name):
    env = get_env(name)
    assert env.dt > 0
    assert env.dynamics(np.zeros(env.state_dim), np.zeros(env.command_dim)).shape == (env.state_dim,)
    assert env.safe_set.n_constraints == 2 * env.state_dim


def test_init_box_must_be_strictly_inside():
    env = get_env("pendulum-v1")
    with pytest.raises(ContractError):
        env.with_overrides(init_hi=np.array([deg(30.0), 0.1]))


def test_bad_dt_rejected():
    with pytest.raises(ContractError):
        get_env("pendulum-v1").with_overrides(dt=0.0)


def test_override_file(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({
        "dt": 0.005,
        "init_box": [[-0.1, 0.1], [-0.1, 0.1]],
        "safe_halfspaces": [{"coeffs": [1, 0], "bound": 0.5}, {"coeffs": [-1, 0], "bound": 0.5},
                            {"coeffs": [0, 1], "bound": 0.5}, {"coeffs": [0, -1], "bound": 0.5}],
        "command_bounds": [[-2, 3]],
    }))
    env = load_overrides(get_env("pendulum-v1"), path)
    assert env.dt == 0.005
    assert np.array_equal(env.command_hi, [3.0])
    assert not env.safe_set.contains([0.6, 0.0])
    with pytest.raises(ContractError):
        apply_overrides(env, {"gravity": 1})


def test_reward_penalizes_unsafe_states():
    env = get_env("pendulum-v1")
    inside = env.reward(np.array([0.1, 0.0]), np.array([1.0]))
    assert inside == pytest.approx(-0.01 - 0.01)
    outside = env.reward(np.array([1.0, 0.0]), np.array([0.0]))
    assert outside == pytest.approx(-1.0 - 100.0)


def test_polytope_rejects_empty_set():
    with pytest.raises(ContractError):
        Polytope([[1.0], [-1.0]], [-1.0, -1.0])


# --- properties -------------------------------------------------------------

name_st = st.sampled_from(BENCHMARKS)
unit = st.floats(-1.0, 1.0, allow_nan=False)


@given(name_st, st.lists(unit, min_size=7, max_size=7), st.lists(unit, min_size=4, max_size=4))
def test_step_is_deterministic(name, xs, cs):
    env = get_env(name)
    s = np.array(xs[:env.state_dim]) * 0.1
    c = np.array(cs[:env.command_dim])
    assert np.array_equal(step(env, s, c), step(env, s, c))


@given(name_st, st.lists(unit, min_size=7, max_size=7),
       st.lists(st.floats(1.0, 50.0), min_size=4, max_size=4),
       st.lists(st.booleans(), min_size=4, max_size=4))
def test_step_clamps_commands(name, xs, mags, signs):
    env = get_env(name)
    s = np.array(xs[:env.state_dim]) * 0.1
    n = env.command_dim
    c = np.array([(1 if sg else -1) * (env.command_hi[i] + m)
                  for i, (m, sg) in enumerate(zip(mags[:n], signs[:n]))])
    assert np.array_equal(step(env, s, c), step(env, s, env.clamp(c)))


@given(name_st, st.integers(0, 2**32 - 1))
def test_initial_samples_safe_property(name, seed):
    env = get_env(name)
    assert is_safe(env.safe_set, sample_initial(env, seed))
