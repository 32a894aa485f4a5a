import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mlp_loops
from shieldsynth.envs import get_env
from shieldsynth.errors import ContractError, NumericalError
from shieldsynth.policy import (Layer, MlpPolicy, linear_as_policy, load_mlp, mlp_forward,
                                perturbed_linear_policy)
from shieldsynth.sim import evaluate


def random_layers(rng, sizes, acts):
    return [(rng.standard_normal((o, i)).tolist(), rng.standard_normal(o).tolist(), a)
            for i, o, a in zip(sizes, sizes[1:], acts)]


def test_identity_layer_returns_input():
    s = np.array([0.5, -1.5, 2.0])
    assert np.array_equal(mlp_forward([Layer(np.eye(3), np.zeros(3))], s), s)


@pytest.mark.parametrize("act", ["tanh", "relu", "id"])
def test_zero_weights_return_activated_bias(act):
    b = np.array([-0.5, 0.7])
    out = mlp_forward([Layer(np.zeros((2, 3)), b, act)], np.ones(3))
    expect = {"tanh": np.tanh(b), "relu": np.maximum(b, 0.0), "id": b}[act]
    assert np.array_equal(out, expect)


def test_two_layer_net_matches_loop_oracle(rng):
    net = random_layers(rng, [4, 16, 1], ["tanh", "id"])
    layers = [Layer(w, b, a) for w, b, a in net]
    s = rng.standard_normal(4)
    assert np.allclose(mlp_forward(layers, s), mlp_loops(net, s), rtol=1e-12, atol=0)


def test_mlp_rejects_broken_chain():
    with pytest.raises(ContractError):
        MlpPolicy((Layer(np.ones((3, 2)), np.zeros(3)), Layer(np.ones((1, 4)), np.zeros(1))), 2, 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mlp_non_finite_raises():
    with pytest.raises(NumericalError):
        mlp_forward([Layer([[1e308, 1e308]], [0.0])], [10.0, 10.0])


def test_mlp_json_round_trip(tmp_path, rng):
    net = random_layers(rng, [2, 8, 8, 1], ["relu", "tanh", "id"])
    pol = MlpPolicy(tuple(Layer(w, b, a) for w, b, a in net), 2, 1)
    path = tmp_path / "net.json"
    path.write_text(json.dumps(pol.to_json()))
    back = load_mlp(path)
    s = rng.standard_normal(2)
    assert np.array_equal(back(s), pol(s))
    with pytest.raises(ContractError):
        MlpPolicy.from_json({"layers": [{"b": [0.0]}], "state_dim": 1, "command_dim": 1})


def test_degenerate_surrogate_is_linear(rng):
    K = np.array([[1.5, -0.3]])
    pol = perturbed_linear_policy(K, 0.0, 0.0, command_lo=[-10.0], command_hi=[10.0])
    act = pol.bind(rng, 50)
    for t in range(50):
        s = rng.standard_normal(2)
        # plain left-to-right arithmetic (numpy's dot may fuse multiply-adds)
        assert act(t, s)[0] == -(K[0, 0] * s[0] + K[0, 1] * s[1])


def test_fault_prob_one_always_saturates(rng):
    K = np.array([[2.0, 1.0]])
    pol = perturbed_linear_policy(K, 0.1, 1.0, command_lo=[-3.0], command_hi=[3.0])
    act = pol.bind(rng, 200)
    for t in range(200):
        c = act(t, rng.standard_normal(2))
        assert abs(c[0]) == 3.0


def test_fault_pushes_against_nominal_command():
    K = np.array([[1.0, 0.0]])
    pol = perturbed_linear_policy(K, 0.0, 1.0, command_lo=[-4.0], command_hi=[5.0])
    act = pol.bind(np.random.default_rng(0), 2)
    assert act(0, np.array([1.0, 0.0]))[0] == 5.0  # nominal -1 -> upper bound
    assert act(1, np.array([-1.0, 0.0]))[0] == -4.0


def test_pendulum_surrogate_violates_without_shield():
    env = get_env("pendulum-v1")
    K = np.array([[4.2, 0.38]])
    pol = perturbed_linear_policy(K, 0.3, 0.002, command_lo=env.command_lo,
                                  command_hi=env.command_hi, fault_len=2.0)
    rep = evaluate(env, pol, None, episodes=100, steps=1000, seed=1)
    assert 1 <= rep.violations <= 30


def test_surrogate_validates_arguments():
    with pytest.raises(ContractError):
        perturbed_linear_policy([[1.0]], -1.0, 0.0, command_lo=[-1.0], command_hi=[1.0])
    with pytest.raises(ContractError):
        perturbed_linear_policy([[1.0]], 0.0, 1.5, command_lo=[-1.0], command_hi=[1.0])


def test_linear_as_policy_has_no_bounds():
    pol = linear_as_policy(np.array([[100.0]]))
    assert pol(np.array([1.0]))[0] == -100.0


# --- properties -------------------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 6))
def test_mlp_matches_oracle_on_random_nets(seed, depth, width):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 5))] + [width] * depth + [int(rng.integers(1, 3))]
    acts = list(rng.choice(["tanh", "relu", "id"], size=len(sizes) - 1))
    net = random_layers(rng, sizes, acts)
    s = rng.standard_normal(sizes[0])
    got = mlp_forward([Layer(w, b, a) for w, b, a in net], s)
    want = mlp_loops(net, s)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
       st.floats(1.0, 10.0))
def test_surrogate_is_pure_given_stream(seed, noise, p, flen):
    pol = perturbed_linear_policy([[1.0, 2.0]], noise, p, command_lo=[-2.0], command_hi=[2.0],
                                  fault_len=flen)
    a1 = pol.bind(np.random.default_rng(seed), 20)
    a2 = pol.bind(np.random.default_rng(seed), 20)
    s = np.array([0.1, -0.2])
    for t in (0, 7, 19, 7):
        assert np.array_equal(a1(t, s), a2(t, s))
        assert np.all(np.isfinite(a1(t, s)))
