import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import GOLDEN, scalar_dare_fixed_point
from shieldsynth.envs import BENCHMARKS, get_env
from shieldsynth.errors import ContractError, ConvergenceError, NumericalError
from shieldsynth.linearize import LinearModel, infer_dynamics
from shieldsynth.lqr import (LinearPolicy, LqrConfig, closed_loop, riccati_step, solve_linear,
                             solve_lqr, solve_riccati, spectral_radius)


def model(A, B):
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    return LinearModel(A, B, np.zeros(A.shape[0]), np.zeros(B.shape[1]), 1e-8)


def test_scalar_golden_ratio():
    P, _ = solve_riccati(np.eye(1), np.eye(1), LqrConfig.identity(1, 1))
    assert P[0, 0] == pytest.approx(GOLDEN, abs=1e-9)
    pol = solve_lqr(model([[0.0]], [[10.0]]), 0.1, LqrConfig.identity(1, 1))
    assert pol.K[0, 0] == pytest.approx(1.0 / GOLDEN, abs=1e-9)


def test_scalar_matches_hand_iteration():
    P, _ = solve_riccati(np.array([[1.05]]), np.array([[0.2]]), LqrConfig(np.eye(1) * 2.0, np.eye(1) * 0.5))
    assert P[0, 0] == pytest.approx(scalar_dare_fixed_point(1.05, 0.2, 2.0, 0.5), rel=1e-9)


def test_cost_scale_invariance():
    m = infer_dynamics(get_env("cartpole-v1"))
    base = solve_lqr(m, 0.01, LqrConfig.identity(4, 1))
    scaled = solve_lqr(m, 0.01, LqrConfig.identity(4, 1).scaled(7.0))
    assert np.allclose(base.K, scaled.K, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("name", BENCHMARKS)
def test_benchmark_gain_stabilizes(name):
    env = get_env(name)
    m = infer_dynamics(env)
    pol = solve_lqr(m, env.dt, LqrConfig.identity(env.state_dim, env.command_dim))
    assert spectral_radius(closed_loop(m, pol, env.dt)) < 1.0


def test_closed_loop_examples():
    m = model(np.zeros((2, 2)), np.zeros((2, 1)))
    assert np.array_equal(closed_loop(m, LinearPolicy([[1.0, 2.0]]), 0.1), np.eye(2))
    m = model([[0.0]], [[1.0]])
    assert np.allclose(closed_loop(m, LinearPolicy([[2.0]]), 0.1), [[0.8]], rtol=0, atol=1e-15)


@pytest.mark.filterwarnings("ignore:overflow")
def test_uncontrollable_unstable_system_fails():
    m = model([[1.0]], [[0.0]])
    with pytest.raises(ConvergenceError):
        solve_lqr(m, 0.1, LqrConfig(np.eye(1), np.eye(1), max_iters=5000))


def test_marginal_uncontrolled_system_fails():
    with pytest.raises(ConvergenceError):
        solve_riccati(np.eye(1), np.zeros((1, 1)), LqrConfig(np.eye(1), np.eye(1), max_iters=2000))


def test_config_validation():
    with pytest.raises(ContractError):
        LqrConfig(np.eye(2), np.zeros((1, 1)))
    with pytest.raises(ContractError):
        LqrConfig(-np.eye(2), np.eye(1))
    with pytest.raises(ContractError):
        LqrConfig([[1.0, 2.0], [0.0, 1.0]], np.eye(1))
    with pytest.raises(ContractError):
        solve_riccati(np.eye(2), np.ones((2, 1)), LqrConfig.identity(3, 1))


def test_gain_must_be_finite():
    with pytest.raises(NumericalError):
        LinearPolicy([[np.inf, 0.0]])


def test_solve_linear_singular():
    with pytest.raises(NumericalError):
        solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


# --- properties -------------------------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_solve_linear_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    M = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal((n, 2))
    assert np.allclose(solve_linear(M, b), np.linalg.solve(M, b), rtol=1e-9, atol=1e-10)


@given(seeds)
def test_dare_fixed_point_and_stability(seed):
    # random controllable systems: the solution satisfies the Riccati equation
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    Ad = np.eye(m) + 0.1 * rng.standard_normal((m, m))
    Bd = 0.5 * np.eye(m) + 0.1 * rng.standard_normal((m, m))
    cfg = LqrConfig.identity(m, m)
    P, _ = solve_riccati(Ad, Bd, cfg)
    P2, K = riccati_step(P, Ad, Bd, cfg.Q, cfg.R)
    assert np.abs(P2 - P).max() <= 1e-8 * max(1.0, np.abs(P).max())
    assert np.all(np.linalg.eigvalsh(P) > 0)
    assert spectral_radius(Ad - Bd @ K) < 1.0
