import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import reference_pendulum_shield
from shieldsynth import _kernels_py, shield as shield_mod
from shieldsynth.errors import ContractError, NumericalError, ParseError
from shieldsynth.shield import Shield, emit_program, parse_program, shield_command

PUBLISHED = Shield([[1.91256926, -0.98893131]], 0.21988415)


def run_program(text, c, s):
    ns = {}
    exec(text, ns)
    return ns["shield"](c, *s)


def test_pass_through_and_override():
    sh = Shield([[1.0, 0.0]], 0.5)
    c, hit = shield_command(sh, [1.0, 0.0], [-1.2])
    assert not hit and c[0] == -1.2
    c, hit = shield_command(sh, [1.0, 0.0], [0.0])
    assert hit and c[0] == -1.0


def test_threshold_boundary_passes():
    sh = Shield([[1.0]], 0.5)
    assert not shield_command(sh, [1.0], [-0.5])[1]
    assert not shield_command(sh, [1.0], [-1.5])[1]
    assert shield_command(sh, [1.0], [-0.4999])[1]
    assert shield_command(sh, [1.0], [-1.5001])[1]


def test_zero_threshold_only_passes_backup():
    sh = Shield([[2.0, 1.0]], 0.0)
    assert not shield_command(sh, [1.0, 1.0], [-3.0])[1]
    assert shield_command(sh, [1.0, 1.0], [-3.0 + 1e-12])[1]


def test_multi_output_norms():
    K = np.eye(2)
    s = np.zeros(2)
    c = np.array([0.3, 0.4])  # linf 0.4, l2 0.5
    assert not shield_command(Shield(K, 0.45, "linf"), s, c)[1]
    assert shield_command(Shield(K, 0.45, "l2"), s, c)[1]


def test_single_output_norm_canonical():
    assert Shield([[1.0]], 1.0, "l2").norm == "linf"
    assert Shield([[1.0]], 1.0, "l2") == Shield([[1.0]], 1.0, "linf")


def test_validation():
    with pytest.raises(ContractError):
        Shield([[1.0]], -0.1)
    with pytest.raises(ContractError):
        Shield([[1.0]], np.inf)
    with pytest.raises(ContractError):
        Shield([[1.0]], 1.0, "l1")
    with pytest.raises(NumericalError):
        Shield([[np.nan]], 1.0)
    with pytest.raises(ContractError):
        shield_command(PUBLISHED, [0.0], [0.0])
    with pytest.raises(NumericalError):
        shield_command(PUBLISHED, [0.0, np.inf], [0.0])


@pytest.mark.parametrize("backend", ["default", "python"])
def test_published_pendulum_shield_bitwise(backend, monkeypatch):
    if backend == "python":
        monkeypatch.setattr(shield_mod, "_k", _kernels_py)
    rng = np.random.default_rng(2024)
    text = emit_program(PUBLISHED)
    for _ in range(1000):
        eta, omega = rng.uniform(-0.6, 0.6), rng.uniform(-2.0, 2.0)
        c = rng.uniform(-3.0, 3.0)
        ref = reference_pendulum_shield(c, eta, omega)
        got = shield_command(PUBLISHED, [eta, omega], [c])[0][0]
        assert float(got).hex() == float(ref).hex()
        assert float(run_program(text, c, [eta, omega])).hex() == float(ref).hex()


def test_emitted_program_text():
    text = emit_program(PUBLISHED)
    assert text.splitlines() == [
        "def shield(c, x1, x2):",
        "    K = -1.91256926*x1 + 0.98893131*x2",
        "    if abs(c - K) > 0.21988415:",
        "        return K",
        "    return c",
    ]


def test_parse_error_positions():
    good = emit_program(PUBLISHED)
    with pytest.raises(ParseError) as err:
        parse_program(good.replace("    if abs", "    iff abs"))
    assert (err.value.line, err.value.column) == (3, 7)
    with pytest.raises(ParseError) as err:
        parse_program(good.replace("0.98893131*x2", "0.98893131*x3"))
    assert (err.value.line, err.value.column) == (2, 26)
    with pytest.raises(ParseError) as err:
        parse_program(good + "extra\n")
    assert err.value.line == 6
    with pytest.raises(ParseError) as err:
        parse_program("")
    assert err.value.line == 1


def test_json_round_trip(tmp_path):
    sh = Shield([[1.0, 2.0], [3.0, 4.0]], 0.25, "l2", {"env": "x"})
    path = tmp_path / "s.json"
    sh.save(path)
    back = Shield.load(path)
    assert back == sh and back.provenance == {"env": "x"}
    with pytest.raises(ContractError):
        Shield.from_json({"K": [[1.0]]})


# --- properties -------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def shields(draw):
    m = draw(st.integers(1, 7))
    n = draw(st.integers(1, 3))
    K = draw(st.lists(st.lists(finite, min_size=m, max_size=m), min_size=n, max_size=n))
    lam = draw(st.floats(0.0, 1e6))
    return Shield(K, lam, draw(st.sampled_from(["linf", "l2"])))


@given(shields())
def test_emit_parse_fixed_point(sh):
    text = emit_program(sh)
    back = parse_program(text)
    assert back == sh
    assert emit_program(back) == text


def test_emit_parse_fuzz_thousand():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        m, n = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        K = rng.standard_normal((n, m)) * 10.0 ** rng.integers(-8, 8)
        sh = Shield(K, float(rng.exponential()), "linf" if rng.random() < 0.5 else "l2")
        assert parse_program(emit_program(sh)) == sh


@given(shields(), st.integers(0, 2**32 - 1))
def test_program_agrees_with_kernel(sh, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1, 1, sh.state_dim)
    c = rng.uniform(-5, 5, sh.command_dim) * (1.0 + sh.lam)
    out, _ = shield_command(sh, s, c)
    got = run_program(emit_program(sh), c[0] if sh.command_dim == 1 else list(c), s)
    assert np.allclose(np.atleast_1d(got), out, rtol=1e-12, atol=1e-9 * (1 + np.abs(sh.K).max()))


@given(shields(), st.floats(0.0, 1e6), st.floats(0.0, 1e6), st.integers(0, 2**32 - 1))
def test_monotone_permissiveness(sh, a, b, seed):
    lo, hi = min(a, b), max(a, b)
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1, 1, sh.state_dim)
    c = rng.uniform(-1e6, 1e6, sh.command_dim)
    if shield_command(sh.with_threshold(hi), s, c)[1]:
        assert shield_command(sh.with_threshold(lo), s, c)[1]


@given(shields(), st.integers(0, 2**32 - 1))
def test_idempotent(sh, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1, 1, sh.state_dim)
    c = rng.uniform(-1e6, 1e6, sh.command_dim)
    once, _ = shield_command(sh, s, c)
    twice, hit = shield_command(sh, s, once)
    assert np.array_equal(once, twice)
