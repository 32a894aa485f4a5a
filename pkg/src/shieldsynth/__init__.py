"""Synthesize verified runtime shields for black-box control policies."""

from .cegis import RefineConfig, synthesize_linear_policy
from .config import RunConfig
from .envs import BENCHMARKS, get_env
from .errors import (ContractError, ConvergenceError, LpError, NumericalError, ParseError,
                     ShieldSynthError, SynthesisFailure, UnboundedSafeSet)
from .kernels import BACKEND
from .linearize import infer_dynamics
from .lqr import LqrConfig, solve_lqr
from .moas import compute_moas
from .shield import Shield, emit_program, parse_program, shield_command
from .sim import evaluate, run_episode
from .switching import BoConfig, optimize_threshold

__version__ = "0.1.0"
