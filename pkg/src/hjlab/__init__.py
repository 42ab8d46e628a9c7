"""Desk-scale numerical laboratory for path-dependent Hamilton-Jacobi
equations posed over nonlinear monotone evolution equations.

The package builds finite-dimensional surrogates of the functional-analytic
setting (a Gelfand triple over a 1-D interval), integrates the evolution
equation x'(t) + A(t, x(t)) = f(t) implicitly in time, samples trajectory
bundles that stand in for compact trajectory spaces, and verifies, at desk
scale, the quantitative statements of the theory: a-priori bounds, dynamic
programming, minimax sub/supersolution inequalities, feedback differential
games with extremal-shift strategies, and the functional chain rule.
"""

__version__ = "0.1.0"

from .gelfand import (
    GelfandDiscretization,
    MonotoneOperator,
    assemble_discretization,
    make_operator,
    apply_operator,
)
from .pathspace import Path, History, TrajectoryBundle, d_infty, stop, sample_bundle
from .evolution import step, solve_ivp, apriori_constants
from .hamiltonian import HamiltonianSpec, eval_F
from .control import ControlProblem, brute_force_value, check_dpp
from .minimax import (
    ValueFunctional,
    bellman_spec,
    check_subsolution,
    check_supersolution,
    witness_bundle,
)
from .game import AffineGameValue, GameProblem, check_guarantee, extremal_shift_strategy
from .chainrule import PathFunctional, check_chain_rule
from .presets import build_preset, PRESET_NAMES
from .config import ExperimentConfig, load_config

__all__ = [
    "GelfandDiscretization",
    "MonotoneOperator",
    "assemble_discretization",
    "make_operator",
    "apply_operator",
    "Path",
    "History",
    "TrajectoryBundle",
    "d_infty",
    "stop",
    "sample_bundle",
    "step",
    "solve_ivp",
    "apriori_constants",
    "HamiltonianSpec",
    "eval_F",
    "ControlProblem",
    "brute_force_value",
    "check_dpp",
    "ValueFunctional",
    "bellman_spec",
    "check_subsolution",
    "check_supersolution",
    "witness_bundle",
    "AffineGameValue",
    "GameProblem",
    "check_guarantee",
    "extremal_shift_strategy",
    "PathFunctional",
    "check_chain_rule",
    "build_preset",
    "PRESET_NAMES",
    "ExperimentConfig",
    "load_config",
]
