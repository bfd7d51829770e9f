"""Commutativity of second-order linear time-varying systems.

Synthesize commutative partners, check the explicit relaxed and non-relaxed
conditions (switched coefficients included), and confirm the verdict by
simulating both cascade orderings.
"""

from .conditions import (
    ConditionReport,
    TheoremCase,
    Tolerances,
    classify_pair,
    condition_matrix,
    delta_determinant,
    nonrelaxed_residual,
    required_ic_ray,
)
from .expr import DomainError, ExprSyntaxError, diff_expr, eval_derivative, eval_expr, parse_expr
from .metrics import DeviationSummary, ScenarioReport, deviation, scenario_report
from .model import (
    CommutativityConstants,
    InitialState,
    LtvSystem,
    PiecewiseCoefficient,
    SwitchingSignal,
    apply_switching,
)
from .scenario import Scenario, ScenarioError, list_builtins, load_builtin, load_scenario, save_scenario
from .simulate import InputSignal, Trajectory, simulate_cascade, simulate_single, superposition_check
from .synthesis import compute_f_A, compute_gamma, synth_first_order, synth_scalar, synth_second_order, synthesize_partner

__version__ = "0.1.0"

__all__ = [
    "ConditionReport",
    "TheoremCase",
    "Tolerances",
    "classify_pair",
    "condition_matrix",
    "delta_determinant",
    "nonrelaxed_residual",
    "required_ic_ray",
    "DomainError",
    "ExprSyntaxError",
    "diff_expr",
    "eval_derivative",
    "eval_expr",
    "parse_expr",
    "DeviationSummary",
    "ScenarioReport",
    "deviation",
    "scenario_report",
    "CommutativityConstants",
    "InitialState",
    "LtvSystem",
    "PiecewiseCoefficient",
    "SwitchingSignal",
    "apply_switching",
    "Scenario",
    "ScenarioError",
    "list_builtins",
    "load_builtin",
    "load_scenario",
    "save_scenario",
    "InputSignal",
    "Trajectory",
    "simulate_cascade",
    "simulate_single",
    "superposition_check",
    "compute_f_A",
    "compute_gamma",
    "synth_first_order",
    "synth_scalar",
    "synth_second_order",
    "synthesize_partner",
]
