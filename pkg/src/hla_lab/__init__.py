"""Hierarchical anticipation and opponent-shaping learners on coordination games."""

from .autodiff import DiffError, derivative, gradient_block, jvp, nested_gradient, stop_gradient
from .dynamics import (
    LinearDynamics,
    classify,
    classify_outcome,
    closed_form_dynamics,
    fixed_point,
    integrate_phase,
    linearize,
    train,
)
from .experiments import SweepConfig, basin_map, phase_field, run_sweep, theorem_grid
from .game import (
    CoordinationGameSpec,
    JointPolicy,
    PayoffTensor,
    build_three_action_game,
    build_two_action_game,
    value,
)
from .learners import UpdateRule, compute_delta, hla_delta, hla_two_agent_delta, la_delta, lola_delta, naive_delta

__all__ = [
    "CoordinationGameSpec", "DiffError", "JointPolicy", "LinearDynamics", "PayoffTensor", "SweepConfig",
    "UpdateRule", "basin_map", "build_three_action_game", "build_two_action_game", "classify",
    "classify_outcome", "closed_form_dynamics", "compute_delta", "derivative", "fixed_point", "gradient_block",
    "hla_delta", "hla_two_agent_delta", "integrate_phase", "jvp", "la_delta", "linearize", "lola_delta",
    "naive_delta", "nested_gradient", "phase_field", "run_sweep", "stop_gradient", "theorem_grid", "train",
    "value",
]
