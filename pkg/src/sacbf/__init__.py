"""Sampling-aware control barrier functions under zero-order-hold control.

Synthesizes per-step quadratic programs whose linear constraints keep
high relative-degree barrier functions nonnegative between sampling
instants, including time-varying reach-and-remain barriers and a
feasibility-preserving relaxation.
"""

from .barrier import (BarrierChain, ClassKappaPower, ReachSpec,
                      eval_psi, make_circular_safety, make_reach_remain,
                      top_lie_derivatives)
from .bounds import ComparisonBound, comparison_lower_bound
from .dynamics import InputBox, SystemModel, eval_field, make_unicycle
from .qp import (QpProblem, QpSolution, SacbfRow, build_qp, hocbf_row,
                 sacbf_row, solve_qp)
from .simulate import (ChainDecl, ScenarioConfig, TraceLog, audit_invariance,
                       run_scenario, step_zoh)
from .taylor import (BoundEstimate, TaylorBoundEstimator, TubeSpec,
                     estimate_lipschitz, estimate_mbar, phi, tube_radius)

__all__ = [
    "BarrierChain", "BoundEstimate", "ChainDecl", "ClassKappaPower",
    "ComparisonBound", "InputBox", "QpProblem", "QpSolution", "ReachSpec",
    "SacbfRow", "ScenarioConfig", "SystemModel", "TaylorBoundEstimator",
    "TraceLog", "TubeSpec", "audit_invariance", "build_qp",
    "comparison_lower_bound", "estimate_lipschitz", "estimate_mbar",
    "eval_field", "eval_psi", "hocbf_row", "make_circular_safety",
    "make_reach_remain", "make_unicycle", "phi", "run_scenario", "sacbf_row",
    "solve_qp", "step_zoh", "top_lie_derivatives", "tube_radius",
]
