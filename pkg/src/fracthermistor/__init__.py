r"""Fractional-order nonlocal thermistor problem.

Solves :math:`D^{2\alpha} u = \lambda f(t, u) / (\delta + \int_0^t f)^2`,
``u(0) = u0``, for ``0 < alpha < 1/2`` through its weakly singular Volterra
integral form.
"""

from .continuation import (
    ContinuationConfig,
    GlobalSolution,
    GronwallCertificate,
    TerminationVerdict,
    apply_K,
    classify_termination,
    extend_segment,
    global_solve,
    gronwall_majorant,
    history_term_u1,
)
from .fracops import (
    QuadWeights,
    SampledFn,
    TimeGrid,
    caputo_derivative,
    gamma_fn,
    graded_grid,
    rl_derivative,
    rl_integral,
    singular_weights,
    uniform_grid,
)
from .kernels import BACKEND
from .model import (
    ConductivitySpec,
    ConductivityTable,
    HypothesisConstants,
    HypothesisReport,
    NonlocalState,
    ProblemSpec,
    SingularSourceError,
    accumulate,
    eval_conductivity,
    load_conductivity_table,
    source_term,
    validate_hypotheses,
)
from .picard import LocalBall, SolveReport, apply_A, existence_radius, residuals, solve_local

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConductivitySpec",
    "ConductivityTable",
    "ContinuationConfig",
    "GlobalSolution",
    "GronwallCertificate",
    "HypothesisConstants",
    "HypothesisReport",
    "LocalBall",
    "NonlocalState",
    "ProblemSpec",
    "QuadWeights",
    "SampledFn",
    "SingularSourceError",
    "SolveReport",
    "TerminationVerdict",
    "TimeGrid",
    "accumulate",
    "apply_A",
    "apply_K",
    "caputo_derivative",
    "classify_termination",
    "eval_conductivity",
    "existence_radius",
    "extend_segment",
    "gamma_fn",
    "global_solve",
    "graded_grid",
    "gronwall_majorant",
    "history_term_u1",
    "load_conductivity_table",
    "residuals",
    "rl_derivative",
    "rl_integral",
    "singular_weights",
    "solve_local",
    "source_term",
    "uniform_grid",
    "validate_hypotheses",
]
