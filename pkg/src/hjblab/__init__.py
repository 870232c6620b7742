"""Numerical laboratory for a dilation transform of portfolio HJB equations.

The package has three legs that check each other:

* shift: finite-difference verification of the dilation identities that
  tie state derivatives of a value function to derivatives in the
  dilation parameter.
* reduction: the one-dimensional ODE satisfied by the dilation-parameter
  derivative along a frozen state, its quadrature solution, and the
  closed-form portfolio rule built from it.
* fd_solver / mc: classical oracles, a backward finite-difference HJB
  solver and Monte Carlo policy evaluation, kept independent of the
  transform so they can arbitrate.
"""

from .errors import (
    ConfigError,
    DegenerateCurvatureError,
    DomainError,
    EvaluationError,
    NonConvergenceError,
    OutOfBoundsError,
    ScopeMismatchError,
    SingularCoefficientError,
    StabilityError,
)
from .fd_solver import HjbSolution, SolverConfig, extract_policy, solve
from .mc import (
    ComparisonReport,
    SimConfig,
    SimReport,
    compare_policies,
    record_paths,
    simulate_paths,
    value_check,
)
from .model import (
    GridSpec,
    MarketModel,
    PolicyField,
    UtilitySpec,
    ValueSurface,
    eval_coefficients,
    policy_to_csv,
    surface_interpolate,
    surface_to_csv,
    trilinear_interpolate,
    utility_eval,
)
from .policies import POLICY_NAMES, build_policy
from .reduction import (
    FixedPointResult,
    OdeSolution,
    ReducedCoefficients,
    ReductionParams,
    closed_form_portfolio,
    collect_ode,
    default_normalization,
    foc_residual,
    foc_root_portfolio,
    reduced_lhs,
    solve_portfolio_fixed_point,
    solve_vbeta,
)
from .shift import (
    ANALYTIC_SUITE,
    CORE_SUITE,
    BetaDerivatives,
    Identity,
    IdentityReport,
    ScalingScope,
    ShiftPoint,
    beta_cross_derivative_fd,
    beta_derivative_fd,
    check_identity,
    default_check_points,
)

__version__ = "0.1.0"

__all__ = [
    "ANALYTIC_SUITE",
    "BetaDerivatives",
    "CORE_SUITE",
    "ComparisonReport",
    "ConfigError",
    "DegenerateCurvatureError",
    "DomainError",
    "EvaluationError",
    "FixedPointResult",
    "GridSpec",
    "HjbSolution",
    "Identity",
    "IdentityReport",
    "MarketModel",
    "NonConvergenceError",
    "OdeSolution",
    "OutOfBoundsError",
    "POLICY_NAMES",
    "PolicyField",
    "ReducedCoefficients",
    "ReductionParams",
    "ScalingScope",
    "ScopeMismatchError",
    "ShiftPoint",
    "SimConfig",
    "SimReport",
    "SingularCoefficientError",
    "SolverConfig",
    "StabilityError",
    "UtilitySpec",
    "ValueSurface",
    "beta_cross_derivative_fd",
    "beta_derivative_fd",
    "build_policy",
    "check_identity",
    "closed_form_portfolio",
    "collect_ode",
    "compare_policies",
    "default_check_points",
    "default_normalization",
    "eval_coefficients",
    "extract_policy",
    "foc_residual",
    "foc_root_portfolio",
    "policy_to_csv",
    "record_paths",
    "reduced_lhs",
    "simulate_paths",
    "solve",
    "solve_portfolio_fixed_point",
    "solve_vbeta",
    "surface_interpolate",
    "surface_to_csv",
    "trilinear_interpolate",
    "utility_eval",
    "value_check",
]
