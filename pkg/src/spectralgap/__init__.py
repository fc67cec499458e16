"""Two-sided estimates of principal eigenvalues of one-dimensional diffusions.

For ``L = a d^2/dx^2 + b d/dx`` on an interval with Dirichlet (D) or Neumann
(N) ends the package computes the basic constants ``kappa`` (a factor-4
sandwich), the refined upper and lower constants ``kappa_bar`` and
``kappa_underline``, iterated variational lower bounds, and reference
eigenvalues from an independent finite-difference solver.
"""
from .basic import BoundaryCase, BoundResult, KappaResult, SearchSettings, basic_interval, kappa, kappa_double, kappa_half
from .examples import REGISTRY, builtin_example, example_names
from .expr import ExprDomainError, ExprSyntaxError, UnknownIdentifierError, compile_expr, eval_expr, parse_expr, to_text
from .measures import (CoefficientError, DiffusionProblem, QuadratureError, dualize, mu_mass, nu_mass,
                       potential_C)
from .oracle import EigenEstimate, estimate_eigenvalue, rayleigh_quotient, solve_eigen_fd, truncate_domain
from .pipeline import Report, RunConfig, check_example, emit_outputs, run_bounds
from .refined import (PreconditionError, TestFunction, fxy_test_function, h_pair, improve_iteratively, kappa_bar,
                      kappa_underline, solve_theta, variational_bound, variational_lower)

__version__ = "0.1.0"

__all__ = [
    "BoundaryCase", "BoundResult", "KappaResult", "SearchSettings", "basic_interval", "kappa", "kappa_double",
    "kappa_half", "REGISTRY", "builtin_example", "example_names", "ExprDomainError", "ExprSyntaxError",
    "UnknownIdentifierError", "compile_expr", "eval_expr", "parse_expr", "to_text", "CoefficientError",
    "DiffusionProblem", "QuadratureError", "dualize", "mu_mass", "nu_mass", "potential_C", "EigenEstimate",
    "estimate_eigenvalue", "rayleigh_quotient", "solve_eigen_fd", "truncate_domain", "Report", "RunConfig",
    "check_example", "emit_outputs", "run_bounds", "PreconditionError", "TestFunction", "fxy_test_function",
    "h_pair", "improve_iteratively", "kappa_bar", "kappa_underline", "solve_theta", "variational_bound",
    "variational_lower",
]
