"""Finite-difference eigenvalue oracle, truncation and Rayleigh quotients."""
import math

import numpy as np
import pytest
from scipy import optimize, special

from conftest import FAMILIES, example, oracle
from spectralgap import (DiffusionProblem, dualize, estimate_eigenvalue, rayleigh_quotient, solve_eigen_fd,
                         truncate_domain)
from spectralgap.oracle import ConstraintError, DivergenceError, OracleError

# -- truncation -----------------------------------------------------------------


def test_truncation_is_identity_on_finite_intervals():
    p = example("laplace_unit")
    q, report = truncate_domain(p, "DD", 1e-10)
    assert (q.left, q.right) == (0.0, 1.0)
    assert not report


def test_truncation_ou_whole():
    # 2 int_T^inf exp(-x^2) dx = 1e-10
    T = optimize.brentq(lambda t: math.sqrt(math.pi) * special.erfc(t) - 1e-10, 1.0, 10.0)
    q, report = truncate_domain(example("ou_whole"), "NN", 1e-10)
    assert abs(q.right - T) <= 1e-6 and abs(q.left + T) <= 1e-6
    assert 4.5 < T < 4.9
    assert report["right"]["measure"] == "mu"


def test_truncation_constant_drift_dirichlet_end():
    # b = -1, theta = 1: the scale tail e^{x-1} is infinite, so the speed tail e^{1-x} sets the cut
    q, report = truncate_domain(example("drift_bm1"), "DD", 1e-10)
    assert q.left == 0.0
    assert abs(q.right - (1.0 + 10.0 * math.log(10.0))) <= 1e-6
    assert report["right"]["measure"] == "mu"


def test_truncation_drops_at_most_tail_eps():
    q, report = truncate_domain(example("ou_half"), "NN", 1e-8)
    assert report["right"]["dropped"] <= 1e-8 * (1 + 1e-6)


# -- eigenvalues ----------------------------------------------------------------


def test_laplacian_dd():
    est = solve_eigen_fd(example("laplace_unit"), "DD")
    assert abs(est.eigenvalue - math.pi**2) <= max(est.error_estimate, 1e-7)
    x = est.grid
    g = est.eigenfunction / np.max(est.eigenfunction)
    assert np.max(np.abs(g - np.sin(np.pi * x))) <= 1e-5


def test_ou_whole_nn_eigenfunction_is_linear():
    est = estimate_eigenvalue(example("ou_whole"), "NN")
    assert abs(est.eigenvalue - 1.0) <= 1e-3
    x, g = est.grid, est.eigenfunction
    inner = np.abs(x) < 3
    c = np.dot(g[inner], x[inner]) / np.dot(x[inner], x[inner])
    assert np.max(np.abs(g[inner] - c * x[inner])) <= 1e-3 * np.max(np.abs(g[inner]))


def test_ou_half_nn_eigenfunction_is_quadratic():
    est = estimate_eigenvalue(example("ou_half"), "NN")
    assert abs(est.eigenvalue - 2.0) <= 2e-3
    x, g = est.grid, est.eigenfunction
    inner = x < 3
    ref = -1 + 2 * x[inner] ** 2
    c = np.dot(g[inner], ref) / np.dot(ref, ref)
    assert np.max(np.abs(g[inner] - c * ref)) <= 1e-3 * np.max(np.abs(g[inner]))
    assert "eigenfunction-not-single-crossing" not in est.flags


@pytest.mark.parametrize("b", [1.0, -1.0, 2.0, -2.0])
def test_constant_drift(b):
    name = f"drift_b{'m' if b < 0 else ''}{int(abs(b))}"
    case = "DD"
    est = estimate_eigenvalue(example(name), case)
    assert abs(est.eigenvalue - b * b / 4) <= 1e-2 * b * b / 4


@pytest.mark.parametrize("power", [2, 4])
def test_cauchy_euler(power):
    est = solve_eigen_fd(example(f"cauchy_euler_e{power}"), "DD")
    assert abs(est.eigenvalue - (math.pi / power) ** 2) <= max(2 * est.error_estimate, 1e-7)


def test_hardy_dn():
    assert abs(oracle("hardy", "DN").eigenvalue - 0.25) <= 2.5e-3


def test_infinite_interval_needs_truncation():
    with pytest.raises(ValueError):
        solve_eigen_fd(example("ou_whole"), "NN")


def test_grid_too_small():
    with pytest.raises(ValueError):
        solve_eigen_fd(example("laplace_unit"), "DD", n_grid=16)


# -- invariants -----------------------------------------------------------------


@pytest.mark.parametrize("name,case", [(n, c) for n, cs in FAMILIES.items() for c in cs])
def test_eigenfunction_shape(name, case):
    est = oracle(name, case)
    assert est.eigenvalue >= 0
    g = est.eigenfunction
    scale = np.max(np.abs(g))
    if case[0] == "D":
        assert abs(g[0]) <= 1e-6 * scale
    if case[1] == "D":
        assert abs(g[-1]) <= 1e-6 * scale
    if case == "NN":
        # the negative lobe can be very small on long truncated domains, so every nonzero sample counts
        signs = np.sign(g[g != 0])
        assert np.count_nonzero(np.diff(signs)) == 1
    else:
        assert np.all(g >= -1e-9 * scale)


@pytest.mark.parametrize("name", ["laplace_unit", "cauchy_euler_e2"])
def test_grid_convergence(name):
    p = example(name)
    lam = [solve_eigen_fd(p, "DD", n_grid=n, richardson=False).eigenvalue for n in (256, 512, 1024)]
    assert abs(lam[0] - lam[1]) >= 3 * abs(lam[1] - lam[2])


def test_grid_convergence_general_coefficients():
    p = DiffusionProblem(0.0, 2.0, 1.0, a="1 + 0.5*sin(3*x)^2", b="0.7 - x")
    lam = [solve_eigen_fd(p, "NN", n_grid=n, richardson=False).eigenvalue for n in (256, 512, 1024)]
    assert abs(lam[0] - lam[1]) >= 3 * abs(lam[1] - lam[2])


@pytest.mark.parametrize("name", ["ou_whole", "ou_half"])
def test_truncation_stability(name):
    a = estimate_eigenvalue(example(name), "NN", tail_eps=1e-10)
    b = estimate_eigenvalue(example(name), "NN", tail_eps=5e-11)
    assert abs(a.eigenvalue - b.eigenvalue) <= 10 * max(a.error_estimate, b.error_estimate)


@pytest.mark.parametrize("name", ["laplace_unit", "cauchy_euler_e2", "cauchy_euler_e4"])
def test_dual_agreement(name):
    p = example(name)
    a = solve_eigen_fd(p, "DD")
    b = solve_eigen_fd(dualize(p), "NN")
    assert abs(a.eigenvalue - b.eigenvalue) <= a.error_estimate + b.error_estimate + 1e-9 * a.eigenvalue


def test_nn_constant_mode_is_checked():
    est = solve_eigen_fd(example("laplace_unit"), "NN")
    assert abs(est.details["lowest"]) < 1e-8 * est.eigenvalue


def test_oracle_error_type():
    assert issubclass(OracleError, RuntimeError)


# -- Rayleigh quotient ----------------------------------------------------------


def test_rayleigh_ou_linear():
    assert abs(rayleigh_quotient(example("ou_whole"), "NN", "x") - 1.0) <= 1e-8


def test_rayleigh_laplacian_sine():
    assert abs(rayleigh_quotient(example("laplace_unit"), "DD", "sin(pi*x)") - math.pi**2) <= 1e-8


def test_rayleigh_laplacian_centered_linear():
    q = rayleigh_quotient(example("laplace_unit"), "NN", "x")
    assert abs(q - 12.0) <= 1e-8 and q >= math.pi**2


def test_rayleigh_with_exact_derivative():
    # int (1-2x)^2 = 1/3, int x^2 (1-x)^2 = 1/30
    q = rayleigh_quotient(example("laplace_unit"), "DD", lambda x: x * (1 - x), df=lambda x: 1 - 2 * x)
    assert abs(q - 10.0) <= 1e-9


def test_rayleigh_dirichlet_constraint():
    with pytest.raises(ConstraintError):
        rayleigh_quotient(example("laplace_unit"), "DD", "1 + x")


def test_rayleigh_divergent_norm():
    # constant function against the infinite speed measure of b = 1
    with pytest.raises(DivergenceError):
        rayleigh_quotient(example("drift_b1"), "ND", "1")


