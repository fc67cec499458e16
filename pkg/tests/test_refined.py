"""Refined bounds: kappa-bar, the variational lower bound, kappa-underline, iteration."""
import math

import numpy as np
import pytest
from scipy import integrate, optimize, special

from conftest import example, oracle, piecewise_linear_positive, underline_of
from spectralgap import (PreconditionError, TestFunction, dualize, fxy_test_function, h_pair, improve_iteratively,
                         kappa_bar, kappa_underline, solve_theta, variational_bound, variational_lower)

SIN = TestFunction.from_expr("sin(pi*x)")
ONE = TestFunction.constant(1.0)
X_STAR = 0.436273


@pytest.fixture(scope="module")
def lap():
    return example("laplace_unit")


# -- h and theta ----------------------------------------------------------------


@pytest.mark.parametrize("z", [0.1, 0.25, 0.4])
def test_h_minus_of_sine(lap, z):
    hm, _ = h_pair(lap, SIN, 0.5, z)
    assert abs(hm - math.sin(math.pi * z) / math.pi**2) <= 1e-8


@pytest.mark.parametrize("z", [0.1, 0.25, 0.4])
def test_h_minus_of_constant(lap, z):
    hm, _ = h_pair(lap, ONE, 0.5, z)
    assert abs(hm - z * (1 - z) / 2) <= 1e-10


def test_h_plus_mirrors_h_minus(lap):
    for z in (0.6, 0.75, 0.9):
        _, hp = h_pair(lap, ONE, 0.5, z)
        assert abs(hp - z * (1 - z) / 2) <= 1e-10


@pytest.mark.parametrize("name", ["laplace_unit", "cauchy_euler_e2"])
def test_h_monotone(name):
    p = example(name)
    rng = np.random.default_rng(3)
    f = piecewise_linear_positive(p, rng)
    th = solve_theta(p, f).theta
    zl = np.sort(np.linspace(p.left, th, 60)[1:])
    zr = np.sort(np.linspace(th, p.right, 60)[:-1])
    hm, _ = h_pair(p, f, th, zl)
    _, hp = h_pair(p, f, th, zr)
    assert np.all(np.diff(hm) >= -1e-14)
    assert np.all(np.diff(hp) <= 1e-14)


@pytest.mark.parametrize("f", [SIN, "fxy"])
def test_theta_symmetric(lap, f):
    if f == "fxy":
        f = fxy_test_function(lap, 0.3, 0.7)
    split = solve_theta(lap, f)
    assert abs(split.theta - 0.5) <= 1e-8
    assert split.residual <= 1e-9 * max(split.h_minus_at_theta, split.h_plus_at_theta)


def test_theta_ou_half_via_the_dual():
    d = dualize(example("ou_half"))
    split = solve_theta(d, fxy_test_function(d, 0.6405, 0.938))
    assert abs(split.theta - 0.721194) <= 0.01


def test_theta_balances_h():
    p = example("cauchy_euler_e2")
    f = piecewise_linear_positive(p, np.random.default_rng(11))
    split = solve_theta(p, f)
    hm, hp = h_pair(p, f, split.theta, split.theta)
    assert abs(hm - hp) <= 1e-9 * max(hm, hp)


# -- variational lower bound ----------------------------------------------------


def test_variational_sine_is_sharp(lap):
    assert abs(variational_lower(lap, "DD", SIN) - math.pi**2) <= 1e-6 * math.pi**2


def test_variational_constant_gives_eight(lap):
    assert abs(variational_lower(lap, "DD", ONE) - 8.0) <= 1e-8


def test_variational_fxy(lap):
    f = fxy_test_function(lap, X_STAR, 1 - X_STAR)
    assert abs(variational_lower(lap, "DD", f) - 9.43693) <= 0.002


def test_variational_with_diagnostics(lap):
    r = variational_bound(lap, "DD", ONE)
    assert abs(r.theta - 0.5) <= 1e-8
    assert abs(r.sup_minus - 0.125) <= 1e-10 and abs(r.sup_plus - 0.125) <= 1e-10
    assert abs(r.argmax_minus - 0.5) <= 1e-4


def test_precondition_infinite_scale_measure():
    with pytest.raises(PreconditionError):
        variational_lower(example("ou_whole"), "DD", ONE)
    with pytest.raises(PreconditionError):
        kappa_underline(example("ou_whole"), "DD")


def test_mixed_cases_are_rejected(lap):
    with pytest.raises(ValueError):
        variational_lower(lap, "DN", ONE)


def test_nonpositive_test_function(lap):
    with pytest.raises(ValueError):
        variational_lower(lap, "DD", TestFunction.from_expr("x - 0.5"))


def test_samples_must_be_positive(lap):
    with pytest.raises(ValueError):
        TestFunction.from_samples(lap, [0.1, 0.5, 0.9], [1.0, 0.0, 1.0])


# -- kappa-bar ------------------------------------------------------------------


def test_bar_laplacian(lap):
    r = kappa_bar(lap, "DD")
    assert abs(r.inverse - 32 / 3) <= 1e-6 * 32 / 3
    assert abs(r.x - 0.375) <= 1e-4 and abs(r.y - 0.625) <= 1e-4


@pytest.mark.parametrize("b", [1.0, 2.0])
def test_bar_constant_drift(b):
    p = example(f"drift_b{int(b)}")
    assert abs(kappa_bar(p, "DD").inverse - b * b / 2) <= 1e-6 * b * b / 2
    q = example(f"drift_bm{int(b)}")
    assert abs(kappa_bar(q, "NN").inverse - b * b / 2) <= 1e-6 * b * b / 2


def _ou_half_bar_direct(x, y):
    """Objective of the upper bound on the OU half line from closed forms and quadrature.

    In the dual DD form the scale density is 2 exp(-z^2) and the speed density exp(z^2).
    """
    if not 0 < x < y:
        return math.inf
    sp = math.sqrt(math.pi)
    nm, npl = sp * special.erf(x), sp * special.erfc(y)
    inner = integrate.quad(lambda z: math.exp(z * z), x, y, epsabs=0, epsrel=1e-12)[0]
    left = integrate.quad(lambda z: math.pi * special.erf(z) ** 2 * math.exp(z * z), 0, x, epsabs=0, epsrel=1e-12)[0]
    right = integrate.quad(lambda z: math.pi * special.erfc(z) * special.erfcx(z), y, math.inf, epsabs=0,
                           epsrel=1e-12)[0]
    return (1 / nm + 1 / npl) / (inner + left / nm**2 + right / npl**2)


def test_bar_ou_half_against_direct_quadrature():
    grid = [(x, y) for x in np.linspace(0.1, 1.5, 15) for y in np.linspace(0.2, 2.5, 24) if y > x]
    start = min(grid, key=lambda p: _ou_half_bar_direct(*p))
    res = optimize.minimize(lambda v: _ou_half_bar_direct(*v), start, method="Nelder-Mead",
                            options={"xatol": 1e-7, "fatol": 1e-11})
    r = kappa_bar(example("ou_half"), "NN")
    assert abs(r.inverse - res.fun) <= 1e-6 * res.fun
    assert abs(r.x - res.x[0]) <= 1e-3 and abs(r.y - res.x[1]) <= 1e-3


def test_bar_ou_half_objective_values():
    # spot values of the objective, frozen from the direct quadrature above
    assert abs(_ou_half_bar_direct(0.316, 1.185) - 2.6292) <= 2e-4
    assert abs(_ou_half_bar_direct(0.5114, 1.0361) - 2.49471) <= 2e-4


# -- kappa-underline ------------------------------------------------------------


def test_underline_laplacian():
    r = underline_of("laplace_unit", "DD")
    assert abs(r.inverse - 9.43693) <= 0.002
    assert abs(r.x - X_STAR) <= 0.001
    assert abs(r.theta - 0.5) <= 1e-6


def test_underline_ou_half():
    r = underline_of("ou_half", "NN")
    assert abs(r.inverse - 1.83) <= 0.02
    assert abs(r.x - 0.6405) <= 0.01 and abs(r.y - 0.938) <= 0.01
    assert abs(r.theta - 0.721194) <= 0.01


@pytest.mark.parametrize("power", [2, 4])
def test_underline_cauchy_euler(power):
    p = example(f"cauchy_euler_e{power}")
    r = kappa_underline(p, "DD")
    assert abs(r.inverse - 9.4369 / power**2) <= 5e-3 * 9.4369 / power**2


def test_underline_matches_the_explicit_test_function():
    r = underline_of("ou_half", "NN")
    d = dualize(example("ou_half"))
    f = fxy_test_function(d, r.x, r.y)
    v = variational_lower(example("ou_half"), "NN", f)
    assert abs(v - r.inverse) <= 1e-4 * r.inverse


def test_underline_reports_equalization():
    r = underline_of("laplace_unit", "DD")
    assert len(r.details["pieces"]) == 3
    assert r.details["equalization_spread"] <= 1e-3


# -- iteration ------------------------------------------------------------------


def test_iterates_laplacian(lap):
    f0 = fxy_test_function(lap, X_STAR, 1 - X_STAR)
    it = improve_iteratively(lap, "DD", f0, n=2, theta=0.5)
    assert abs(it.bounds[0] - 9.80392) <= 0.002
    assert abs(it.bounds[1] - 9.86193) <= 0.002


def test_iteration_from_constant(lap):
    it = improve_iteratively(lap, "DD", ONE, n=1)
    assert it.bounds[0] >= 8.0


def test_iteration_with_refreshed_theta(lap):
    it = improve_iteratively(lap, "DD", ONE, n=3, refresh_theta=True)
    assert all(b <= math.pi**2 * (1 + 1e-6) for b in it.bounds)
    assert np.all(np.diff(it.bounds) >= -1e-9)


# -- chain, duality, fixed point ------------------------------------------------


@pytest.mark.parametrize("name", ["ou_half", "cauchy_euler_e2", "drift_bm1"])
def test_duality_reduction(name):
    p = example(name)
    d = dualize(p)
    assert kappa_bar(p, "NN").inverse == pytest.approx(kappa_bar(d, "DD").inverse, rel=1e-5)
    assert underline_of(name, "NN").inverse == pytest.approx(kappa_underline(d, "DD").inverse, rel=1e-5)


@pytest.mark.parametrize("name", ["laplace_unit", "cauchy_euler_e2", "cauchy_euler_e4"])
def test_eigenfunction_fixed_point(name):
    p = example(name)
    est = oracle(name, "DD")
    x, g = est.grid, np.abs(est.eigenfunction)
    keep = g > 0
    f = TestFunction.from_samples(p, x[keep], g[keep])
    v = variational_lower(p, "DD", f)
    assert abs(v - est.eigenvalue) <= max(est.error_estimate, 1e-6 * est.eigenvalue)


