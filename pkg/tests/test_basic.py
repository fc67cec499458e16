"""Basic constants kappa and the factor-4 sandwich."""
import math

import numpy as np
import pytest

from conftest import FAMILIES, example, kappa_of
from spectralgap import (BoundaryCase, DiffusionProblem, basic_interval, dualize, kappa, kappa_double, kappa_half,
                         mu_mass, nu_mass)

# -- examples -------------------------------------------------------------------


def test_hardy_dn():
    assert abs(kappa_half(example("hardy"), "DN").inverse - 1.0) <= 1e-6


def test_ou_half_dn():
    assert abs(kappa_half(example("ou_half"), "DN").inverse - 2.1) <= 0.05


def test_laplacian_dn_and_nd():
    p = example("laplace_unit")
    for case in ("DN", "ND"):
        r = kappa_half(p, case)
        assert abs(r.inverse - 4.0) <= 4e-6
        assert abs(r.kappa - 0.25) <= 1e-6


def test_laplacian_dd_and_nn():
    p = example("laplace_unit")
    for case in ("DD", "NN"):
        assert abs(kappa_double(p, case).inverse - 16.0) <= 16e-6


def test_ou_half_nn_with_optimizer():
    r = kappa_double(example("ou_half"), "NN")
    assert abs(r.inverse - 4.367) <= 0.01
    assert abs(r.x - 0.316) <= 0.01 and abs(r.y - 1.185) <= 0.01


@pytest.mark.parametrize("b", [1.0, -1.0, 2.0, -2.0])
def test_constant_drift_dd(b):
    p = DiffusionProblem(0.0, math.inf, 1.0, a="1", b=repr(b))
    assert abs(kappa_double(p, "DD").inverse - b * b) <= 1e-6 * b * b


def test_ou_whole_interval():
    r = basic_interval(example("ou_whole"), "NN")
    assert abs(r.upper - 2.1) <= 0.05 and abs(r.lower - 0.525) <= 0.0125
    assert r.contains(1.0)


@pytest.mark.parametrize("power", [2, 4])
def test_cauchy_euler_interval(power):
    p = example(f"cauchy_euler_e{power}")
    r = basic_interval(p, "DD")
    assert abs(r.upper - 16.0 / power**2) <= 1e-5 * 16.0 / power**2
    assert abs(r.lower - 4.0 / power**2) <= 1e-5 * 4.0 / power**2
    assert r.contains((math.pi / power) ** 2)


@pytest.mark.parametrize("name", ["laplace_unit", "ou_half", "hardy", "drift_b2"])
def test_lower_is_exactly_a_quarter(name):
    p = example(name)
    for case in ("DD", "NN", "DN", "ND"):
        r = basic_interval(p, case)
        assert r.lower == r.upper / 4.0
        assert r.lower <= r.upper


# -- invariants -----------------------------------------------------------------


@pytest.mark.parametrize("name,case", [(n, c) for n, cs in FAMILIES.items() for c in cs])
def test_inverse_times_kappa(name, case):
    r = kappa_of(name, case)
    if math.isfinite(r.kappa) and r.kappa > 0:
        assert abs(r.inverse * r.kappa - 1.0) <= 1e-12
    p = example(name)
    if r.x is not None:
        assert p.left < r.x < p.right
    if r.y is not None:
        assert r.x < r.y < p.right


FINITE_MU = [n for n in sorted(FAMILIES) if example(n).tables.mu.left_finite and example(n).tables.mu.right_finite]


@pytest.mark.parametrize("name", FINITE_MU)
def test_duality_nn_dd(name):
    # with an infinite speed measure NN is trivial by convention, so the identity is checked where it is finite
    p = example(name)
    a = kappa_double(p, "NN")
    b = kappa_double(dualize(p), "DD")
    assert a.inverse == pytest.approx(b.inverse, rel=1e-6, abs=1e-300)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_code_swap_dn_nd(name):
    p = example(name)
    a = kappa_half(p, "DN")
    b = kappa_half(dualize(p), "ND")
    assert a.inverse == pytest.approx(b.inverse, rel=1e-6, abs=1e-300)


def test_degenerate_nn_gives_zero():
    # constant drift b = 1 on (0, inf): infinite speed measure
    r = kappa_double(example("drift_b1"), "NN")
    assert r.inverse == 0.0 and r.flags


def test_degenerate_dn_gives_zero():
    # DN needs a finite speed measure near the right end
    r = kappa_half(example("drift_b1"), "DN")
    assert r.inverse == 0.0 and "infinite-mass" in r.flags


def test_dn_optimum_against_a_fine_grid():
    p = example("ou_half")
    r = kappa_half(p, "DN")
    T = p.tables
    lo, hi = T.search
    s = np.linspace(lo, hi, 640)
    grid = T.nu.cum_left(s) * T.mu.cum_right(s)
    assert r.kappa >= np.max(grid) * (1 - 1e-9)
    # the objective really is the product of the two masses at the optimizer
    direct = nu_mass(p, p.left, r.x) * mu_mass(p, r.x, p.right)
    assert abs(direct - r.kappa) <= 1e-9 * r.kappa


def test_dd_objective_at_the_optimizer():
    p = example("laplace_unit")
    r = kappa_double(p, "DD")
    x, y = r.x, r.y
    val = (1.0 / nu_mass(p, 0.0, x) + 1.0 / nu_mass(p, y, 1.0)) / mu_mass(p, x, y)
    assert abs(val - r.inverse) <= 1e-9 * r.inverse
    assert abs(x - 0.25) <= 1e-4 and abs(y - 0.75) <= 1e-4


def test_boundary_case_parsing():
    assert str(BoundaryCase.parse("dn")) == "DN"
    assert str(BoundaryCase.parse("DN").swapped) == "ND"
    with pytest.raises(ValueError):
        BoundaryCase.parse("DX")


def test_kappa_dispatch():
    p = example("laplace_unit")
    assert kappa(p, "DN").method == "basic"
    with pytest.raises(ValueError):
        kappa_half(p, "DD")
    with pytest.raises(ValueError):
        kappa_double(p, "DN")
