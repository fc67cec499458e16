"""Shared fixtures and cached computations for the test suite."""
from __future__ import annotations

import functools
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from spectralgap import (  # noqa: E402
    DiffusionProblem,
    builtin_example,
    estimate_eigenvalue,
    kappa,
    kappa_bar,
    kappa_underline,
)
from spectralgap.basic import SearchSettings  # noqa: E402

#: one representative per example family, with the cases checked on it
FAMILIES = {
    "laplace_unit": ("DD", "NN", "DN", "ND"),
    "ou_whole": ("NN",),
    "ou_half": ("NN", "DN"),
    "drift_b1": ("DD", "ND"),
    "drift_bm1": ("NN", "DN"),
    "hardy": ("DN",),
    "hardy_shift": ("NN",),
    "cauchy_euler_e2": ("DD", "DN", "NN", "ND"),
}


@functools.lru_cache(maxsize=None)
def example(name: str) -> DiffusionProblem:
    return builtin_example(name)[0]


def _random_problem(seed: int) -> DiffusionProblem:
    rng = np.random.default_rng(1000 + seed)
    if seed < 8:
        left = float(np.round(rng.uniform(-1.0, 0.0), 3))
        right = float(np.round(rng.uniform(1.0, 3.0), 3))
        a0, a1, k, ph = rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.8), rng.uniform(0.5, 3.0), rng.uniform(0, 3)
        b0, b1 = rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)
        a = f"{a0:.4f} + {a1:.4f}*sin({k:.4f}*x + {ph:.4f})^2"
        b = f"{b0:.4f} + {b1:.4f}*x"
        return DiffusionProblem(left, right, 0.5 * (left + right), a=a, b=b, label=f"random{seed}")
    # confining drift on a half line: finite speed measure, infinite scale measure at infinity
    a0, a1, c, d = rng.uniform(0.5, 1.5), rng.uniform(0.0, 0.5), rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5)
    a = f"{a0:.4f} + {a1:.4f}*sin(x)^2"
    b = f"{d:.4f} - {c:.4f}*x"
    return DiffusionProblem(0.0, math.inf, 1.0, a=a, b=b, label=f"random{seed}")


@functools.lru_cache(maxsize=None)
def random_problem(seed: int) -> DiffusionProblem:
    return _random_problem(seed)


def random_cases(seed: int):
    return ("DD", "NN", "DN", "ND") if seed < 8 else ("NN", "DN")


def problem_for(key: str) -> DiffusionProblem:
    if key.startswith("random"):
        return random_problem(int(key[len("random"):]))
    return example(key)


ALL_SUBJECTS = [(name, case) for name, cases in FAMILIES.items() for case in cases] + [
    (f"random{i}", case) for i in range(10) for case in random_cases(i)
]


@functools.lru_cache(maxsize=None)
def oracle(key: str, case: str):
    return estimate_eigenvalue(problem_for(key), case)


@functools.lru_cache(maxsize=None)
def kappa_of(key: str, case: str):
    return kappa(problem_for(key), case)


@functools.lru_cache(maxsize=None)
def bar_of(key: str, case: str):
    return kappa_bar(problem_for(key), case)


@functools.lru_cache(maxsize=None)
def underline_of(key: str, case: str):
    return kappa_underline(problem_for(key), case, SearchSettings(tol=1e-7))


def refined_admissible(key: str, case: str) -> bool:
    """Whether the variational machinery applies (finite nu for DD, finite mu for NN)."""
    if case not in ("DD", "NN"):
        return False
    T = problem_for(key).tables
    m = T.nu if case == "DD" else T.mu
    return m.left_finite and m.right_finite


def bump_function(problem: DiffusionProblem, rng, n_bumps: int = 3):
    """Random smooth function with compact support in the auxiliary coordinate."""
    lo, hi = problem.tables.search
    lo, hi = max(lo, -8.0), min(hi, 8.0)
    centers = rng.uniform(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo), n_bumps)
    # supports stay inside the search range
    widths = np.minimum(rng.uniform(0.3, 0.5, n_bumps) * (hi - lo), np.minimum(centers - lo, hi - centers))
    coefs = rng.normal(size=n_bumps)
    coefs[0] = abs(coefs[0]) + 0.5
    smap = problem.smap

    def f(x):
        s = smap.s(np.asarray(x, dtype=float))
        out = np.zeros(np.shape(s))
        for c, m, w in zip(coefs, centers, widths):
            u = np.clip((s - m) / w, -1.0, 1.0)
            out = out + c * (1.0 - u * u) ** 3
        return out

    return f


def piecewise_linear_positive(problem: DiffusionProblem, rng, n_knots: int = 6, envelope: bool = False):
    """Random positive piecewise-linear function of the auxiliary coordinate.

    With ``envelope`` it is multiplied by ``sqrt(nu(-M, s) nu(s, N))``, which
    keeps ``h`` finite when the speed measure has an infinite tail.
    """
    from spectralgap import TestFunction

    lo, hi = problem.tables.search
    lo, hi = max(lo, -10.0), min(hi, 10.0)
    knots = np.sort(rng.uniform(lo, hi, n_knots))
    vals = rng.uniform(0.2, 2.0, n_knots)
    smap = problem.smap
    nu = problem.tables.nu

    def f(x):
        s = smap.s(np.asarray(x, dtype=float))
        g = np.interp(s, knots, vals)
        if envelope:
            g = g * np.sqrt(nu.cum_left(s) * nu.cum_right(s))
        return g

    return TestFunction.from_callable(f, smap.x(knots), label="piecewise-linear")


@pytest.fixture(scope="session")
def lap():
    return example("laplace_unit")


@pytest.fixture(scope="session")
def ou_whole():
    return example("ou_whole")


@pytest.fixture(scope="session")
def ou_half():
    return example("ou_half")


#: criterion number -> (verdict, failed sub-checks), filled by the acceptance tests
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, failed = ACCEPTANCE[n]
        line = f"criterion {n}: {verdict}"
        if failed:
            line += "  (" + "; ".join(failed) + ")"
        terminalreporter.write_line(line)
