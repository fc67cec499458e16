"""Built-in example problems with their reference values."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .measures import DiffusionProblem

__all__ = ["Expectation", "Example", "REGISTRY", "builtin_example", "example_names", "UnknownExampleError"]


class UnknownExampleError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown example {self.name!r}; available: {', '.join(example_names())}"


@dataclass(frozen=True)
class Expectation:
    """One reference value.

    ``quantity`` is one of ``kappa``, ``bar``, ``underline``, ``oracle``,
    ``iterate1``, ``iterate2``, ``ratio`` (bar over underline) or an
    optimizer coordinate ``kappa.x``, ``underline.theta`` and so on.  The
    check passes when ``|got - value| <= abs_tol + rel_tol * |value|``.
    """

    quantity: str
    case: str
    value: float
    abs_tol: float = 0.0
    rel_tol: float = 0.0
    note: str = ""

    def passes(self, got: Optional[float]) -> bool:
        if got is None or not math.isfinite(got):
            return False
        return abs(got - self.value) <= self.abs_tol + self.rel_tol * abs(self.value)


@dataclass(frozen=True)
class Example:
    name: str
    description: str
    left: float
    right: float
    theta: float
    a: str
    b: str
    cases: tuple
    expectations: tuple
    #: finite/infinite status of the mu and nu tails at each end
    tails: dict = field(default_factory=dict)
    #: theta held fixed in the iteration, if any
    iterate_theta: Optional[float] = None

    def problem(self) -> DiffusionProblem:
        return DiffusionProblem(self.left, self.right, self.theta, a=self.a, b=self.b, label=self.name)


def _tails(mu_left, mu_right, nu_left, nu_right):
    return {"mu_left": mu_left, "mu_right": mu_right, "nu_left": nu_left, "nu_right": nu_right}


def _drift(b: float) -> Example:
    cases = ("ND", "DD") if b > 0 else ("DN", "NN")
    exps = []
    for c in cases:
        exps.append(Expectation("kappa", c, b * b, rel_tol=1e-6))
        exps.append(Expectation("oracle", c, b * b / 4, rel_tol=1e-2))
    double = cases[1]
    exps.append(Expectation("bar", double, b * b / 2, rel_tol=1e-6))
    name = f"drift_b{'m' if b < 0 else ''}{abs(int(b))}"
    tails = _tails(True, b < 0, True, b > 0)
    return Example(name, f"constant drift a = 1, b = {b:g} on (0, inf)", 0.0, math.inf, 1.0, "1", f"{b:g}", cases,
                   tuple(exps), tails)


def _cauchy_euler(power: int) -> Example:
    N = math.e**power
    ln = float(power)
    exps = (
        Expectation("kappa", "DD", (4 / ln) ** 2, rel_tol=1e-5),
        Expectation("kappa", "DN", (2 / ln) ** 2, rel_tol=1e-5),
        Expectation("oracle", "DD", (math.pi / ln) ** 2, rel_tol=1e-2),
        Expectation("underline", "DD", 9.4369 / ln**2, rel_tol=5e-3),
    )
    return Example(f"cauchy_euler_e{power}", f"a = x^2, b = x on (1, e^{power})", 1.0, N, math.exp(power / 2), "x^2",
                   "x", ("DD", "DN"), exps, _tails(True, True, True, True))


_PI2 = math.pi**2

_EXAMPLES = [
    Example(
        "laplace_unit", "a = 1, b = 0 on (0, 1)", 0.0, 1.0, 0.5, "1", "0", ("DD",),
        (
            Expectation("kappa", "DD", 16.0, rel_tol=1e-6),
            Expectation("bar", "DD", 32 / 3, rel_tol=1e-6),
            Expectation("bar.x", "DD", 0.375, abs_tol=1e-4),
            Expectation("underline", "DD", 9.43693, abs_tol=0.002),
            Expectation("underline.x", "DD", 0.436273, abs_tol=0.001),
            Expectation("iterate1", "DD", 9.80392, abs_tol=0.002),
            Expectation("iterate2", "DD", 9.86193, abs_tol=0.002),
            Expectation("oracle", "DD", _PI2, abs_tol=0.01),
        ),
        _tails(True, True, True, True), iterate_theta=0.5,
    ),
    Example(
        "ou_whole", "a = 1/2, b = -x on (-inf, inf)", -math.inf, math.inf, 0.0, "1/2", "-x", ("NN",),
        (
            Expectation("kappa", "NN", 2.1, abs_tol=0.05),
            Expectation("oracle", "NN", 1.0, abs_tol=0.01),
        ),
        _tails(True, True, False, False),
    ),
    Example(
        "ou_half", "a = 1/2, b = -x on (0, inf)", 0.0, math.inf, 1.0, "1/2", "-x", ("NN", "DN"),
        (
            Expectation("kappa", "NN", 4.367, abs_tol=0.01),
            Expectation("kappa.x", "NN", 0.316, abs_tol=0.01),
            Expectation("kappa.y", "NN", 1.185, abs_tol=0.01),
            Expectation("bar", "NN", 2.6, abs_tol=0.05),
            Expectation("underline", "NN", 1.83, abs_tol=0.02),
            Expectation("underline.x", "NN", 0.6405, abs_tol=0.01),
            Expectation("underline.y", "NN", 0.938, abs_tol=0.01),
            Expectation("underline.theta", "NN", 0.721194, abs_tol=0.01),
            Expectation("ratio", "NN", 1.42, abs_tol=0.03),
            Expectation("oracle", "NN", 2.0, abs_tol=0.02),
            Expectation("kappa", "DN", 2.1, abs_tol=0.05),
        ),
        _tails(True, True, True, False),
    ),
    _drift(1.0),
    _drift(-1.0),
    _drift(2.0),
    _drift(-2.0),
    Example(
        "hardy", "a = x^2, b = 0 on (0, inf)", 0.0, math.inf, 1.0, "x^2", "0", ("DN",),
        (
            Expectation("kappa", "DN", 1.0, rel_tol=1e-6),
            Expectation("oracle", "DN", 0.25, rel_tol=1e-2),
        ),
        _tails(False, True, True, False),
    ),
    Example(
        "hardy_shift", "a = x^2, b = 0 on (1, inf)", 1.0, math.inf, 2.0, "x^2", "0", ("NN",),
        (
            Expectation("kappa", "NN", 1.0, rel_tol=1e-6),
            Expectation("bar", "NN", 0.5, rel_tol=1e-6),
            Expectation("oracle", "NN", 0.25, rel_tol=1e-2),
        ),
        _tails(True, True, True, False),
    ),
    _cauchy_euler(2),
    _cauchy_euler(4),
]

REGISTRY = {ex.name: ex for ex in _EXAMPLES}


def example_names() -> list:
    return list(REGISTRY)


def builtin_example(name: str):
    """The problem and the reference values of a built-in example."""
    try:
        ex = REGISTRY[name]
    except KeyError:
        raise UnknownExampleError(name) from None
    return ex.problem(), ex
