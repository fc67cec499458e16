"""Basic two-sided estimates of the principal eigenvalue.

For each boundary code ``#`` the constant ``kappa^#`` satisfies
``(kappa^#)^-1 / 4 <= lambda^# <= (kappa^#)^-1``:

* ``kappa^DN = sup_x nu(L, x) mu(x, R)``
* ``kappa^ND = sup_x mu(L, x) nu(x, R)``
* ``(kappa^NN)^-1 = inf_{x<y} [mu(L, x)^-1 + mu(y, R)^-1] / nu(x, y)``
* ``(kappa^DD)^-1 = inf_{x<y} [nu(L, x)^-1 + nu(y, R)^-1] / mu(x, y)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .measures import DiffusionProblem
from .search import Scan, zoom_1d, zoom_2d

__all__ = [
    "BoundaryCase",
    "KappaResult",
    "BoundResult",
    "SearchSettings",
    "kappa_half",
    "kappa_double",
    "basic_interval",
    "inverse_of",
    "kappa",
]


@dataclass(frozen=True)
class BoundaryCase:
    left_code: str
    right_code: str

    def __post_init__(self):
        if self.left_code not in "DN" or self.right_code not in "DN" or not self.left_code or not self.right_code:
            raise ValueError(f"boundary codes must be D or N, got {self.left_code!r}{self.right_code!r}")

    @classmethod
    def parse(cls, case) -> "BoundaryCase":
        if isinstance(case, BoundaryCase):
            return case
        text = str(case).strip().upper()
        if len(text) != 2:
            raise ValueError(f"boundary case must be one of NN, DD, DN, ND, got {case!r}")
        return cls(text[0], text[1])

    def __str__(self) -> str:
        return self.left_code + self.right_code

    @property
    def swapped(self) -> "BoundaryCase":
        """Codes exchanged, as for the dual problem."""
        flip = {"D": "N", "N": "D"}
        return BoundaryCase(flip[self.left_code], flip[self.right_code])


@dataclass(frozen=True)
class SearchSettings:
    """Resolution of the optimizers (in the auxiliary coordinate)."""

    tol: float = 1e-9
    n_scan_1d: int = 64
    n_scan_2d: int = 32
    max_rounds: int = 200
    keep_scan: bool = False


@dataclass
class KappaResult:
    """A kappa-type constant with its optimizer and diagnostics."""

    kappa: float
    inverse: float
    optimizer: dict
    method: str
    case: BoundaryCase
    evaluations: int = 0
    tolerance_achieved: float = 0.0
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    scan: Optional[Scan] = field(default=None, repr=False)

    @property
    def x(self) -> Optional[float]:
        return self.optimizer.get("x")

    @property
    def y(self) -> Optional[float]:
        return self.optimizer.get("y")

    @property
    def theta(self) -> Optional[float]:
        return self.optimizer.get("theta")


@dataclass
class BoundResult:
    case: BoundaryCase
    lower: float
    upper: float
    provenance: dict = field(default_factory=dict)

    def contains(self, value: float, rtol: float = 0.0) -> bool:
        return self.lower * (1 - rtol) <= value <= self.upper * (1 + rtol)


def inverse_of(k: float) -> float:
    if k == 0:
        return math.inf
    if math.isinf(k):
        return 0.0
    return 1.0 / k


def _trivial(case, method, flag, kappa=math.inf) -> KappaResult:
    return KappaResult(kappa, inverse_of(kappa), {}, method, case, 0, 0.0, [flag])


def kappa_half(problem: DiffusionProblem, case, settings: SearchSettings = SearchSettings()) -> KappaResult:
    """``kappa^DN`` or ``kappa^ND`` with its maximizing point."""
    case = BoundaryCase.parse(case)
    if str(case) not in ("DN", "ND"):
        raise ValueError("kappa_half handles the DN and ND cases")
    T = problem.tables
    first, second = (T.nu, T.mu) if str(case) == "DN" else (T.mu, T.nu)
    if not first.left_finite or not second.right_finite:
        return _trivial(case, "basic", "infinite-mass")

    def objective(S):
        return first.cum_left(S) * second.cum_right(S)

    lo, hi = T.search
    res = zoom_1d(objective, [lo], [hi], maximize=True, n_scan=settings.n_scan_1d, tol=settings.tol,
                  keep_scan=settings.keep_scan)
    kappa = float(res.value[0])
    s = float(res.arg[0])
    flags = []
    if s in (lo, hi):
        flags.append("boundary-optimum")
    scan = None
    if res.scan is not None:
        scan = Scan(problem.smap.x(res.scan.x[0]), res.scan.values[0])
    return KappaResult(kappa, inverse_of(kappa), {"x": float(problem.smap.x(s))}, "basic", case, res.evaluations,
                       res.width, flags, {"s": s}, scan)


def _double_objective(T, case: str):
    if case == "NN":
        outer, inner = T.mu, T.nu
    else:
        outer, inner = T.nu, T.mu

    def objective(X, Y):
        shape = X.shape
        X, Y = X.ravel(), Y.ravel()
        with np.errstate(divide="ignore", invalid="ignore"):
            num = 1.0 / outer.cum_left(X) + 1.0 / outer.cum_right(Y)
            out = num / inner.mass(X, Y)
        return out.reshape(shape)

    return objective


def kappa_double(problem: DiffusionProblem, case, settings: SearchSettings = SearchSettings()) -> KappaResult:
    """``kappa^NN`` or ``kappa^DD`` with the minimizing pair ``x < y``."""
    case = BoundaryCase.parse(case)
    if str(case) not in ("NN", "DD"):
        raise ValueError("kappa_double handles the NN and DD cases")
    T = problem.tables
    if str(case) == "NN" and not (T.mu.left_finite and T.mu.right_finite):
        return _trivial(case, "basic", "infinite-mu", kappa=math.inf)
    res = zoom_2d(_double_objective(T, str(case)), *T.search, n_scan=settings.n_scan_2d, tol=settings.tol,
                  max_rounds=settings.max_rounds, keep_scan=settings.keep_scan)
    inverse = float(res.value)
    flags = [] if res.converged else ["budget-exceeded"]
    lo, hi = T.search
    if res.x in (lo, hi) or res.y in (lo, hi):
        flags.append("boundary-optimum")
    if inverse == 0:
        flags.append("kappa-infinite")
    smap = problem.smap
    scan = None
    if res.scan is not None:
        scan = Scan(smap.x(res.scan.x), res.scan.values, smap.x(res.scan.y))
    return KappaResult(inverse_of(inverse), inverse, {"x": float(smap.x(res.x)), "y": float(smap.x(res.y))},
                       "basic", case, res.evaluations, res.width, flags, {"s": (res.x, res.y)}, scan)


def kappa(problem: DiffusionProblem, case, settings: SearchSettings = SearchSettings()) -> KappaResult:
    case = BoundaryCase.parse(case)
    if str(case) in ("DN", "ND"):
        return kappa_half(problem, case, settings)
    return kappa_double(problem, case, settings)


def basic_interval(problem: DiffusionProblem, case, settings: SearchSettings = SearchSettings()) -> BoundResult:
    """The factor-4 sandwich ``[kappa^-1 / 4, kappa^-1]``."""
    res = kappa(problem, case, settings)
    return BoundResult(res.case, res.inverse / 4.0, res.inverse, {"lower": res, "upper": res})
