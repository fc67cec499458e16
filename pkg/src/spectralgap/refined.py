"""Refined upper and lower bounds and the iterative lower-bound procedure.

The lower-bound machinery is written for the DD case of a problem with
``nu(L, R) < inf``.  The NN case of a problem is the DD case of its dual
(``mu`` and ``nu`` exchanged), which is how it is evaluated here.

For a positive test function ``f`` and a split point ``theta``

    h-(z) = mu(f nu_- 1_(L,z)) + nu_-(z) mu(f 1_(z,theta)),      z <= theta
    h+(z) = mu(f nu_+ 1_(z,R)) + nu_+(z) mu(f 1_(theta,z)),      z >= theta

with ``nu_-(z) = nu(L, z)`` and ``nu_+(z) = nu(z, R)``.  Then

    lambda^DD >= 1 / max(sup_{z<theta} h-/f, sup_{z>theta} h+/f)

for every ``theta``; the natural choice balances ``h-(theta) = h+(theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import cheb
from .basic import BoundaryCase, KappaResult, SearchSettings, inverse_of
from .measures import DiffusionProblem, dualize
from .search import Scan, bisect_increasing, zoom_1d, zoom_2d

__all__ = [
    "PreconditionError",
    "TestFunction",
    "ThetaSplit",
    "VariationalResult",
    "kappa_bar",
    "h_pair",
    "solve_theta",
    "variational_lower",
    "variational_bound",
    "fxy_test_function",
    "kappa_underline",
    "improve_iteratively",
    "IterationResult",
]


class PreconditionError(ValueError):
    """The variational machinery does not apply to this problem."""


# -- test functions ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Positive function on the open interval.

    ``kind`` is ``"callable"`` (a vectorized ``f(x)`` with optional kinks at
    ``breakpoints``), ``"samples"`` (monotone cubic interpolation of
    ``log f`` in the auxiliary coordinate) or ``"panels"`` (Chebyshev pieces
    in the auxiliary coordinate, used for iterates).
    """

    __test__ = False

    kind: str
    func: Optional[Callable] = None
    breakpoints: tuple = ()
    label: str = ""
    smap: object = None
    s_breaks: Optional[np.ndarray] = None
    coef: Optional[np.ndarray] = None
    interp: Optional[PchipInterpolator] = None

    @classmethod
    def from_callable(cls, fn: Callable, breakpoints: Sequence[float] = (), label: str = "") -> "TestFunction":
        return cls("callable", fn, tuple(float(b) for b in breakpoints), label)

    @classmethod
    def from_expr(cls, text: str, breakpoints: Sequence[float] = ()) -> "TestFunction":
        from .expr import compile_expr

        return cls.from_callable(compile_expr(text), breakpoints, label=text)

    @classmethod
    def constant(cls, value: float = 1.0) -> "TestFunction":
        return cls.from_callable(lambda x: np.full(np.shape(x), float(value)), label=f"{value:g}")

    @classmethod
    def from_samples(cls, problem: DiffusionProblem, x, f, label: str = "samples") -> "TestFunction":
        """Monotone cubic interpolation of ``log f`` in the auxiliary coordinate.

        Samples must be positive; outside their range the end values are held.
        """
        x = np.asarray(x, dtype=float)
        f = np.asarray(f, dtype=float)
        if np.any(~(f > 0)) or not np.all(np.isfinite(f)):
            raise ValueError("test function samples must be positive and finite")
        smap = problem.smap
        s = smap.s(x)
        order = np.argsort(s)
        return cls("samples", label=label, smap=smap, interp=PchipInterpolator(s[order], np.log(f[order])))

    @classmethod
    def from_panels(cls, smap, s_breaks, values, label: str = "panels") -> "TestFunction":
        return cls("panels", label=label, smap=smap, s_breaks=np.asarray(s_breaks),
                   coef=cheb.coefficients(np.asarray(values, dtype=float)))

    def at_s(self, problem: DiffusionProblem, s, side: str = "right"):
        """Values at auxiliary coordinates ``s``.

        At a panel break, ``side`` picks the panel on the left or on the right
        (relevant for iterates, which may jump at the balancing point).
        """
        s = np.asarray(s, dtype=float)
        if self.kind == "callable":
            return np.asarray(self.func(problem.smap.x(s)), dtype=float) * np.ones_like(s)
        return self.at_s_map(s, side)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "callable":
            return np.asarray(self.func(x), dtype=float) * np.ones_like(x)
        s = self.smap.s(x)
        return self.at_s_map(s)

    def at_s_map(self, s, side: str = "right"):
        if self.kind == "samples":
            return np.exp(self.interp(np.clip(s, self.interp.x[0], self.interp.x[-1])))
        br = self.s_breaks
        idx = np.clip(np.searchsorted(br, s, side=side) - 1, 0, len(br) - 2)
        w = br[idx + 1] - br[idx]
        t = np.clip(2.0 * (s - br[idx]) / w - 1.0, -1.0, 1.0)
        return cheb.clenshaw(self.coef[idx], t)

    def s_breakpoints(self, problem: DiffusionProblem) -> np.ndarray:
        if self.kind == "callable":
            return np.asarray(problem.smap.s(np.asarray(self.breakpoints, dtype=float)), dtype=float).reshape(-1)
        if self.kind == "panels":
            return np.asarray(self.s_breaks, dtype=float)
        return np.zeros(0)


@dataclass
class ThetaSplit:
    theta: float
    h_minus_at_theta: float
    h_plus_at_theta: float
    residual: float
    flags: list = field(default_factory=list)


@dataclass
class VariationalResult:
    bound: float
    theta: float
    sup_minus: float
    sup_plus: float
    argmax_minus: float
    argmax_plus: float
    split: Optional[ThetaSplit] = None
    flags: list = field(default_factory=list)


def _dd_problem(problem: DiffusionProblem, case) -> DiffusionProblem:
    case = BoundaryCase.parse(case)
    if str(case) == "DD":
        target = problem
    elif str(case) == "NN":
        target = dualize(problem)
    else:
        raise ValueError("the refined bounds handle the DD and NN cases")
    return target


def _require_finite_nu(problem: DiffusionProblem, case) -> None:
    T = problem.tables
    if not (T.nu.left_finite and T.nu.right_finite):
        what = "scale measure nu" if str(case) == "DD" else "speed measure mu"
        raise PreconditionError(
            f"the variational lower bound for {case} needs a finite total {what}; it is infinite here"
        )


class _FunctionTables:
    """Cumulative tables of ``mu f``, ``mu f nu_-`` and ``mu f nu_+`` for one DD problem."""

    def __init__(self, problem: DiffusionProblem, f: TestFunction, extra_s: Sequence[float] = ()):
        self.problem = problem
        self.f = f
        T = problem.tables
        self.T = T
        breaks = list(f.s_breakpoints(problem)) + list(extra_s)
        R = T.refined(breaks)
        self.R = R
        fv = np.asarray(f.at_s(problem, R.s), dtype=float)
        lo, hi = T.search
        inside = (R.s >= lo) & (R.s <= hi)
        if np.any(~np.isfinite(fv[inside])) or np.any(fv[inside] <= 0):
            raise ValueError(f"test function {f.label!r} is not positive and finite on the interval")
        fv = np.where(np.isfinite(fv) & (fv > 0), fv, 0.0)
        self.node_values = fv
        with np.errstate(over="ignore", invalid="ignore"):
            mu = np.exp(R.log_mu)
            self.F0 = R.table(mu * fv)
            self.Fm = R.table(mu * fv * np.exp(R.log_nu_minus()))
            self.Fp = R.table(mu * fv * np.exp(R.log_nu_plus()))

    def f_at(self, s, side: str = "right"):
        return np.asarray(self.f.at_s(self.problem, s, side), dtype=float)

    def h_minus(self, z, theta):
        nu = self.T.nu
        return self.Fm.cum_left(z) + nu.cum_left(z) * self.F0.mass(np.minimum(z, theta), theta)

    def h_plus(self, z, theta):
        nu = self.T.nu
        return self.Fp.cum_right(z) + nu.cum_right(z) * self.F0.mass(theta, np.maximum(z, theta))

    def gap(self, theta):
        with np.errstate(invalid="ignore"):
            return self.Fm.cum_left(theta) - self.Fp.cum_right(theta)

    def split(self, rtol: float = 1e-10) -> ThetaSplit:
        lo, hi = self.T.search
        root, status = bisect_increasing(self.gap, [lo], [hi])
        th = float(root[0])
        flags = []
        if status[0] != 0:
            side = "left" if status[0] < 0 else "right"
            flags.append(f"no-sign-change:{side}-dominates")
        hm = float(self.Fm.cum_left(th))
        hp = float(self.Fp.cum_right(th))
        res = abs(hm - hp)
        if res > rtol * max(hm, hp) and status[0] == 0:
            flags.append("residual-plateau")
        return ThetaSplit(float(self.problem.smap.x(th)), hm, hp, res, flags)

    def sup_ratios(self, theta_s: float, settings: SearchSettings) -> VariationalResult:
        lo, hi = self.T.search
        th = np.array([theta_s])

        def ratio_minus(Z):
            return self.h_minus(Z, theta_s) / self.f_at(Z, "left")

        def ratio_plus(Z):
            return self.h_plus(Z, theta_s) / self.f_at(Z, "right")

        flags = []
        if theta_s > lo:
            rm = zoom_1d(ratio_minus, [lo], th, maximize=True, n_scan=settings.n_scan_1d, tol=settings.tol)
            sm, am = float(rm.value[0]), float(rm.arg[0])
        else:
            sm, am = 0.0, lo
        if theta_s < hi:
            rp = zoom_1d(ratio_plus, th, [hi], maximize=True, n_scan=settings.n_scan_1d, tol=settings.tol)
            sp, ap = float(rp.value[0]), float(rp.arg[0])
        else:
            sp, ap = 0.0, hi
        top = max(sm, sp)
        if not np.isfinite(top):
            flags.append("infinite-h")
            bound = 0.0
        else:
            bound = inverse_of(top)
        smap = self.problem.smap
        return VariationalResult(bound, float(smap.x(theta_s)), sm, sp, float(smap.x(am)), float(smap.x(ap)),
                                 None, flags)


# -- upper bound kappa-bar ---------------------------------------------------


def _bar_objective(T):
    nu, mu = T.nu, T.mu
    left_fin, right_fin = nu.left_finite, nu.right_finite
    Cm = T.composite(2.0, 0.0) if left_fin else None
    Cp = T.composite(0.0, 2.0) if right_fin else None

    def objective(X, Y):
        shape = X.shape
        X, Y = X.ravel(), Y.ravel()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            nm = nu.cum_left(X)
            npl = nu.cum_right(Y)
            num = 1.0 / nm + 1.0 / npl
            left = Cm.cum_left(X) / nm**2 if left_fin else mu.cum_left(X)
            right = Cp.cum_right(Y) / npl**2 if right_fin else mu.cum_right(Y)
            den = mu.mass(X, Y) + left + right
            out = num / den
        return out.reshape(shape)

    return objective


def kappa_bar(problem: DiffusionProblem, case, settings: SearchSettings = SearchSettings()) -> KappaResult:
    """Improved upper bound ``(kappa-bar)^-1 >= lambda`` for DD or NN (NN via the dual)."""
    case = BoundaryCase.parse(case)
    target = _dd_problem(problem, case)
    T = target.tables
    res = zoom_2d(_bar_objective(T), *T.search, n_scan=settings.n_scan_2d, tol=settings.tol,
                  max_rounds=settings.max_rounds, keep_scan=settings.keep_scan)
    inverse = float(res.value)
    flags = [] if res.converged else ["budget-exceeded"]
    if inverse == 0:
        flags.append("kappa-infinite")
    smap = problem.smap
    scan = None
    if res.scan is not None:
        scan = Scan(smap.x(res.scan.x), res.scan.values, smap.x(res.scan.y))
    return KappaResult(inverse_of(inverse), inverse, {"x": float(smap.x(res.x)), "y": float(smap.x(res.y))},
                       "bar", case, res.evaluations, res.width, flags, {"s": (res.x, res.y)}, scan)


# -- variational lower bound -------------------------------------------------


def h_pair(problem: DiffusionProblem, f: TestFunction, theta: float, z):
    """``(h-(z), h+(z))`` of the DD machinery; each is NaN outside its half."""
    ft = _FunctionTables(problem, f)
    smap = problem.smap
    zs = smap.s(np.asarray(z, dtype=float))
    ts = float(smap.s(theta))
    hm = np.where(zs <= ts, ft.h_minus(zs, ts), np.nan)
    hp = np.where(zs >= ts, ft.h_plus(zs, ts), np.nan)
    if np.ndim(hm) == 0:
        return float(hm), float(hp)
    return hm, hp


def solve_theta(problem: DiffusionProblem, f: TestFunction) -> ThetaSplit:
    """Root of ``h-(theta) = h+(theta)`` by bisection (DD machinery)."""
    return _FunctionTables(problem, f).split()


def variational_bound(problem: DiffusionProblem, case, f: TestFunction, theta: Optional[float] = None,
                      settings: SearchSettings = SearchSettings()) -> VariationalResult:
    """Lower bound for ``lambda^case`` from the test function ``f`` with diagnostics."""
    case = BoundaryCase.parse(case)
    target = _dd_problem(problem, case)
    _require_finite_nu(target, case)
    ft = _FunctionTables(target, f)
    split = ft.split() if theta is None else None
    th = split.theta if theta is None else float(theta)
    out = ft.sup_ratios(float(target.smap.s(th)), settings)
    out.split = split
    if split is not None:
        out.flags.extend(split.flags)
    return out


def variational_lower(problem: DiffusionProblem, case, f: TestFunction, theta: Optional[float] = None,
                      settings: SearchSettings = SearchSettings()) -> float:
    """Certified lower bound for ``lambda^case`` (DD or NN) from any positive ``f``."""
    return variational_bound(problem, case, f, theta, settings).bound


# -- refined lower bound kappa-underline -------------------------------------


def fxy_test_function(problem: DiffusionProblem, x: float, y: float) -> TestFunction:
    """The square-root-of-scale test function with kinks at ``x < y`` (DD machinery).

    It is ``sqrt(nu_+(y) / nu_-(x)) sqrt(nu_-)`` left of ``x``, constant
    ``sqrt(nu_+(y))`` on ``[x, y]`` and ``sqrt(nu_+)`` right of ``y``.
    """
    T = problem.tables
    smap = problem.smap
    sx, sy = float(smap.s(x)), float(smap.s(y))
    npy = float(T.nu.cum_right(sy))
    nmx = float(T.nu.cum_left(sx))
    c = math.sqrt(npy / nmx)

    def f(xx):
        s = smap.s(np.asarray(xx, dtype=float))
        out = np.full(np.shape(s), math.sqrt(npy))
        out = np.where(s < sx, c * np.sqrt(T.nu.cum_left(s)), out)
        out = np.where(s > sy, np.sqrt(T.nu.cum_right(s)), out)
        return out

    return TestFunction.from_callable(f, (x, y), label=f"f^({x:.6g},{y:.6g})")


class _UnderlineObjective:
    """Vectorized evaluation of the refined lower-bound objective over pairs ``x < y``."""

    def __init__(self, T, settings: SearchSettings):
        self.T = T
        self.nu, self.mu = T.nu, T.mu
        c = T.composite
        self.A = c(1.5, 0.0)
        self.Ap = c(0.0, 1.5)
        self.M1 = c(1.0, 0.0)
        self.M1p = c(0.0, 1.0)
        self.Mv = c(1.0, 0.5)
        self.Mvp = c(0.5, 1.0)
        self.B = c(0.5, 0.0)
        self.Bp = c(0.0, 0.5)
        self.lo, self.hi = T.search
        self.settings = settings
        self.evaluations = 0

    def pieces(self, X, Y):
        """Theta and the three candidate suprema for each pair."""
        nu, mu = self.nu, self.mu
        nmx = nu.cum_left(X)
        npy = nu.cum_right(Y)
        c = np.sqrt(npy / nmx)
        K = np.sqrt(npy)
        A_x = self.A.cum_left(X)
        Ap_y = self.Ap.cum_right(Y)

        def I_minus(th):
            return np.where(
                th <= X,
                c * self.A.cum_left(th),
                c * A_x + K * self.M1.mass(X, np.minimum(th, Y)) + self.Mv.mass(Y, np.maximum(th, Y)),
            )

        def I_plus(th):
            return np.where(
                th >= Y,
                self.Ap.cum_right(th),
                Ap_y + K * self.M1p.mass(np.maximum(th, X), Y) + c * self.Mvp.mass(np.minimum(th, X), X),
            )

        with np.errstate(invalid="ignore", divide="ignore"):
            th, status = bisect_increasing(lambda t: I_minus(t) - I_plus(t), np.full_like(X, self.lo),
                                           np.full_like(X, self.hi), iters=80, rtol=1e-13)
            h_theta = 0.5 * (I_minus(th) + I_plus(th))
            f_theta = np.where(th < X, c * np.sqrt(nu.cum_left(th)),
                               np.where(th > Y, np.sqrt(nu.cum_right(th)), K))
            mid = h_theta / f_theta

            # left piece: z < min(x, theta), f = c sqrt(nu_-)
            zr = np.minimum(X, th)
            tail_left = np.where(th > X, K * mu.mass(X, np.minimum(th, Y)) + self.Bp.mass(Y, np.maximum(th, Y)),
                                 0.0) / c
            def left_ratio(Z):
                nm = nu.cum_left(Z)
                rest = self.B.mass(Z, zr[:, None]) + tail_left[:, None]
                return self.A.cum_left(Z) / np.sqrt(nm) + np.sqrt(nm) * rest

            # right piece: z > max(y, theta), f = sqrt(nu_+)
            zl = np.maximum(Y, th)
            head_right = np.where(th < Y, K * mu.mass(np.maximum(th, X), Y) + c * self.B.mass(np.minimum(th, X), X),
                                  0.0)
            def right_ratio(Z):
                npz = nu.cum_right(Z)
                acc = self.Bp.mass(zl[:, None], Z) + head_right[:, None]
                return self.Ap.cum_right(Z) / np.sqrt(npz) + np.sqrt(npz) * acc

            st = self.settings
            L = zoom_1d(lambda Z: left_ratio(Z), np.full_like(X, self.lo), zr, maximize=True, n_scan=24,
                        n_refine=9, tol=max(st.tol, 1e-7))
            R = zoom_1d(lambda Z: right_ratio(Z), zl, np.full_like(X, self.hi), maximize=True, n_scan=24,
                        n_refine=9, tol=max(st.tol, 1e-7))
        self.evaluations += X.size
        left = np.where(zr > self.lo, L.value, 0.0)
        right = np.where(zl < self.hi, R.value, 0.0)
        return th, left, mid, right, status

    def __call__(self, X, Y):
        shape = X.shape
        X, Y = X.ravel(), Y.ravel()
        out = np.full(X.shape, np.inf)
        ok = Y > X
        if np.any(ok):
            _, left, mid, right, _ = self.pieces(X[ok], Y[ok])
            out[ok] = np.maximum(np.maximum(left, mid), right)
        return out.reshape(shape)


def kappa_underline(problem: DiffusionProblem, case, settings: SearchSettings = SearchSettings(tol=1e-7)
                    ) -> KappaResult:
    """Refined lower bound ``(kappa-underline)^-1 <= lambda`` for DD or NN (NN via the dual).

    Minimizes over ``x < y`` the largest of the three candidate suprema of
    ``h/f`` for the test function :func:`fxy_test_function`; ``theta``
    balances ``h-`` and ``h+`` for each pair.
    """
    case = BoundaryCase.parse(case)
    target = _dd_problem(problem, case)
    _require_finite_nu(target, case)
    T = target.tables
    obj = _UnderlineObjective(T, settings)
    res = zoom_2d(obj, *T.search, n_scan=settings.n_scan_2d, tol=settings.tol, max_rounds=settings.max_rounds,
                  keep_scan=settings.keep_scan)
    th, left, mid, right, status = obj.pieces(np.array([res.x]), np.array([res.y]))
    pieces = [float(left[0]), float(mid[0]), float(right[0])]
    value = max(pieces)
    flags = [] if res.converged else ["budget-exceeded"]
    # the optimum equalizes the active pieces; report when it does not
    active = [p for p in pieces if p > 0]
    spread = (max(active) - min(active)) / max(active) if active else 0.0
    if spread > 1e-3:
        flags.append("not-equalized")
    smap = problem.smap
    scan = None
    if res.scan is not None:
        scan = Scan(smap.x(res.scan.x), res.scan.values, smap.x(res.scan.y))
    opt = {"x": float(smap.x(res.x)), "y": float(smap.x(res.y)), "theta": float(smap.x(th[0]))}
    details = {"s": (res.x, res.y, float(th[0])), "pieces": pieces, "equalization_spread": spread}
    return KappaResult(value, inverse_of(value), opt, "underline", case, obj.evaluations, res.width, flags, details,
                       scan)


# -- iteration ---------------------------------------------------------------


@dataclass
class IterationResult:
    bounds: list
    theta: float
    iterates: list = field(default_factory=list, repr=False)
    details: list = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter(self.bounds)

    def __len__(self):
        return len(self.bounds)

    def __getitem__(self, i):
        return self.bounds[i]


def improve_iteratively(problem: DiffusionProblem, case, f0: TestFunction, n: int = 2, refresh_theta: bool = False,
                        theta: Optional[float] = None, settings: SearchSettings = SearchSettings()
                        ) -> IterationResult:
    """Lower bounds from the iterates ``f_k = h_{f_(k-1)}``, one per iteration.

    ``theta`` defaults to the balancing point of ``f0`` and stays fixed unless
    ``refresh_theta`` is set.  Iterates are stored as Chebyshev panels on the
    tables' partition refined at the kinks of ``f0`` and at ``theta``.
    """
    case = BoundaryCase.parse(case)
    target = _dd_problem(problem, case)
    _require_finite_nu(target, case)
    smap = target.smap
    if theta is None:
        theta = _FunctionTables(target, f0).split().theta
    th_s = float(smap.s(theta))
    f = f0
    bounds, iterates, details = [], [], []
    for _ in range(n):
        ft = _FunctionTables(target, f, extra_s=[th_s])
        if refresh_theta and f is not f0:
            split = ft.split()
            th_s = float(smap.s(split.theta))
            ft = _FunctionTables(target, f, extra_s=[th_s])
        S = ft.R.s
        # panels touching theta take the side they lie on
        mids = 0.5 * (ft.R.breaks[:-1] + ft.R.breaks[1:])
        left_panel = (mids < th_s)[:, None]
        hv = np.where(left_panel, ft.h_minus(S, th_s), ft.h_plus(S, th_s))
        lo, hi = target.tables.search
        inside = (S >= lo) & (S <= hi)
        if np.any(~(hv[inside] > 0)):
            raise ArithmeticError("an iterate lost positivity")
        scale = float(np.max(hv[inside]))
        f_next = TestFunction.from_panels(smap, ft.R.breaks, hv / scale, label=f"f{len(bounds) + 1}")
        # theta stays in s so the jump of f_next sits exactly on a panel break
        res = _FunctionTables(target, f_next, extra_s=[th_s]).sup_ratios(th_s, settings)
        bounds.append(res.bound)
        iterates.append(f_next)
        details.append(res)
        f = f_next
    return IterationResult(bounds, float(smap.x(th_s)), iterates, details)
