"""Reference principal eigenvalues from a finite-difference eigensolver.

``-L u = lambda u`` is solved in divergence form ``-(u'/nu)' = lambda mu u``
(primes in the auxiliary coordinate ``s``) on nodes spread uniformly in the
Liouville coordinate ``t = int sqrt(mu nu) ds``.  Conductances are exact cell
integrals of ``nu``, masses are lumped cell halves of ``mu``; both come from
Gauss-Legendre rules in the log domain with an independently integrated
potential.  The symmetrized tridiagonal matrix is handed to LAPACK
(Sturm-sequence bisection and inverse iteration).  Infinite endpoints are
first cut where the relevant tail mass is negligible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from .basic import BoundaryCase
from .measures import CoefficientError, DiffusionProblem, QuadratureError

__all__ = [
    "OracleError",
    "TruncationError",
    "EigenEstimate",
    "truncate_domain",
    "solve_eigen_fd",
    "estimate_eigenvalue",
    "rayleigh_quotient",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
#: how far into a finite end the grid reaches (auxiliary coordinate)
END_S = 40.0
#: smallest kept relative distance to a nonzero finite endpoint
END_RTOL = 1e-12
MAX_CUT = 1e40
FINE_POINTS = 20001


class OracleError(RuntimeError):
    """The discrete eigenproblem is not usable (indefinite or unseparated)."""


class TruncationError(ValueError):
    """A tail does not decay fast enough for a finite cut."""


@dataclass
class EigenEstimate:
    """Principal eigenvalue ``lambda^#`` with its eigenfunction samples."""

    eigenvalue: float
    case: BoundaryCase
    grid: np.ndarray = field(repr=False)
    eigenfunction: np.ndarray = field(repr=False)
    truncation: dict = field(default_factory=dict)
    error_estimate: float = 0.0
    n_grid: int = 0
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict, repr=False)

    @property
    def value(self) -> float:
        return self.eigenvalue


# -- log densities in the auxiliary coordinate --------------------------------


def _gl_nodes(lo, hi):
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (_GL_X + 1.0), half * _GL_W


class _LogDensities:
    """``log mu_s`` and ``log nu_s`` on ``[s_lo, s_hi]`` without the measure tables."""

    def __init__(self, problem: DiffusionProblem, s_lo: float, s_hi: float, cell: float = 0.05):
        self.problem = problem
        self.smap = problem.smap
        self.base = problem._state.get("dual_of")
        if self.base is not None:
            self.inner = _LogDensities(self.base, s_lo, s_hi, cell)
            return
        self.inner = None
        if not problem.from_coefficients:
            return
        lo, hi = min(s_lo, 0.0), max(s_hi, 0.0)
        left = np.linspace(lo, 0.0, max(2, int(math.ceil(-lo / cell)) + 1))
        right = np.linspace(0.0, hi, max(2, int(math.ceil(hi / cell)) + 1))
        self.nodes = np.concatenate([left, right[1:]])
        k0 = len(left) - 1
        inc = self._drift_integral(self.nodes[:-1], self.nodes[1:])
        c = np.zeros(len(self.nodes))
        c[k0 + 1 :] = np.cumsum(inc[k0:])
        c[:k0] = -np.cumsum(inc[:k0][::-1])[::-1]
        self.c_nodes = c

    def _drift_integral(self, lo, hi):
        """``int b/a dx`` over ``(x(lo), x(hi))`` for arrays of s-intervals."""
        pts, w = _gl_nodes(lo, hi)
        x = self.smap.x(pts)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = self.problem.b_at(x) / self.problem.a_at(x) * np.exp(self.smap.log_dx(pts))
        vals = np.broadcast_to(vals, pts.shape)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("b/a is not locally integrable on the grid")
        return np.sum(vals * w, axis=-1)

    def potential(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.nodes, s, side="right") - 1, 0, len(self.nodes) - 2)
        return self.c_nodes[k] + self._drift_integral(self.nodes[k], s)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.inner is not None:
            lmu, lnu = self.inner(s)
            return lnu, lmu
        x = self.smap.x(s)
        ldx = self.smap.log_dx(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.problem.from_coefficients:
                c = self.potential(s)
                lmu = c - np.log(self.problem.a_at(x)) + ldx
                lnu = -c + ldx
            else:
                lmu = np.log(self.problem.mu(x)) + ldx
                lnu = np.log(self.problem.nu(x)) + ldx
        return lmu, lnu


# -- truncation ---------------------------------------------------------------


def _tail_cut(problem: DiffusionProblem, table, side: int, eps: float):
    """s where the tail of ``table`` beyond it has mass ``eps``."""
    br = table.breaks
    if side > 0:
        tail = table.cum_right
        lo, hi = 0.0, float(br[-1])
        if tail(hi) > eps:
            raise TruncationError("right tail mass stays above tail_eps over the tabulated range")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if tail(mid) > eps:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12:
                break
        return hi, float(tail(hi))
    tail = table.cum_left
    lo, hi = float(br[0]), 0.0
    if tail(lo) > eps:
        raise TruncationError("left tail mass stays above tail_eps over the tabulated range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tail(mid) > eps:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12:
            break
    return lo, float(tail(lo))


def truncate_domain(problem: DiffusionProblem, case, tail_eps: float = 1e-10):
    """Replace infinite endpoints by finite cuts with negligible tail mass.

    N-type ends use the ``mu`` tail and D-type ends the ``nu`` tail, falling
    back to the other measure where the preferred tail is infinite.  The cut
    keeps the boundary code of the end.

    Returns
    -------
    (DiffusionProblem, dict)
        The restricted problem and a report ``{"left": ..., "right": ...}``
        with the cut point, the measure used and the dropped mass per cut end.
    """
    if not tail_eps > 0:
        raise ValueError("tail_eps must be positive")
    case = BoundaryCase.parse(case)
    left, right = problem.left, problem.right
    if math.isfinite(left) and math.isfinite(right):
        return problem, {}
    T = problem.tables
    report = {}
    cuts = {}
    for side, code, end in ((-1, case.left_code, left), (+1, case.right_code, right)):
        if math.isfinite(end):
            continue
        order = [("mu", T.mu), ("nu", T.nu)] if code == "N" else [("nu", T.nu), ("mu", T.mu)]
        finite = [(n, t) for n, t in order if (t.right_finite if side > 0 else t.left_finite)]
        if not finite:
            raise TruncationError(f"both tails are infinite at the {'right' if side > 0 else 'left'} end")
        name, table = finite[0]
        s_cut, dropped = _tail_cut(problem, table, side, tail_eps)
        x_cut = float(problem.smap.x(s_cut))
        if not math.isfinite(x_cut) or abs(x_cut) > MAX_CUT:
            raise TruncationError(
                f"the {name} tail decays too slowly (cut at |x| > {MAX_CUT:g}); give finite bounds manually"
            )
        key = "right" if side > 0 else "left"
        cuts[key] = x_cut
        report[key] = {"cut": x_cut, "measure": name, "dropped": dropped}
    new_left = cuts.get("left", left)
    new_right = cuts.get("right", right)
    return problem.with_interval(new_left, new_right), report


# -- discretization -----------------------------------------------------------


def _s_range(problem: DiffusionProblem):
    smap = problem.smap
    if not (math.isfinite(problem.left) and math.isfinite(problem.right)):
        raise ValueError("the eigensolver needs a finite interval; truncate the domain first")
    lo, hi = -END_S, END_S
    if problem.left != 0.0:
        lo = max(lo, float(smap.s(problem.left + END_RTOL * abs(problem.left))))
    if problem.right != 0.0:
        hi = min(hi, float(smap.s(problem.right - END_RTOL * abs(problem.right))))
    return lo, hi


def _log_cell_mass(dens, lo, hi, which: int, max_width: float = 0.1):
    """Log masses of the cells ``[lo, hi]``, composite Gauss-Legendre in ``s``.

    Cells wider than ``max_width`` are split; wide cells occur where the
    Liouville nodes are sparse in ``s`` (near an end on the logistic map).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = lo.size
    k = np.maximum(1, np.ceil((hi - lo) / max_width)).astype(int)
    owner = np.repeat(np.arange(m), k)
    j = np.arange(owner.size) - np.repeat(np.cumsum(k) - k, k)
    step = np.repeat((hi - lo) / k, k)
    a = np.repeat(lo, k) + j * step
    b = np.where(j == np.repeat(k, k) - 1, np.repeat(hi, k), a + step)
    pts, w = _gl_nodes(a, b)
    ld = dens(pts)[which]
    with np.errstate(divide="ignore"):
        sub = logsumexp(ld + np.log(w), axis=-1)
    if owner.size == m:
        return sub
    top = np.full(m, -np.inf)
    np.maximum.at(top, owner, sub)
    shift = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tot = np.bincount(owner, weights=np.exp(sub - shift[owner]), minlength=m)
        return shift + np.log(tot)


def _liouville_nodes(dens, s_lo: float, s_hi: float, n: int):
    fine = np.linspace(s_lo, s_hi, FINE_POINTS)
    lmu, lnu = dens(fine)
    g = np.exp(0.5 * (lmu + lnu))
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise CoefficientError("densities are not finite and positive on the grid")
    t = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(fine))])
    inv = PchipInterpolator(t, fine)
    # nodes and cell midpoints, both uniform in the Liouville coordinate
    both = inv(np.linspace(0.0, t[-1], 2 * n + 1))
    both[0], both[-1] = s_lo, s_hi
    both = np.maximum.accumulate(both)
    return both[::2], both[1::2], float(t[-1])


@dataclass
class _Discrete:
    eigenvalue: float
    nodes_s: np.ndarray
    x: np.ndarray
    g: np.ndarray
    length: float
    lowest: float


def _solve(problem: DiffusionProblem, case: BoundaryCase, n: int, dens=None) -> _Discrete:
    s_lo, s_hi = _s_range(problem)
    if dens is None:
        dens = _LogDensities(problem, s_lo, s_hi)
    s, mid, length = _liouville_nodes(dens, s_lo, s_hi, n)
    log_cond = -_log_cell_mass(dens, s[:-1], s[1:], 1)
    half_l = _log_cell_mass(dens, s[:-1], mid, 0)
    half_r = _log_cell_mass(dens, mid, s[1:], 0)
    log_m = np.empty(n + 1)
    log_m[0], log_m[-1] = half_l[0], half_r[-1]
    log_m[1:-1] = np.logaddexp(half_r[:-1], half_l[1:])
    if not (np.all(np.isfinite(log_cond)) and np.all(np.isfinite(log_m))):
        raise CoefficientError("indefinite assembly: a cell mass is zero or infinite")
    # diagonal gets both neighbouring conductances, also towards dropped Dirichlet nodes
    diag = np.zeros(n + 1)
    diag[:-1] += np.exp(log_cond - log_m[:-1])
    diag[1:] += np.exp(log_cond - log_m[1:])
    off = -np.exp(log_cond - 0.5 * (log_m[:-1] + log_m[1:]))
    keep = np.ones(n + 1, dtype=bool)
    if case.left_code == "D":
        keep[0] = False
    if case.right_code == "D":
        keep[-1] = False
    idx = np.flatnonzero(keep)
    d = diag[idx]
    e = off[idx[:-1]]
    k = 1 if str(case) == "NN" else 0
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k), lapack_driver="stebz")
    lam = float(vals[k])
    lowest = float(vals[0])
    if str(case) == "NN":
        floor = 1e3 * np.finfo(float).eps * float(np.max(np.abs(d)))
        if not abs(lowest) < max(1e-8 * lam, floor):
            raise OracleError(f"NN constant mode not separated: lowest discrete eigenvalue {lowest:g}")
    v = vecs[:, k]
    with np.errstate(divide="ignore"):
        logu = np.log(np.abs(v)) - 0.5 * log_m[idx]
    u = np.sign(v) * np.exp(logu - np.max(logu))
    g = np.zeros(n + 1)
    g[idx] = u
    # fix the sign so the largest excursion is positive
    if g[np.argmax(np.abs(g))] < 0:
        g = -g
    return _Discrete(lam, s, problem.smap.x(s), g, length, lowest)


def solve_eigen_fd(problem: DiffusionProblem, case, n_grid: int = 1024, *, richardson: bool = True) -> EigenEstimate:
    """Principal eigenvalue ``lambda^case`` on a finite interval.

    Solves with ``n_grid`` and ``2 n_grid`` cells; the reported value is the
    Richardson combination and ``error_estimate = |lambda_2n - lambda_n| / 3``.
    NN returns the smallest nonzero eigenvalue.
    """
    case = BoundaryCase.parse(case)
    if n_grid < 64:
        raise ValueError("n_grid must be at least 64")
    s_lo, s_hi = _s_range(problem)
    dens = _LogDensities(problem, s_lo, s_hi)
    coarse = _solve(problem, case, n_grid, dens)
    flags = []
    if richardson:
        fine = _solve(problem, case, 2 * n_grid, dens)
        lam = (4.0 * fine.eigenvalue - coarse.eigenvalue) / 3.0
        err = abs(fine.eigenvalue - coarse.eigenvalue) / 3.0
        best = fine
    else:
        lam, err, best = coarse.eigenvalue, math.nan, coarse
    if lam < 0:
        raise OracleError(f"negative principal eigenvalue {lam:g}")
    g = best.g
    if str(case) == "NN":
        signs = np.sign(g[g != 0])
        if np.count_nonzero(np.diff(signs)) != 1:
            flags.append("eigenfunction-not-single-crossing")
    else:
        for code, val in ((case.left_code, g[0]), (case.right_code, g[-1])):
            if code == "D" and abs(val) > 1e-12:
                flags.append("dirichlet-end-nonzero")
    details = {"coarse": coarse.eigenvalue, "fine": best.eigenvalue, "liouville_length": best.length,
               "lowest": best.lowest}
    return EigenEstimate(lam, case, best.x, g, {}, err, n_grid, flags, details)


def estimate_eigenvalue(problem: DiffusionProblem, case, n_grid: int = 1024, tail_eps: float = 1e-10, *,
                        extrapolate: bool = True) -> EigenEstimate:
    """:func:`solve_eigen_fd` after :func:`truncate_domain`.

    With ``extrapolate`` the domain is also cut at ``tail_eps**2`` and the
    two values are combined as ``lambda(l) ~ lambda + c / l**2`` in the
    Liouville length ``l``.  This is exact for the usual square-well
    approach to the bottom of a continuous spectrum and changes nothing when
    the tails are already negligible.
    """
    case = BoundaryCase.parse(case)
    finite = math.isfinite(problem.left) and math.isfinite(problem.right)
    cut1, rep1 = truncate_domain(problem, case, tail_eps)
    est = solve_eigen_fd(cut1, case, n_grid)
    est.truncation = {"tail_eps": tail_eps, "cuts": rep1, "raw": est.eigenvalue}
    if finite or not extrapolate:
        return est
    eps2 = tail_eps * tail_eps
    cut2, rep2 = truncate_domain(problem, case, eps2)
    est2 = solve_eigen_fd(cut2, case, n_grid)
    l1, l2 = est.details["liouville_length"], est2.details["liouville_length"]
    lam1, lam2 = est.eigenvalue, est2.eigenvalue
    if l2 > l1 * (1 + 1e-9):
        lam = (l2 * l2 * lam2 - l1 * l1 * lam1) / (l2 * l2 - l1 * l1)
    else:
        lam = lam2
    est2.truncation = {"tail_eps": tail_eps, "cuts": rep1, "cuts_fine": rep2, "raw": lam1, "raw_fine": lam2,
                       "lengths": (l1, l2), "shift": lam - lam2}
    est2.eigenvalue = max(lam, 0.0)
    est2.error_estimate = max(est.error_estimate, est2.error_estimate)
    return est2


# -- Rayleigh quotients -------------------------------------------------------


class DivergenceError(ValueError):
    """Dirichlet form or norm of a test function is infinite."""


class ConstraintError(ValueError):
    """Test function does not satisfy a Dirichlet boundary condition."""


def _as_function(f) -> Callable:
    if isinstance(f, str):
        from .expr import compile_expr

        return compile_expr(f)
    return f


def _derivative_s(fun_s: Callable, s: np.ndarray, h: float = 1e-3) -> np.ndarray:
    return (8.0 * (fun_s(s + h) - fun_s(s - h)) - (fun_s(s + 2 * h) - fun_s(s - 2 * h))) / (12.0 * h)


def rayleigh_quotient(problem: DiffusionProblem, case, f, df: Optional[Callable] = None, *,
                      breakpoints=(), cell: float = 0.05, d_tol: float = 1e-6) -> float:
    """``D(f) / ||f||^2_mu`` with ``D(f) = int f'^2 / nu dx``.

    ``f`` is a callable in ``x``, an expression string or a test function
    object; ``df`` is its ``x``-derivative (a five-point difference in the
    auxiliary coordinate is used otherwise).  For NN ``f`` is centered first.
    Dirichlet ends require ``|f| <= d_tol * max |f|`` there.
    """
    case = BoundaryCase.parse(case)
    fun = _as_function(f)
    smap = problem.smap
    tables = problem.tables
    s_lo, s_hi = float(tables.breaks[0]), float(tables.breaks[-1])
    if math.isfinite(problem.left) and problem.left != 0.0:
        s_lo = max(s_lo, float(smap.s(problem.left + END_RTOL * abs(problem.left))))
    if math.isfinite(problem.right) and problem.right != 0.0:
        s_hi = min(s_hi, float(smap.s(problem.right - END_RTOL * abs(problem.right))))
    dens = _LogDensities(problem, s_lo, s_hi, cell)
    extra = np.asarray(smap.s(np.asarray(breakpoints, dtype=float)), dtype=float).reshape(-1)
    n_cells = int(math.ceil((s_hi - s_lo) / cell))
    edges = np.union1d(np.linspace(s_lo, s_hi, n_cells + 1), extra[(extra > s_lo) & (extra < s_hi)])
    pts, w = _gl_nodes(edges[:-1], edges[1:])
    lmu, lnu = dens(pts)
    x = smap.x(pts)
    with np.errstate(all="ignore"):
        fv = np.asarray(fun(x), dtype=float) * np.ones_like(pts)
        if df is not None:
            dfs = np.asarray(df(x), dtype=float) * np.exp(smap.log_dx(pts))
        else:
            dfs = _derivative_s(lambda ss: np.asarray(fun(smap.x(ss)), dtype=float) * np.ones_like(ss), pts)
        mu_w = np.exp(lmu) * w
        dir_cells = np.sum(dfs**2 * np.exp(-lnu) * w, axis=-1)
        if str(case) == "NN":
            mass = float(np.sum(mu_w))
            if not (math.isfinite(mass) and tables.mu.left_finite and tables.mu.right_finite):
                raise DivergenceError("NN centering needs a finite speed measure")
            fv = fv - float(np.sum(fv * mu_w)) / mass
        norm_cells = np.sum(fv**2 * mu_w, axis=-1)
    for cells, what in ((dir_cells, "Dirichlet form"), (norm_cells, "norm")):
        total = float(np.sum(cells))
        if not math.isfinite(total):
            raise DivergenceError(f"the {what} of the test function is not finite")
        edge = float(cells[0] + cells[-1])
        # mass piling up at an infinite end means the integral keeps growing
        if total > 0 and edge > 1e-8 * total:
            open_left = not math.isfinite(problem.left)
            open_right = not math.isfinite(problem.right)
            if (open_left and cells[0] > 1e-8 * total) or (open_right and cells[-1] > 1e-8 * total):
                raise DivergenceError(f"the {what} of the test function does not converge at the ends")
    scale = float(np.max(np.abs(fv)))
    for code, end_s, end in ((case.left_code, s_lo, problem.left), (case.right_code, s_hi, problem.right)):
        if code != "D":
            continue
        nu_tail_finite = tables.nu.left_finite if end_s == s_lo else tables.nu.right_finite
        if not (math.isfinite(end) or nu_tail_finite):
            continue
        xe = end if math.isfinite(end) else smap.x(end_s)
        with np.errstate(all="ignore"):
            val = float(np.asarray(fun(np.asarray(xe, dtype=float))))
        if not math.isfinite(val):
            val = float(np.asarray(fun(smap.x(np.asarray(end_s)))))
        if abs(val) > d_tol * max(scale, 1e-300):
            raise ConstraintError(f"test function is {val:g} at a Dirichlet end")
    dform = float(np.sum(dir_cells))
    norm = float(np.sum(norm_cells))
    if norm <= 0:
        raise DivergenceError("test function has zero norm")
    return dform / norm
