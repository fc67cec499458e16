"""Speed and scale measures of a one-dimensional diffusion.

For ``L = a d^2/dx^2 + b d/dx`` on ``(left, right)`` with reference point
``theta`` we use

* the potential ``C(x) = int_theta^x b/a``,
* the speed measure ``mu(dx) = exp(C)/a dx``,
* the scale measure ``nu(dx) = exp(-C) dx``,

so that ``L = d/dmu d/dnu``.  Everything is tabulated once per problem in an
auxiliary coordinate ``s`` (``s = 0`` at ``theta``) that sends both endpoints
to ``-inf``/``+inf``.  Each density is stored as Chebyshev panels with exact
antiderivatives, which gives cheap, smooth and vectorized cumulative masses.
Tails are marched outward until each one is known to be finite (the rest is
negligible and extrapolated) or infinite.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as Cheb
from scipy import integrate, special

from . import cheb
from .expr import compile_expr

log = logging.getLogger(__name__)

__all__ = [
    "CoefficientError",
    "QuadratureError",
    "CoordinateMap",
    "DensityTable",
    "MeasureTables",
    "DiffusionProblem",
    "potential_C",
    "mu_mass",
    "nu_mass",
    "dualize",
]

CORE = 3.0
PANEL_WIDTH = 0.5
CHUNK = 8
MAX_DEPTH = 12
S_CAP = 400.0
FINITE_RTOL = 1e-30
INFINITE_RATIO = 1e12
SEARCH_RTOL = 1e-15
# keep searched points where x - endpoint still has about six correct digits
ENDPOINT_RTOL = 1e-10
MIN_INFINITE_S = 30.0
LOG_OVERFLOW = 600.0
MAX_LOG_RANGE = 5.0
REF_HALF_WIDTH = 0.5


class CoefficientError(ValueError):
    """Raised when ``a`` is not positive or the coefficients are not finite."""


class QuadratureError(RuntimeError):
    """Raised when a density cannot be tabulated."""


def _as_vectorized(fn: Callable) -> Callable:
    def g(x):
        x = np.asarray(x, dtype=float)
        try:
            out = np.asarray(fn(x), dtype=float)
            if out.shape == x.shape:
                return out
            if out.ndim == 0:
                return np.full(x.shape, float(out))
        except (TypeError, ValueError):
            pass
        return np.array([float(fn(float(v))) for v in x.ravel()]).reshape(x.shape)

    return g


def _coerce(fn):
    if fn is None:
        return None
    if isinstance(fn, str):
        return compile_expr(fn)
    if isinstance(fn, (int, float)):
        value = float(fn)
        return lambda x: np.full(np.shape(x), value) if np.ndim(x) else value
    return _as_vectorized(fn)


# -- coordinate map ----------------------------------------------------------


@dataclass(frozen=True)
class CoordinateMap:
    """Smooth increasing bijection ``s -> x`` from the real line onto the interval.

    ``x(0) = theta``.  Half-lines use exponentials, the whole line uses
    ``sinh`` and bounded intervals a logistic map, so power-law and
    exponential tails of the densities decay at least geometrically in ``s``.
    """

    left: float
    right: float
    theta: float
    scale: float = 1.0

    @property
    def kind(self) -> str:
        lf, rf = math.isfinite(self.left), math.isfinite(self.right)
        if lf and rf:
            return "finite"
        if lf:
            return "left"
        if rf:
            return "right"
        return "line"

    @property
    def _s0(self) -> float:
        w = self.right - self.left
        return math.log((self.theta - self.left) / w) - math.log((self.right - self.theta) / w)

    def x(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        with np.errstate(over="ignore"):
            if k == "line":
                return self.theta + self.scale * np.sinh(s)
            if k == "left":
                return self.left + (self.theta - self.left) * np.exp(s)
            if k == "right":
                return self.right - (self.right - self.theta) * np.exp(-s)
            u = s + self._s0
            w = self.right - self.left
            return np.where(u > 0, self.right - w * special.expit(-u), self.left + w * special.expit(u))

    def log_dx(self, s):
        """``log dx/ds``."""
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k == "line":
            a = np.abs(s)
            return math.log(self.scale) + a + np.log1p(np.exp(-2 * a)) - math.log(2.0)
        if k == "left":
            return math.log(self.theta - self.left) + s
        if k == "right":
            return math.log(self.right - self.theta) - s
        u = s + self._s0
        return math.log(self.right - self.left) + special.log_expit(u) + special.log_expit(-u)

    def s(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == "line":
                out = np.arcsinh((x - self.theta) / self.scale)
            elif k == "left":
                out = np.log((x - self.left) / (self.theta - self.left))
            elif k == "right":
                out = -np.log((self.right - x) / (self.right - self.theta))
            else:
                out = np.log(x - self.left) - np.log(self.right - x) - self._s0
        out = np.where(x <= self.left, -np.inf, out)
        out = np.where(x >= self.right, np.inf, out)
        return out


# -- one tabulated density ---------------------------------------------------

_END_WEIGHTS = np.array([2.0 / (1 - j * j) if j % 2 == 0 else 0.0 for j in range(cheb.ORDER)])


def _trend_rest(logv: np.ndarray, s: np.ndarray, end: float, outward: int) -> float:
    """Extrapolated mass beyond ``end`` from one boundary panel (inf if not decaying)."""
    order = np.argsort(outward * s)
    lv, ss = logv[order], s[order]
    inner, outer = lv[0], lv[-1]
    if not np.isfinite(outer):
        return 0.0 if outer == -np.inf else math.inf
    dist = abs(ss[-1] - ss[0])
    k = (inner - outer) / dist if dist > 0 else 0.0
    if not np.isfinite(k) or k <= 1e-8:
        return math.inf
    return float(np.exp(outer - k * abs(end - ss[-1])) / k)


class DensityTable:
    """Chebyshev panels of one nonnegative density in ``s`` with cumulative masses."""

    def __init__(self, breaks: np.ndarray, values: np.ndarray, left_rest: float, right_rest: float):
        self.breaks = breaks
        self.width = np.diff(breaks)
        finite = np.isfinite(values)
        self.bad = ~np.all(finite, axis=1)
        values = np.where(finite, values, np.nan)
        self.coef = cheb.coefficients(values)
        self.anti = cheb.antiderivative(self.coef, self.width)
        self.anti_r = Cheb.chebint(self.coef, lbnd=1, axis=-1) * (self.width[:, None] / 2.0)
        self.panel_mass = 0.5 * self.width * (self.coef @ _END_WEIGHTS)
        self.left_rest = float(left_rest)
        self.right_rest = float(right_rest)
        if self.bad.any():
            bad = np.flatnonzero(self.bad)
            # nonfinite values only happen far out on a side that is then infinite
            if bad[0] > len(self.panel_mass) // 2:
                self.right_rest = math.inf
            else:
                self.left_rest = math.inf
            if bad[0] <= len(self.panel_mass) // 2 < bad[-1]:
                self.right_rest = math.inf
        m = np.where(self.bad, np.nan, self.panel_mass)
        with np.errstate(invalid="ignore"):
            self.left_prefix = self.left_rest + np.concatenate([[0.0], np.cumsum(m)])
            self.right_suffix = self.right_rest + np.concatenate([np.cumsum(m[::-1])[::-1], [0.0]])
        # signed mass from s = 0, accumulated outward so huge tails do not swamp it
        k0 = min(int(np.searchsorted(breaks, 0.0)), len(m))
        right = np.cumsum(m[k0:])
        left = -np.cumsum(m[:k0][::-1])[::-1]
        self.anchor = np.concatenate([left, [0.0], right])

    @property
    def left_finite(self) -> bool:
        return math.isfinite(self.left_rest)

    @property
    def right_finite(self) -> bool:
        return math.isfinite(self.right_rest)

    @property
    def total(self) -> float:
        return float(self.left_prefix[-1] + self.right_rest)

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0, len(self.width) - 1)
        t = np.clip(2.0 * (s - self.breaks[idx]) / self.width[idx] - 1.0, -1.0, 1.0)
        return s, idx, t

    def density(self, s):
        s, idx, t = self._locate(s)
        return cheb.clenshaw(self.coef[idx], t)

    def cum_left(self, s):
        """Mass of ``(left, s)``."""
        s, idx, t = self._locate(s)
        with np.errstate(invalid="ignore"):
            out = self.left_prefix[idx] + cheb.clenshaw(self.anti[idx], t)
            out = np.where(s == -np.inf, 0.0, out)
            out = np.where(s == np.inf, self.total, out)
        return np.where(np.isnan(out), np.inf, out)

    def cum_right(self, s):
        """Mass of ``(s, right)``."""
        s, idx, t = self._locate(s)
        with np.errstate(invalid="ignore"):
            out = self.right_suffix[idx + 1] - cheb.clenshaw(self.anti_r[idx], t)
            out = np.where(s == np.inf, 0.0, out)
            out = np.where(s == -np.inf, self.total, out)
        return np.where(np.isnan(out), np.inf, out)

    def anchored(self, s):
        """Signed mass of ``(0, s)``."""
        s, idx, t = self._locate(s)
        return self.anchor[idx] + cheb.clenshaw(self.anti[idx], t)

    def mass(self, s, t):
        """Mass of ``(s, t)`` for ``s <= t``; uses the best-conditioned difference."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        s, t = np.broadcast_arrays(s, t)
        with np.errstate(invalid="ignore"):
            L1, L0 = self.cum_left(t), self.cum_left(s)
            R0, R1 = self.cum_right(s), self.cum_right(t)
            A1, A0 = self.anchored(np.clip(t, self.breaks[0], self.breaks[-1])), self.anchored(
                np.clip(s, self.breaks[0], self.breaks[-1])
            )
            cands = np.stack([L1 - L0, R0 - R1, A1 - A0])
            scale = np.stack([np.abs(L1), np.abs(R0), np.maximum(np.abs(A0), np.abs(A1))])
            # unbounded ends must go through the tail-aware forms
            scale[2] = np.where(np.isfinite(s) & np.isfinite(t), scale[2], np.inf)
            scale = np.where(np.isfinite(cands), scale, np.inf)
            pick = np.argmin(scale, axis=0)
            out = np.take_along_axis(cands, pick[None], axis=0)[0]
            inf_left = (s == -np.inf) & (not self.left_finite)
            inf_right = (t == np.inf) & (not self.right_finite)
            out = np.where(np.all(~np.isfinite(scale), axis=0) | inf_left | inf_right, np.inf, out)
        out = np.where(s >= t, 0.0, np.maximum(out, 0.0))
        return out if out.ndim else float(out)


# -- tabulation of a problem -------------------------------------------------


@dataclass
class _Panels:
    lo: np.ndarray
    hi: np.ndarray
    s: np.ndarray
    x: np.ndarray
    log_dx: np.ndarray
    log_a: Optional[np.ndarray]
    c_local: Optional[np.ndarray]  # C relative to the panel's left end
    dC: Optional[np.ndarray]
    lmu: np.ndarray  # log densities (relative if c_local is not None)
    lnu: np.ndarray
    ok: np.ndarray

    def take(self, mask):
        return _Panels(
            *[None if v is None else v[mask] for v in (self.lo, self.hi, self.s, self.x, self.log_dx, self.log_a,
                                                       self.c_local, self.dC, self.lmu, self.lnu, self.ok)]
        )

    @staticmethod
    def concat(parts):
        def cat(name):
            vals = [getattr(p, name) for p in parts]
            if vals[0] is None:
                return None
            return np.concatenate(vals)

        return _Panels(*[cat(n) for n in ("lo", "hi", "s", "x", "log_dx", "log_a", "c_local", "dC", "lmu", "lnu",
                                          "ok")])


class _Tabulator:
    """Builds panel tables by marching outward from ``s = 0``."""

    def __init__(self, smap: CoordinateMap, a_fn=None, b_fn=None, mu_fn=None, nu_fn=None):
        self.smap = smap
        self.a_fn, self.b_fn = a_fn, b_fn
        self.mu_fn, self.nu_fn = mu_fn, nu_fn
        self.coeff = a_fn is not None
        self.unresolved = 0

    def _sample(self, lo, hi) -> _Panels:
        w = hi - lo
        s = lo[:, None] + 0.5 * (cheb.NODES[None, :] + 1.0) * w[:, None]
        x = self.smap.x(s)
        ldx = self.smap.log_dx(s)
        valid = np.all(np.isfinite(x) & (x > self.smap.left) & (x < self.smap.right) & np.isfinite(ldx), axis=1)
        valid &= np.all(np.diff(x[:, ::-1], axis=1) > 0, axis=1)
        xs = np.where(valid[:, None], x, self.smap.theta)
        with np.errstate(all="ignore"):
            if self.coeff:
                a = self.a_fn(xs)
                b = self.b_fn(xs)
                bad_a = valid[:, None] & ~(a > 0)
                if np.any(bad_a):
                    i, j = np.argwhere(bad_a)[0]
                    raise CoefficientError(f"a(x) must be positive, got a({xs[i, j]!r}) = {a[i, j]!r}")
                g = b / a * np.exp(ldx)
                if np.any(valid[:, None] & ~np.isfinite(g)):
                    i, j = np.argwhere(valid[:, None] & ~np.isfinite(g))[0]
                    raise CoefficientError(f"b/a is not finite at x = {xs[i, j]!r}")
                gc = cheb.coefficients(np.where(valid[:, None], g, 0.0))
                anti = cheb.antiderivative(gc, w)
                c_local = cheb.clenshaw(anti[:, None, :].repeat(cheb.ORDER, 1), np.broadcast_to(cheb.NODES, s.shape))
                dC = cheb.value_at_ends(anti)[1]
                log_a = np.log(a)
                lmu = c_local - log_a + ldx
                lnu = -c_local + ldx
                ok = cheb.resolved(gc) | (np.max(np.abs(gc), axis=1) * w < 1e-12)
            else:
                mu = self.mu_fn(xs)
                nu = self.nu_fn(xs)
                if np.any(valid[:, None] & ((mu < 0) | (nu < 0) | np.isnan(mu) | np.isnan(nu))):
                    raise CoefficientError("densities must be nonnegative and finite")
                lmu = np.log(mu) + ldx
                lnu = np.log(nu) + ldx
                log_a = None
                c_local = None
                dC = None
                ok = np.ones(len(lo), dtype=bool)
        span = np.zeros(len(lo))
        for ld in (lmu, lnu):
            top = np.max(ld, axis=1)
            lo_clip = np.maximum(ld, top[:, None] - 60.0)
            rng = top - np.min(lo_clip, axis=1)
            finite_top = np.isfinite(top)
            rel = np.exp(ld - np.where(finite_top, top, 0.0)[:, None])
            rel = np.where(np.isfinite(rel), rel, 0.0)
            ok &= ~finite_top | ((rng <= MAX_LOG_RANGE) & cheb.resolved(cheb.coefficients(rel)))
            span = np.maximum(span, np.where(finite_top, rng, 0.0))
        return _Panels(lo, hi, s, x, ldx, log_a, c_local, dC, lmu, lnu, ok), valid, span

    def resolve(self, lo, hi) -> _Panels:
        """Sample candidate panels and split unresolved ones; returns sorted panels."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        depth = 0
        done = []
        while len(lo):
            p, valid, span = self._sample(lo, hi)
            # panels that cannot be resolved within the depth limit are kept and
            # flagged; marching stops in front of them
            hopeless = span > MAX_LOG_RANGE * 2.0 ** (MAX_DEPTH - depth)
            keep = p.ok | ~valid | hopeless | (depth >= MAX_DEPTH)
            good = p.ok & valid
            kept = p.take(keep)
            kept.ok = good[keep]
            done.append(kept)
            split = ~keep
            mid = 0.5 * (lo[split] + hi[split])
            lo, hi = np.concatenate([lo[split], mid]), np.concatenate([mid, hi[split]])
            depth += 1
        out = _Panels.concat(done)
        order = np.argsort(out.lo)
        return out.take(order)


@dataclass
class _SideState:
    status: list  # per measure: None | "finite" | "infinite"
    rest: list
    cum: list


def _panel_masses(logd: np.ndarray, w: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.exp(logd)
    c = cheb.coefficients(np.where(np.isfinite(v), v, np.inf))
    return 0.5 * w * (c @ _END_WEIGHTS)


class MeasureTables:
    """Panel tables of ``mu`` and ``nu`` (and derived densities) for one problem."""

    def __init__(self, smap, breaks, s_nodes, x_nodes, log_mu, log_nu, c_nodes, mu, nu, core_mass, search,
                 unresolved=0):
        self.smap = smap
        self.breaks = breaks
        self.s_nodes = s_nodes
        self.x_nodes = x_nodes
        self.log_mu = log_mu
        self.log_nu = log_nu
        self.c_nodes = c_nodes
        self.c_coef = None if c_nodes is None else cheb.coefficients(c_nodes)
        self.mu = mu
        self.nu = nu
        self.core_mass = core_mass
        self.search = search
        self.unresolved = unresolved
        self._derived: dict = {}
        self._lock = threading.RLock()

    # construction ---------------------------------------------------------

    @classmethod
    def build(cls, smap: CoordinateMap, a_fn=None, b_fn=None, mu_fn=None, nu_fn=None) -> "MeasureTables":
        tab = _Tabulator(smap, a_fn, b_fn, mu_fn, nu_fn)
        n_core = int(round(CORE / PANEL_WIDTH))
        edges = np.arange(n_core + 1) * PANEL_WIDTH
        core_r = tab.resolve(edges[:-1], edges[1:])
        core_l = tab.resolve(-edges[1:][::-1], -edges[:-1][::-1])
        if not (core_r.ok.all() and core_l.ok.all()):
            # a bad core is fatal: the reference region must be resolvable
            raise QuadratureError("coefficients cannot be evaluated near the reference point")
        coeff = tab.coeff

        def globalize(p: _Panels, c_edge: float, direction: int):
            """Attach global C to panels ordered outward; returns new edge value."""
            if not coeff:
                return c_edge
            order = np.arange(len(p.lo)) if direction > 0 else np.arange(len(p.lo))[::-1]
            c_left = np.empty(len(p.lo))
            c = c_edge
            for i in order:
                if direction > 0:
                    c_left[i] = c
                    c = c + p.dC[i]
                else:
                    c = c - p.dC[i]
                    c_left[i] = c
            cn = c_left[:, None] + p.c_local
            p.lmu = cn - p.log_a + p.log_dx
            p.lnu = -cn + p.log_dx
            p.c_local = cn
            return c

        globalize(core_r, 0.0, +1)
        globalize(core_l, 0.0, -1)
        # reference masses come from |s| <= REF_HALF_WIDTH, where nothing extreme happens
        near_l = core_l.take(core_l.lo >= -REF_HALF_WIDTH)
        near_r = core_r.take(core_r.hi <= REF_HALF_WIDTH)
        core_w = np.concatenate([near_l.hi - near_l.lo, near_r.hi - near_r.lo])
        core_mass = []
        for name in ("lmu", "lnu"):
            m = _panel_masses(np.concatenate([getattr(near_l, name), getattr(near_r, name)]), core_w)
            total = float(np.sum(m))
            if not np.isfinite(total) or total <= 0:
                raise QuadratureError("measure of the core region is not finite and positive")
            core_mass.append(total)

        sides = {}
        for direction, core in ((+1, core_r), (-1, core_l)):
            parts = []
            c_edge = float(np.sum(core.dC)) * direction if coeff else 0.0
            edge = CORE * direction
            state = _SideState([None, None], [0.0, 0.0], [0.0, 0.0])
            cum_core = []
            for name in ("lmu", "lnu"):
                cum_core.append(float(np.sum(_panel_masses(getattr(core, name), core.hi - core.lo))))
            state.cum = cum_core
            prev_density = [None, None]
            stop = False
            while not stop:
                if abs(edge) >= S_CAP:
                    break
                steps = np.arange(CHUNK + 1) * PANEL_WIDTH * direction + edge
                steps = np.clip(steps, -S_CAP, S_CAP)
                lo, hi = (steps[:-1], steps[1:]) if direction > 0 else (steps[1:], steps[:-1])
                keep = hi > lo
                p = tab.resolve(lo[keep], hi[keep])
                if direction < 0:
                    p = p.take(np.arange(len(p.lo))[::-1])
                invalid_hit = not p.ok.all()
                n_ok = int(np.argmin(p.ok)) if invalid_hit else len(p.lo)
                if invalid_hit:
                    tab.unresolved += 1
                p = p.take(np.arange(n_ok))
                if len(p.lo) == 0:
                    break
                # C must be accumulated in outward order here
                if coeff:
                    c_left = np.empty(len(p.lo))
                    c = c_edge
                    for i in range(len(p.lo)):
                        if direction > 0:
                            c_left[i] = c
                            c = c + p.dC[i]
                        else:
                            c = c - p.dC[i]
                            c_left[i] = c
                    c_edge = c
                    cn = c_left[:, None] + p.c_local
                    p.c_local = cn
                    p.lmu = cn - p.log_a + p.log_dx
                    p.lnu = -cn + p.log_dx
                w = p.hi - p.lo
                accept = len(p.lo)
                overflow = False
                for i in range(len(p.lo)):
                    if max(np.max(p.lmu[i]), np.max(p.lnu[i])) > 700.0:
                        accept = i
                        overflow = True
                        break
                    outer = p.hi[i] if direction > 0 else p.lo[i]
                    for k, name in enumerate(("lmu", "lnu")):
                        if state.status[k] is not None:
                            continue
                        ld = getattr(p, name)[i]
                        mass = float(_panel_masses(ld[None], w[i : i + 1])[0])
                        state.cum[k] += mass
                        dens = mass / w[i]
                        big = np.max(ld) > LOG_OVERFLOW or abs(outer) >= MIN_INFINITE_S
                        if state.cum[k] > INFINITE_RATIO * core_mass[k] and big:
                            state.status[k] = "infinite"
                            state.rest[k] = math.inf
                        elif dens < FINITE_RTOL * core_mass[k] and (
                            prev_density[k] is None or dens <= prev_density[k]
                        ):
                            state.status[k] = "finite"
                            state.rest[k] = _trend_rest(ld, p.s[i], outer, direction)
                            if not math.isfinite(state.rest[k]):
                                state.rest[k] = 0.0
                        prev_density[k] = dens
                    if all(st is not None for st in state.status):
                        accept = i + 1
                        stop = True
                        break
                p = p.take(np.arange(accept))
                if len(p.lo):
                    parts.append(p)
                    edge = p.hi[-1] if direction > 0 else p.lo[-1]
                if overflow or invalid_hit:
                    break
            # anything still unclassified is judged by its trend
            last = parts[-1] if parts else core
            li = -1 if (parts or direction > 0) else 0
            outer = edge
            for k, name in enumerate(("lmu", "lnu")):
                ld = getattr(last, name)[li]
                rest = _trend_rest(ld, last.s[li], outer, direction)
                if state.status[k] is None:
                    state.status[k] = "finite" if math.isfinite(rest) else "infinite"
                    state.rest[k] = rest
                elif state.status[k] == "finite":
                    # the march went on for the other measure: extrapolate from the final edge
                    state.rest[k] = rest if math.isfinite(rest) else 0.0
            sides[direction] = (parts, state)

        right_parts, rstate = sides[+1]
        left_parts, lstate = sides[-1]
        left_parts = [q.take(np.arange(len(q.lo))[::-1]) for q in left_parts[::-1]]
        allp = _Panels.concat(left_parts + [core_l, core_r] + right_parts)
        order = np.argsort(allp.lo)
        allp = allp.take(order)
        breaks = np.concatenate([allp.lo, allp.hi[-1:]])
        with np.errstate(over="ignore"):
            mu = DensityTable(breaks, np.exp(allp.lmu), lstate.rest[0], rstate.rest[0])
            nu = DensityTable(breaks, np.exp(allp.lnu), lstate.rest[1], rstate.rest[1])
        search = cls._search_range(breaks, (mu, nu), core_mass, smap)
        return cls(smap, breaks, allp.s, allp.x, allp.lmu, allp.lnu, allp.c_local if coeff else None, mu, nu,
                   tuple(core_mass), search, tab.unresolved)

    @staticmethod
    def _search_range(breaks, tables, core_mass, smap=None):
        lo_cands, hi_cands = [], []
        for tbl, m0 in zip(tables, core_mass):
            if tbl.left_finite:
                cl = tbl.cum_left(breaks)
                ok = np.flatnonzero(cl <= SEARCH_RTOL * m0)
                lo_cands.append(breaks[ok[-1]] if len(ok) else breaks[0])
            if tbl.right_finite:
                cr = tbl.cum_right(breaks)
                ok = np.flatnonzero(cr <= SEARCH_RTOL * m0)
                hi_cands.append(breaks[ok[0]] if len(ok) else breaks[-1])
        lo = min(lo_cands) if lo_cands else max(breaks[0], -60.0)
        hi = max(hi_cands) if hi_cands else min(breaks[-1], 60.0)
        lo = max(lo, -60.0 if not lo_cands else lo)
        if smap is not None:
            if math.isfinite(smap.left) and smap.left != 0.0:
                lo = max(lo, float(smap.s(smap.left + ENDPOINT_RTOL * abs(smap.left))))
            if math.isfinite(smap.right) and smap.right != 0.0:
                hi = min(hi, float(smap.s(smap.right - ENDPOINT_RTOL * abs(smap.right))))
        return float(lo), float(hi)

    # derived data ---------------------------------------------------------

    def swapped(self) -> "MeasureTables":
        """Tables of the dual problem (``mu`` and ``nu`` exchanged), sharing storage."""
        return MeasureTables(self.smap, self.breaks, self.s_nodes, self.x_nodes, self.log_nu, self.log_mu, None,
                             self.nu, self.mu, self.core_mass[::-1], self.search, self.unresolved)

    def log_nu_minus(self):
        with np.errstate(divide="ignore"):
            return np.log(self.nu.cum_left(self.s_nodes))

    def log_nu_plus(self):
        with np.errstate(divide="ignore"):
            return np.log(self.nu.cum_right(self.s_nodes))

    def derived(self, key, values: np.ndarray) -> DensityTable:
        """Table of an arbitrary nonnegative density given at the shared nodes, cached by ``key``."""
        with self._lock:
            if key in self._derived:
                return self._derived[key]
            tbl = self._make_table(self.breaks, self.s_nodes, values)
            if key is not None:
                self._derived[key] = tbl
            return tbl

    @staticmethod
    def _make_table(breaks, s_nodes, values) -> DensityTable:
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = np.log(values)
        rests = []
        for idx, end, outward in ((0, breaks[0], -1), (-1, breaks[-1], +1)):
            rests.append(_trend_rest(lv[idx], s_nodes[idx], end, outward) if np.all(np.isfinite(values[idx]))
                         else math.inf)
        return DensityTable(breaks, values, rests[0], rests[1])

    def composite(self, p: float, q: float) -> DensityTable:
        """Table of the density ``mu * nu_-^p * nu_+^q``."""
        key = ("mu", float(p), float(q))
        with self._lock:
            if key in self._derived:
                return self._derived[key]
        lv = self.log_mu.copy()
        with np.errstate(invalid="ignore"):
            if p:
                lv = lv + p * self.log_nu_minus()
            if q:
                lv = lv + q * self.log_nu_plus()
            with np.errstate(over="ignore"):
                v = np.exp(lv)
        v = np.where(np.isnan(v), np.inf, v)
        return self.derived(key, v)

    def refined(self, extra_breaks) -> "RefinedNodes":
        """Nodes of the panel partition with extra breakpoints inserted."""
        extra = np.unique(np.asarray([b for b in extra_breaks if self.breaks[0] < b < self.breaks[-1]], dtype=float))
        if len(extra) == 0:
            return RefinedNodes(self, self.breaks, self.s_nodes, self.log_mu, None)
        breaks = np.union1d(self.breaks, extra)
        w = np.diff(breaks)
        s = breaks[:-1, None] + 0.5 * (cheb.NODES[None, :] + 1.0) * w[:, None]
        with np.errstate(divide="ignore"):
            lmu = np.log(np.maximum(self.mu.density(s), 0.0))
        return RefinedNodes(self, breaks, s, lmu, extra)

    def potential(self, s):
        """Potential C at ``s`` from the tables."""
        if self.c_coef is None:
            raise ValueError("potential is only defined for problems given by coefficients")
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0, len(self.breaks) - 2)
        w = self.breaks[idx + 1] - self.breaks[idx]
        t = np.clip(2.0 * (s - self.breaks[idx]) / w - 1.0, -1.0, 1.0)
        out = cheb.clenshaw(self.c_coef[idx], t)
        return np.where(s == 0.0, 0.0, out)

    def covers(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return (s >= self.breaks[0]) & (s <= self.breaks[-1])


@dataclass
class RefinedNodes:
    """A (possibly refined) panel partition with log mu at its nodes."""

    tables: MeasureTables
    breaks: np.ndarray
    s: np.ndarray
    log_mu: np.ndarray
    extra: Optional[np.ndarray]

    def log_nu_minus(self):
        with np.errstate(divide="ignore"):
            return np.log(self.tables.nu.cum_left(self.s))

    def log_nu_plus(self):
        with np.errstate(divide="ignore"):
            return np.log(self.tables.nu.cum_right(self.s))

    def table(self, values: np.ndarray) -> DensityTable:
        return MeasureTables._make_table(self.breaks, self.s, values)


# -- the problem -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiffusionProblem:
    """One-dimensional diffusion ``a u'' + b u'`` on ``(left, right)``.

    Give either ``a`` and ``b`` (callables, numbers or expression strings in
    ``x``) or ``mu_density`` and ``nu_density``.  ``theta`` is the reference
    point of the potential.  ``scale`` sets the length scale of the auxiliary
    coordinate on the whole line.
    """

    left: float
    right: float
    theta: float
    a: object = None
    b: object = None
    mu_density: object = None
    nu_density: object = None
    label: str = ""
    scale: float = 1.0
    _state: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        left, right, theta = float(self.left), float(self.right), float(self.theta)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "theta", theta)
        if not left < right:
            raise ValueError(f"need left < right, got ({left}, {right})")
        if not (left < theta < right and math.isfinite(theta)):
            raise ValueError(f"theta={theta} must lie strictly inside ({left}, {right})")
        coeff = self.a is not None or self.b is not None
        dens = self.mu_density is not None or self.nu_density is not None
        if coeff == dens:
            raise ValueError("give either (a, b) or (mu_density, nu_density)")
        if coeff and self.a is None:
            raise ValueError("the diffusion coefficient a is required")
        self._state["lock"] = threading.RLock()
        self._state["a"] = _coerce(self.a)
        self._state["b"] = _coerce(self.b if self.b is not None else 0.0)
        self._state["mu"] = _coerce(self.mu_density)
        self._state["nu"] = _coerce(self.nu_density)

    @property
    def from_coefficients(self) -> bool:
        return self._state["a"] is not None

    @property
    def smap(self) -> CoordinateMap:
        return CoordinateMap(self.left, self.right, self.theta, self.scale)

    @property
    def tables(self) -> MeasureTables:
        st = self._state
        if "tables" not in st:
            with st["lock"]:
                if "tables" not in st:
                    if self.from_coefficients:
                        st["tables"] = MeasureTables.build(self.smap, a_fn=st["a"], b_fn=st["b"])
                    else:
                        st["tables"] = MeasureTables.build(self.smap, mu_fn=st["mu"], nu_fn=st["nu"])
        return st["tables"]

    def a_at(self, x):
        if not self.from_coefficients:
            raise ValueError("problem has no diffusion coefficient")
        out = self._state["a"](np.asarray(x, dtype=float))
        if np.any(~(np.asarray(out) > 0)):
            raise CoefficientError(f"a(x) must be positive on the interior, got {out!r} at x = {x!r}")
        return out

    def b_at(self, x):
        return self._state["b"](np.asarray(x, dtype=float))

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return self.tables.potential(self.smap.s(x))

    def mu(self, x):
        """Density of ``mu`` with respect to ``dx``."""
        if self.from_coefficients:
            return np.exp(self.potential(x)) / self.a_at(x)
        return self._state["mu"](np.asarray(x, dtype=float))

    def nu(self, x):
        """Density of ``nu`` with respect to ``dx``."""
        if self.from_coefficients:
            return np.exp(-self.potential(x))
        return self._state["nu"](np.asarray(x, dtype=float))

    def with_interval(self, left: float, right: float, label: Optional[str] = None) -> "DiffusionProblem":
        """Same operator restricted to a subinterval containing ``theta``."""
        if self.from_coefficients:
            return DiffusionProblem(left, right, self.theta, a=self._state["a"], b=self._state["b"],
                                    label=label or self.label, scale=self.scale)
        return DiffusionProblem(left, right, self.theta, mu_density=self._state["mu"], nu_density=self._state["nu"],
                                label=label or self.label, scale=self.scale)


def dualize(problem: DiffusionProblem) -> DiffusionProblem:
    """The dual problem: ``mu`` and ``nu`` exchanged, interval and ``theta`` kept."""
    dual = DiffusionProblem(problem.left, problem.right, problem.theta, mu_density=problem.nu,
                            nu_density=problem.mu, label=problem.label + "*", scale=problem.scale)
    dual._state["tables"] = problem.tables.swapped()
    dual._state["dual_of"] = problem
    return dual


def potential_C(problem: DiffusionProblem, x):
    """``C(x) = int_theta^x b/a``; table lookup with direct quadrature outside the tables."""
    if not problem.from_coefficients:
        raise ValueError("potential is only defined for problems given by coefficients")
    x_arr = np.asarray(x, dtype=float)
    s = problem.smap.s(x_arr)
    tbl = problem.tables
    out = np.asarray(tbl.potential(s), dtype=float)
    outside = ~tbl.covers(s)
    if np.any(outside):
        flat = out.reshape(-1)
        for i in np.flatnonzero(outside.reshape(-1)):
            xi = float(x_arr.reshape(-1)[i])
            val, err = integrate.quad(lambda u: problem.b_at(u) / problem.a_at(u), problem.theta, xi, limit=200)
            if not np.isfinite(val):
                raise QuadratureError(f"b/a is not integrable on ({problem.theta}, {xi})")
            flat[i] = val
    return out if out.ndim else float(out)


def _mass(table: DensityTable, problem: DiffusionProblem, s, t):
    smap = problem.smap
    ss, tt = smap.s(s), smap.s(t)
    return table.mass(ss, tt)


def mu_mass(problem: DiffusionProblem, s, t):
    """``mu((s, t))``; ``inf`` when the integral diverges."""
    return _mass(problem.tables.mu, problem, s, t)


def nu_mass(problem: DiffusionProblem, s, t):
    """``nu((s, t))``; ``inf`` when the integral diverges."""
    return _mass(problem.tables.nu, problem, s, t)
