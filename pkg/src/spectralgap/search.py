"""Derivative-free batched searches used by the bound computations.

All searches are deterministic: candidate points are evaluated on fixed grids
and ties are resolved in favour of the smallest index, i.e. the smallest
coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Scan", "Search1D", "Search2D", "zoom_1d", "zoom_2d", "bisect_increasing"]


def _clean(v: np.ndarray, maximize: bool) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if maximize:
        v = -v
    return np.where(np.isnan(v), np.inf, v)


@dataclass
class Scan:
    """Objective sampled on the initial scan grid."""

    x: np.ndarray
    values: np.ndarray
    y: np.ndarray | None = None


@dataclass
class Search1D:
    arg: np.ndarray
    value: np.ndarray
    evaluations: int
    width: float
    scan: Scan | None = None


@dataclass
class Search2D:
    x: float
    y: float
    value: float
    evaluations: int
    width: float
    rounds: int
    converged: bool
    scan: Scan | None = field(default=None, repr=False)


def zoom_1d(fun, lo, hi, *, maximize=False, n_scan=64, n_refine=17, tol=1e-9, max_rounds=80,
            keep_scan=False) -> Search1D:
    """Optimize ``fun`` on ``[lo, hi]`` for a batch of independent problems.

    ``lo`` and ``hi`` are arrays of shape ``(B,)``; ``fun`` receives points of
    shape ``(B, k)`` and returns values of the same shape.  A uniform scan is
    followed by rounds that re-grid the two cells around the incumbent, each
    shrinking the bracket by ``(n_refine - 1) / 2``.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    B = lo.shape[0]
    # clipped: lo + (hi - lo) can overshoot hi by an ulp, which matters at jumps
    grid = np.clip(lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n_scan)[None, :], lo[:, None], hi[:, None])
    raw = np.asarray(fun(grid), dtype=float)
    vals = _clean(raw, maximize)
    evals = grid.size
    i = np.argmin(vals, axis=1)
    rows = np.arange(B)
    best = grid[rows, i]
    bestv = vals[rows, i]
    h = (hi - lo) / (n_scan - 1)
    scan = Scan(grid, raw) if keep_scan else None
    for _ in range(max_rounds):
        if np.all(h < tol):
            break
        a = np.maximum(best - h, lo)
        b = np.minimum(best + h, hi)
        g = np.clip(a[:, None] + (b - a)[:, None] * np.linspace(0.0, 1.0, n_refine)[None, :], a[:, None], b[:, None])
        v = _clean(fun(g), maximize)
        evals += g.size
        j = np.argmin(v, axis=1)
        cand, candv = g[rows, j], v[rows, j]
        better = candv < bestv
        best = np.where(better, cand, best)
        bestv = np.where(better, candv, bestv)
        h = (b - a) / (n_refine - 1)
    value = -bestv if maximize else bestv
    return Search1D(best, value, evals, float(np.max(h)), scan)


def zoom_2d(fun, lo, hi, *, lo_y=None, hi_y=None, n_scan=32, n_refine=9, tol=1e-9, max_rounds=200,
            ordered=True, keep_scan=False) -> Search2D:
    """Minimize ``fun(x, y)`` over ``lo <= x < y <= hi`` (or a box if not ``ordered``).

    The coarse grid is followed by rounds on a ``n_refine x n_refine`` grid in
    the box of one cell around the incumbent.  When the incumbent lands on the
    edge of that box the box is re-centred instead of shrunk, which lets the
    search follow narrow valleys and kinks.
    """
    lo_y = lo if lo_y is None else lo_y
    hi_y = hi if hi_y is None else hi_y

    def evaluate(X, Y):
        v = _clean(fun(X, Y), False)
        if ordered:
            v = np.where(Y > X, v, np.inf)
        return v

    gx = np.linspace(lo, hi, n_scan)
    gy = np.linspace(lo_y, hi_y, n_scan)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    V = evaluate(X, Y)
    evals = V.size
    k = int(np.argmin(V))
    bx, by, bv = X.flat[k], Y.flat[k], V.flat[k]
    scan = Scan(X, V, Y) if keep_scan else None
    hx = (hi - lo) / (n_scan - 1)
    hy = (hi_y - lo_y) / (n_scan - 1)
    rounds = 0
    converged = False
    half = (n_refine - 1) // 2
    while rounds < max_rounds:
        if hx < tol and hy < tol:
            converged = True
            break
        rounds += 1
        ax, bx_ = max(bx - hx, lo), min(bx + hx, hi)
        ay, by_ = max(by - hy, lo_y), min(by + hy, hi_y)
        gx = np.linspace(ax, bx_, n_refine)
        gy = np.linspace(ay, by_, n_refine)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        V = evaluate(X, Y)
        evals += V.size
        k = int(np.argmin(V))
        i, j = divmod(k, n_refine)
        if V.flat[k] < bv:
            bx, by, bv = X.flat[k], Y.flat[k], V.flat[k]
        else:
            i, j = half, half
        on_edge_x = (i == 0 and ax > lo) or (i == n_refine - 1 and bx_ < hi)
        on_edge_y = (j == 0 and ay > lo_y) or (j == n_refine - 1 and by_ < hi_y)
        if not (on_edge_x or on_edge_y):
            hx = (bx_ - ax) / (n_refine - 1)
            hy = (by_ - ay) / (n_refine - 1)
    return Search2D(float(bx), float(by), float(bv), evals, float(max(hx, hy)), rounds, converged, scan)


def bisect_increasing(g, lo, hi, *, iters=200, rtol=1e-15):
    """Root of the nondecreasing function ``g`` on ``[lo, hi]`` for a batch.

    Returns ``(root, status)`` where status is 0 for a bracketed root, -1 if
    ``g > 0`` on the whole interval and +1 if ``g < 0`` on the whole interval.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
    hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
    glo, ghi = g(lo), g(hi)
    status = np.where(glo > 0, -1, np.where(ghi < 0, 1, 0))
    for _ in range(iters):
        if np.all(hi - lo <= rtol * np.maximum(1.0, np.abs(lo) + np.abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        pos = gm > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    root = 0.5 * (lo + hi)
    root = np.where(status == -1, lo, np.where(status == 1, hi, root))
    return root, status
