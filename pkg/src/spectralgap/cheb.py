"""Small Chebyshev toolkit used by the panel tables."""
from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as C

ORDER = 16

_k = np.arange(ORDER)
#: first-kind Chebyshev points on [-1, 1] (decreasing)
NODES = np.cos(np.pi * (_k + 0.5) / ORDER)
_V = np.cos(np.outer(_k, np.pi * (_k + 0.5) / ORDER))


def coefficients(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients from samples at :data:`NODES` (last axis)."""
    c = (2.0 / ORDER) * (values @ _V.T)
    c[..., 0] *= 0.5
    return c


def antiderivative(coef: np.ndarray, width) -> np.ndarray:
    """Coefficients of the antiderivative vanishing at t = -1, in s units."""
    scl = np.asarray(width, dtype=float)[..., None] / 2.0
    return C.chebint(coef, lbnd=-1, axis=-1) * scl


def clenshaw(coef: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate row ``coef[i]`` at ``t[i]`` for every i."""
    t = np.asarray(t, dtype=float)
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    tt = 2.0 * t
    for j in range(coef.shape[-1] - 1, 0, -1):
        b1, b2 = coef[..., j] + tt * b1 - b2, b1
    return coef[..., 0] + t * b1 - b2


def value_at_ends(coef: np.ndarray):
    """Values at t = -1 and t = +1 for each row."""
    signs = (-1.0) ** np.arange(coef.shape[-1])
    return coef @ signs, coef.sum(axis=-1)


def resolved(coef: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """True where the trailing coefficients are negligible."""
    scale = np.max(np.abs(coef), axis=-1)
    tail = np.max(np.abs(coef[..., -3:]), axis=-1)
    return tail <= rtol * scale
