"""Finite-difference derivatives on uniform grids.

Central stencils in the interior. Near the ends the stencils are one-sided
and two points wider than the minimum, which keeps their error constants
close to the interior ones.
"""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple, deriv: int) -> np.ndarray:
    """Weights ``w`` with ``sum(w * f(x + s*h)) / h**deriv ~ f^(deriv)(x)``."""
    s = np.asarray(offsets, dtype=float)
    m = s.size
    A = np.vander(s, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(A, rhs)


def stencil(i: int, n: int, deriv: int, accuracy: int) -> tuple:
    """Integer offsets used for sample ``i`` of ``n``."""
    half = accuracy // 2
    if i - half >= 0 and i + half < n:
        return tuple(range(-half, half + 1))
    size = min(accuracy + deriv + 2, n)
    start = min(max(i - half, 0), n - size)
    return tuple(range(start - i, start + size - i))


def derivative(x, dt: float, deriv: int = 1, accuracy: int = 2) -> np.ndarray:
    """``deriv``-th time derivative of ``x`` along axis 0."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < deriv + 1:
        raise ValueError(f"need at least {deriv + 1} samples for derivative order {deriv}")
    if accuracy < 2 or accuracy % 2:
        raise ValueError("accuracy must be an even integer >= 2")
    out = np.empty_like(x)
    half = accuracy // 2
    if n > 2 * half:
        w = fd_weights(tuple(range(-half, half + 1)), deriv)
        acc = np.zeros_like(x[half : n - half])
        for k, s in enumerate(range(-half, half + 1)):
            acc += w[k] * x[half + s : n - half + s]
        out[half : n - half] = acc
        edges = list(range(half)) + list(range(n - half, n))
    else:
        edges = range(n)
    for i in edges:
        offs = stencil(i, n, deriv, accuracy)
        w = fd_weights(offs, deriv)
        # differences from x[i] keep constants exact (weights sum to zero)
        out[i] = np.tensordot(w, x[[i + s for s in offs]] - x[i], axes=1)
    return out / dt**deriv
