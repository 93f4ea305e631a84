"""Richardson-extrapolated central differences for gradients and Hessians.

Central differences have an even error expansion in the step, so repeating
them at steps h, h/r, h/r^2, ... and eliminating successive error terms
gives rapidly improving estimates (exact already at the first stage for
quadratics). Steps are relative to the parameter magnitude with a floor of
1 so parameters near zero still get a usable step.
"""

from __future__ import annotations

import numpy as np

__all__ = ["richardson_gradient", "richardson_hessian"]


def _extrapolate(estimates: list[float], reduction: float) -> float:
    """Collapse a Richardson table for an even error expansion (h^2, h^4, ...)."""
    t = [np.asarray(e, dtype=float) for e in estimates]
    for j in range(1, len(t)):
        factor = reduction ** (2 * j)
        for k in range(len(t) - 1, j - 1, -1):
            t[k] = (factor * t[k] - t[k - 1]) / (factor - 1.0)
    return t[-1]


def _steps(x: np.ndarray, rel_step: float) -> np.ndarray:
    return rel_step * np.maximum(np.abs(x), 1.0)


def richardson_gradient(f, x, rel_step: float = 1e-2, stages: int = 4, reduction: float = 2.0) -> np.ndarray:
    """Gradient of a scalar function by extrapolated central differences."""
    x = np.asarray(x, dtype=float)
    h0 = _steps(x, rel_step)
    grad = np.empty(x.size)
    for i in range(x.size):
        ests = []
        h = h0[i]
        for _ in range(stages):
            e = np.zeros_like(x)
            e[i] = h
            ests.append((f(x + e) - f(x - e)) / (2.0 * h))
            h /= reduction
        grad[i] = _extrapolate(ests, reduction)
    return grad


def richardson_hessian(f, x, rel_step: float = 1e-2, stages: int = 4, reduction: float = 2.0) -> np.ndarray:
    """Hessian of a scalar function by extrapolated central differences.

    Parameters
    ----------
    f : callable
        Maps an ndarray to a float.
    x : array_like
        Expansion point.
    rel_step : float
        Initial step relative to ``max(|x_i|, 1)``.
    stages : int
        Extrapolation stages; each halves the step (for ``reduction=2``).

    Returns
    -------
    ndarray
        Symmetrized Hessian ``(H + H^T) / 2``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h0 = _steps(x, rel_step)
    f0 = f(x)
    hess = np.empty((n, n))

    for i in range(n):
        ests = []
        h = h0[i]
        for _ in range(stages):
            e = np.zeros_like(x)
            e[i] = h
            ests.append((f(x + e) - 2.0 * f0 + f(x - e)) / h**2)
            h /= reduction
        hess[i, i] = _extrapolate(ests, reduction)

    for i in range(n):
        for j in range(i + 1, n):
            ests = []
            hi, hj = h0[i], h0[j]
            for _ in range(stages):
                ei = np.zeros_like(x)
                ej = np.zeros_like(x)
                ei[i] = hi
                ej[j] = hj
                ests.append(
                    (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej))
                    / (4.0 * hi * hj)
                )
                hi /= reduction
                hj /= reduction
            hess[i, j] = hess[j, i] = _extrapolate(ests, reduction)

    return 0.5 * (hess + hess.T)
