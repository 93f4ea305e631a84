"""Simplex arithmetic: closure, additive log-ratio transform and its inverse.

A composition is a vector of strictly positive fractions summing to one.
The additive log-ratio (alr) transform maps a B-part composition to B-1
unconstrained values by taking logs against a chosen denominator part; the
additive generalized logistic (agl) maps back onto the simplex. Array
kernels (:func:`alr_array`, :func:`agl_array`) operate row-wise on matrices
of compositions and are what the model-fitting code uses; the
:class:`Composition` / :class:`AlrVector` wrappers carry the denominator
bookkeeping for single points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "Composition",
    "AlrVector",
    "closure",
    "closure_array",
    "alr",
    "alr_array",
    "agl",
    "agl_array",
    "geometric_mean",
    "aln_log_density",
]

SUM_TOL = 1e-12


@dataclass(frozen=True)
class Composition:
    """A point on the B-part unit simplex.

    Parameters
    ----------
    parts : ndarray of shape (B,)
        Strictly positive fractions summing to 1 (within 1e-12).
    denominator : int
        0-based index of the part used as the alr reference.
    """

    parts: np.ndarray
    denominator: int

    def __post_init__(self):
        parts = np.asarray(self.parts, dtype=float)
        object.__setattr__(self, "parts", parts)
        if parts.ndim != 1 or parts.size < 2:
            raise ValueError("a composition needs at least 2 parts")
        if not np.all(np.isfinite(parts)):
            raise ValueError("composition parts must be finite")
        bad = np.nonzero(parts <= 0.0)[0]
        if bad.size:
            raise ValueError(f"composition part {bad[0]} is not strictly positive")
        if abs(parts.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"composition parts sum to {parts.sum()!r}, not 1")
        if not 0 <= self.denominator < parts.size:
            raise ValueError(f"denominator index {self.denominator} out of range")

    @property
    def n_parts(self) -> int:
        return self.parts.size


@dataclass(frozen=True)
class AlrVector:
    """An alr-transformed composition: B-1 finite log-ratios.

    ``denominator`` records which original part sits in the denominator of
    the ratios so the inverse transform can restore the part order.
    """

    values: np.ndarray
    denominator: int

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("alr vector must hold at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("alr values must be finite")
        if self.denominator < 0 or self.denominator > values.size:
            raise ValueError(f"denominator index {self.denominator} out of range")

    @property
    def n_parts(self) -> int:
        return self.values.size + 1


def closure_array(raw: np.ndarray) -> np.ndarray:
    """Normalize rows of positive entries to unit sum."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if raw.shape[1] < 2:
        raise ValueError("need at least 2 parts")
    bad = np.argwhere(~(raw > 0.0))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"entry {j} of row {i} is not strictly positive")
    out = raw / raw.sum(axis=1, keepdims=True)
    # one more pass kills the last ulp of drift from the division
    return out / out.sum(axis=1, keepdims=True)


def closure(raw, denominator: int | None = None) -> Composition:
    """Normalize a vector of positive reals onto the simplex.

    Parameters
    ----------
    raw : array_like of shape (B,)
        Strictly positive measurements.
    denominator : int, optional
        alr reference part; defaults to the last part.

    Returns
    -------
    Composition
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1:
        raise ValueError("closure expects a 1-d vector")
    parts = closure_array(raw[None, :])[0]
    if denominator is None:
        denominator = parts.size - 1
    return Composition(parts, denominator)


def _split_indices(n_parts: int, denominator: int) -> np.ndarray:
    """Indices of the non-denominator parts, in original order."""
    return np.array([j for j in range(n_parts) if j != denominator])


def alr_array(parts: np.ndarray, denominator: int) -> np.ndarray:
    """Row-wise additive log-ratio transform.

    Parameters
    ----------
    parts : ndarray of shape (n, B)
        Compositions, one per row, all strictly positive.
    denominator : int
        0-based index of the reference part.

    Returns
    -------
    ndarray of shape (n, B-1)
        ``log(x_j / x_d)`` for the non-denominator parts in original order.
    """
    parts = np.atleast_2d(np.asarray(parts, dtype=float))
    keep = _split_indices(parts.shape[1], denominator)
    return np.log(parts[:, keep]) - np.log(parts[:, [denominator]])


def alr(x: Composition) -> AlrVector:
    """Additive log-ratio transform of a single composition."""
    values = alr_array(x.parts[None, :], x.denominator)[0]
    return AlrVector(values, x.denominator)


def agl_array(values: np.ndarray, denominator: int) -> np.ndarray:
    """Row-wise additive generalized logistic (inverse alr) transform.

    Evaluated with a max-shift so arbitrarily large log-ratios (|y| up to
    ~700 and beyond) cannot overflow; every output row is renormalized to
    sum to exactly 1.

    Parameters
    ----------
    values : ndarray of shape (n, B-1)
        Finite log-ratios.
    denominator : int
        0-based index at which to insert the reference part.

    Returns
    -------
    ndarray of shape (n, B)
        Compositions with all parts in (0, 1).
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n, m = values.shape
    # implicit 0 column for the denominator part, then a stabilized softmax
    full = np.empty((n, m + 1))
    keep = _split_indices(m + 1, denominator)
    full[:, keep] = values
    full[:, denominator] = 0.0
    shift = full.max(axis=1, keepdims=True)
    ex = np.exp(full - shift)
    parts = ex / ex.sum(axis=1, keepdims=True)
    return parts / parts.sum(axis=1, keepdims=True)


def agl(y: AlrVector) -> Composition:
    """Map an alr vector back onto the simplex."""
    parts = agl_array(y.values[None, :], y.denominator)[0]
    return Composition(parts, y.denominator)


def geometric_mean(xs: list[Composition]) -> Composition:
    """Closed per-part geometric mean of compositions.

    All inputs must share the number of parts and the denominator index.
    """
    if not xs:
        raise ValueError("geometric_mean of an empty list")
    b = xs[0].n_parts
    d = xs[0].denominator
    for x in xs[1:]:
        if x.n_parts != b or x.denominator != d:
            raise ValueError("compositions differ in size or denominator")
    logs = np.stack([np.log(x.parts) for x in xs])
    gm = np.exp(logs.mean(axis=0))
    return Composition(closure_array(gm[None, :])[0], d)


def aln_log_density(x: Composition, mu: AlrVector, sigma: np.ndarray) -> float:
    """Log-density of the additive logistic normal distribution.

    The density of a composition whose alr transform is Gaussian with mean
    ``mu`` and covariance ``sigma``; the Jacobian of the back-transformation
    contributes ``-sum(log(x_i))``.

    Parameters
    ----------
    x : Composition
        Evaluation point; must share mu's denominator.
    mu : AlrVector
        Mean on the alr scale.
    sigma : ndarray of shape (B-1, B-1)
        Symmetric positive definite covariance on the alr scale.

    Returns
    -------
    float
    """
    if x.denominator != mu.denominator or x.n_parts != mu.n_parts:
        raise ValueError("composition and mean disagree on parts or denominator")
    sigma = np.asarray(sigma, dtype=float)
    m = mu.values.size
    if sigma.shape != (m, m):
        raise ValueError(f"sigma must be {m}x{m}")
    c, low = cho_factor(sigma, lower=True)
    resid = alr(x).values - mu.values
    white = cho_solve((c, low), resid)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    gauss = -0.5 * (m * np.log(2.0 * np.pi) + logdet + resid @ white)
    return float(gauss - np.sum(np.log(x.parts)))
