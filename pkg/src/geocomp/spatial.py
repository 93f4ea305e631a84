"""Spatial geometry and the blocked covariance engine.

The model couples B-1 alr-transformed components through a single shared
unit-variance spatial field plus per-component, cross-correlated nugget
noise.  Stacking the components site-major within component (component-major
overall), the full covariance of the stacked data vector is

    Sigma = (sig sig^T) (x) R(phi)  +  T (x) I_n

where ``sig`` is the vector of component spatial standard deviations, ``R``
the n x n spatial correlation matrix, and ``T`` the nugget covariance with
``T_rr = tau_r^2`` and ``T_rs = tau_r tau_s rho_rs``.  Same-site entries are
keyed on row identity (i == i'), not zero distance: duplicate coordinates
share the spatial term but never the nugget.

Derivatives are taken with respect to the packed parameter vector
(sigma^2's, tau^2's, phi, rho's); the square-root cross terms use the chain
rule d(sig_r sig_s)/d(sigma_r^2) = sig_s / (2 sig_r).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

__all__ = [
    "SpatialLocations",
    "CorrelationFamily",
    "CovarianceParams",
    "BlockCovariance",
    "distance_matrix",
    "correlation",
    "correlation_dphi",
    "build_sigma",
    "sigma_derivative",
    "cross_sigma",
]

FAMILIES = ("exponential", "spherical", "matern")


@dataclass(frozen=True)
class SpatialLocations:
    """n planar coordinates (projected units). Duplicates are permitted."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must be an (n, 2) array")
        if coords.shape[0] < 1:
            raise ValueError("need at least one location")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def _as_coords(locs) -> np.ndarray:
    if isinstance(locs, SpatialLocations):
        return locs.coords
    return SpatialLocations(np.asarray(locs, dtype=float)).coords


@dataclass(frozen=True)
class CorrelationFamily:
    """Spatial correlation family with an optional fixed smoothness.

    ``smoothness`` only applies to the Matern family and is a configuration
    constant, never estimated.
    """

    family: str = "exponential"
    smoothness: float = 1.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown correlation family {self.family!r}")
        if self.smoothness <= 0:
            raise ValueError("smoothness must be positive")


def distance_matrix(locs) -> np.ndarray:
    """Pairwise Euclidean distances; exactly symmetric with zero diagonal."""
    coords = _as_coords(locs)
    d = cdist(coords, coords)
    np.fill_diagonal(d, 0.0)
    return d


def correlation(u, phi: float, fam: CorrelationFamily) -> np.ndarray:
    """Evaluate the correlation function element-wise on distances ``u``.

    Parameters
    ----------
    u : array_like
        Nonnegative distances.
    phi : float
        Range parameter, > 0.
    fam : CorrelationFamily

    Returns
    -------
    ndarray (or scalar) with rho(0) = 1 and |rho| <= 1.
    """
    if phi <= 0:
        raise ValueError("range parameter phi must be positive")
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if np.any(u < 0):
        raise ValueError("distances must be nonnegative")
    h = u / phi
    if fam.family == "exponential":
        out = np.exp(-h)
    elif fam.family == "spherical":
        out = np.where(h < 1.0, 1.0 - 1.5 * h + 0.5 * h**3, 0.0)
    else:
        nu = fam.smoothness
        out = np.ones_like(h)
        pos = h > 0
        hp = h[pos]
        out[pos] = (2.0 ** (1.0 - nu) / gamma_fn(nu)) * hp**nu * kv(nu, hp)
        # kv underflows for very large arguments; the limit is 0 anyway
        out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0) if np.any(~np.isfinite(out)) else out
    return out[0] if scalar else out


def correlation_dphi(u, phi: float, fam: CorrelationFamily) -> np.ndarray:
    """Element-wise derivative of the correlation function w.r.t. the range."""
    if phi <= 0:
        raise ValueError("range parameter phi must be positive")
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    h = u / phi
    if fam.family == "exponential":
        out = np.exp(-h) * u / phi**2
    elif fam.family == "spherical":
        out = np.where(h < 1.0, 1.5 * (u / phi**2) * (1.0 - h**2), 0.0)
    else:
        # d/dx [x^nu K_nu(x)] = -x^nu K_{nu-1}(x), x = u/phi
        nu = fam.smoothness
        out = np.zeros_like(h)
        pos = h > 0
        hp = h[pos]
        out[pos] = (2.0 ** (1.0 - nu) / gamma_fn(nu)) * hp**nu * kv(nu - 1.0, hp) * u[pos] / phi**2
        out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0) if np.any(~np.isfinite(out)) else out
    return out[0] if scalar else out


def _rho_pairs(m: int) -> list[tuple[int, int]]:
    """Column-wise stacking order of the cross-correlation pairs (r < s)."""
    return [(r, s) for s in range(1, m) for r in range(s)]


@dataclass(frozen=True)
class CovarianceParams:
    """Covariance parameters: partial sills, nuggets, common range, cross-correlations.

    ``sigma2`` and ``tau2`` are variances (one per transformed component);
    ``rho`` stacks the (B-1)(B-2)/2 nugget cross-correlations column-wise.
    Zero variances are accepted so boundary models (pure nugget, no nugget)
    can be built directly; the fit keeps them strictly positive via bounds.
    """

    sigma2: np.ndarray
    tau2: np.ndarray
    phi: float
    rho: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        tau2 = np.atleast_1d(np.asarray(self.tau2, dtype=float))
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float)) if np.size(self.rho) else np.empty(0)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "tau2", tau2)
        object.__setattr__(self, "rho", rho)
        m = sigma2.size
        if tau2.size != m:
            raise ValueError("sigma2 and tau2 must have the same length")
        if rho.size != m * (m - 1) // 2:
            raise ValueError(f"expected {m * (m - 1) // 2} cross-correlations, got {rho.size}")
        if np.any(sigma2 < 0) or np.any(tau2 < 0):
            raise ValueError("variances must be nonnegative")
        if not np.isfinite(self.phi) or self.phi <= 0:
            raise ValueError("range parameter phi must be positive")
        if rho.size and np.any(np.abs(rho) >= 1.0):
            raise ValueError("cross-correlations must lie in (-1, 1)")
        if m > 2 and rho.size:
            # per-element bounds only guarantee positive definiteness for m <= 2
            try:
                np.linalg.cholesky(self.rho_matrix())
            except np.linalg.LinAlgError as err:
                raise ValueError("cross-correlation matrix is not positive definite") from err

    @property
    def n_components(self) -> int:
        return self.sigma2.size

    def rho_matrix(self) -> np.ndarray:
        """The (B-1) x (B-1) correlation matrix implied by ``rho``."""
        m = self.n_components
        c = np.eye(m)
        for k, (r, s) in enumerate(_rho_pairs(m)):
            c[r, s] = c[s, r] = self.rho[k]
        return c

    def nugget_matrix(self) -> np.ndarray:
        """Same-site nugget covariance T with T_rs = tau_r tau_s rho_rs."""
        tau = np.sqrt(self.tau2)
        return np.outer(tau, tau) * self.rho_matrix()

    def spatial_matrix(self) -> np.ndarray:
        """Same-site spatial covariance sig sig^T (single shared field)."""
        sig = np.sqrt(self.sigma2)
        return np.outer(sig, sig)


@dataclass(frozen=True)
class BlockCovariance:
    """Dense n(B-1) x n(B-1) covariance with a cached Cholesky factor."""

    matrix: np.ndarray

    @cached_property
    def chol(self):
        """Lower Cholesky factorization, computed once.

        Raises
        ------
        numpy.linalg.LinAlgError
            If the matrix is not positive definite (the scipy message names
            the failing leading minor).
        """
        return cho_factor(self.matrix, lower=True)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve(self.chol, b)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol[0]))))


def build_sigma(locs, params: CovarianceParams, fam: CorrelationFamily) -> BlockCovariance:
    """Assemble the stacked covariance matrix of the transformed data.

    Component-major ordering: entry ((r, i), (s, j)) holds

    * ``sigma_r^2 + tau_r^2``                     same component, same site
    * ``sigma_r^2 rho(u; phi)``                   same component, sites i != j
    * ``sigma_r sigma_s + tau_r tau_s rho_rs``    components r != s, same site
    * ``sigma_r sigma_s rho(u; phi)``             components r != s, i != j

    Returns
    -------
    BlockCovariance
        Exactly symmetric by construction; the Cholesky factor is computed
        lazily and cached.
    """
    coords = _as_coords(locs)
    r_mat = correlation(distance_matrix(coords), params.phi, fam)
    np.fill_diagonal(r_mat, 1.0)
    sigma = np.kron(params.spatial_matrix(), r_mat) + np.kron(
        params.nugget_matrix(), np.eye(coords.shape[0])
    )
    return BlockCovariance(sigma)


def _check_selector(which: tuple[str, int], m: int) -> tuple[str, int]:
    kind, idx = which
    n_rho = m * (m - 1) // 2
    limits = {"sigma2": m, "tau2": m, "phi": 1, "rho": n_rho}
    if kind not in limits or not 0 <= idx < limits[kind]:
        raise ValueError(f"unknown parameter selector {which!r}")
    return kind, idx


def sigma_derivative(
    locs, params: CovarianceParams, fam: CorrelationFamily, which: tuple[str, int]
) -> np.ndarray:
    """Entry-wise derivative of the stacked covariance w.r.t. one parameter.

    Parameters
    ----------
    which : (str, int)
        One of ``("sigma2", r)``, ``("tau2", r)``, ``("phi", 0)`` or
        ``("rho", k)`` with ``k`` indexing the column-wise pair order.

    Notes
    -----
    Differentiation is on the variance scale for sigma2/tau2, so the
    square-root cross terms pick up the factor ``sig_s / (2 sig_r)``; the
    corresponding variances must then be strictly positive.
    """
    coords = _as_coords(locs)
    m = params.n_components
    kind, idx = _check_selector(which, m)
    n = coords.shape[0]

    if kind == "phi":
        dr = correlation_dphi(distance_matrix(coords), params.phi, fam)
        np.fill_diagonal(dr, 0.0)
        return np.kron(params.spatial_matrix(), dr)

    if kind == "rho":
        r, s = _rho_pairs(m)[idx]
        tau = np.sqrt(params.tau2)
        dt = np.zeros((m, m))
        dt[r, s] = dt[s, r] = tau[r] * tau[s]
        return np.kron(dt, np.eye(n))

    if kind == "sigma2":
        sig = np.sqrt(params.sigma2)
        if sig[idx] == 0.0:
            raise ValueError("sigma2 derivative needs sigma > 0 (chain rule)")
        da = np.zeros((m, m))
        da[idx, :] = da[:, idx] = sig / (2.0 * sig[idx])
        da[idx, idx] = 1.0
        r_mat = correlation(distance_matrix(coords), params.phi, fam)
        np.fill_diagonal(r_mat, 1.0)
        return np.kron(da, r_mat)

    # tau2
    tau = np.sqrt(params.tau2)
    if tau[idx] == 0.0:
        raise ValueError("tau2 derivative needs tau > 0 (chain rule)")
    c = params.rho_matrix()
    dt = np.zeros((m, m))
    dt[idx, :] = dt[:, idx] = c[idx, :] * tau / (2.0 * tau[idx])
    dt[idx, idx] = 1.0
    return np.kron(dt, np.eye(n))


def cross_sigma(
    obs,
    new,
    params: CovarianceParams,
    fam: CorrelationFamily,
    include_nugget: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Covariance blocks linking prediction sites to observations.

    Prediction sites never share a nugget with observations: the cross block
    uses the different-site rule even at distance zero, so kriging with a
    nugget does not interpolate exactly.  ``include_nugget`` controls whether
    the prediction sites' own nugget (and its cross-component correlation)
    enters their unconditional covariance.

    Returns
    -------
    (cross, new_cov)
        ``cross`` is n0(B-1) x n(B-1) = Cov(new, obs); ``new_cov`` is the
        n0(B-1) x n0(B-1) unconditional covariance among prediction sites.
    """
    obs_xy = _as_coords(obs)
    new_xy = _as_coords(new)
    a = params.spatial_matrix()
    r_cross = correlation(cdist(new_xy, obs_xy), params.phi, fam)
    cross = np.kron(a, r_cross)

    r_new = correlation(distance_matrix(new_xy), params.phi, fam)
    np.fill_diagonal(r_new, 1.0)
    new_cov = np.kron(a, r_new)
    if include_nugget:
        new_cov = new_cov + np.kron(params.nugget_matrix(), np.eye(new_xy.shape[0]))
    return cross, new_cov
