"""Likelihood machinery for the alr-scale common-component spatial model.

The regression coefficients have a closed form given the covariance
parameters (GLS), so the covariance parameters are estimated by maximizing
the profile log-likelihood with a box-constrained quasi-Newton method
(L-BFGS-B) fed the analytic score. Standard errors for the covariance
parameters come from a Richardson-extrapolated observed information matrix;
the regression block uses (D' Sigma^-1 D)^-1, treating the two blocks as
orthogonal. Profile-deviance traces provide likelihood-ratio intervals that
are robust where the Wald intervals misbehave (heavy-tailed range profiles,
variances near zero).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.linalg import LinAlgError
from scipy.interpolate import PchipInterpolator
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import brentq, minimize
from scipy.stats import norm

from .data import DesignMatrix, GeoDataset
from .numdiff import richardson_hessian
from .spatial import (
    BlockCovariance,
    CorrelationFamily,
    CovarianceParams,
    _rho_pairs,
    build_sigma,
    correlation,
    distance_matrix,
    sigma_derivative,
)

__all__ = [
    "ModelParams",
    "FitOptions",
    "FitResult",
    "ProfileTrace",
    "gls_beta",
    "log_lik",
    "profile_loglik",
    "score",
    "fit",
    "observed_information",
    "profile_trace",
    "wald_interval",
    "lambda_names",
    "pack_covariance",
    "unpack_covariance",
]

_NONPD_OBJECTIVE = 1e10


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector: regression coefficients plus covariance parameters."""

    beta: np.ndarray
    cov: CovarianceParams

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta", beta)
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")


def lambda_names(m: int) -> list[str]:
    """Covariance parameter names in packing order (variance scale)."""
    names = [f"sigma2_{r + 1}" for r in range(m)]
    names += [f"tau2_{r + 1}" for r in range(m)]
    names.append("phi")
    names += [f"rho_{r + 1}{s + 1}" for r, s in _rho_pairs(m)]
    return names


def lambda_selectors(m: int) -> list[tuple[str, int]]:
    """Derivative selectors aligned with :func:`lambda_names`."""
    sel = [("sigma2", r) for r in range(m)]
    sel += [("tau2", r) for r in range(m)]
    sel.append(("phi", 0))
    sel += [("rho", k) for k in range(m * (m - 1) // 2)]
    return sel


def pack_covariance(cov: CovarianceParams) -> np.ndarray:
    return np.concatenate([cov.sigma2, cov.tau2, [cov.phi], cov.rho])


def unpack_covariance(x: np.ndarray, m: int) -> CovarianceParams:
    x = np.asarray(x, dtype=float)
    return CovarianceParams(
        sigma2=x[:m], tau2=x[m : 2 * m], phi=float(x[2 * m]), rho=x[2 * m + 1 :]
    )


def wald_interval(estimate: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """Normal-theory interval: estimate +/- z_(1-(1-level)/2) * se."""
    z = norm.ppf(0.5 + level / 2.0)
    return estimate - z * se, estimate + z * se


def gls_beta(sigma: BlockCovariance, design: DesignMatrix, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form GLS coefficients and their covariance.

    Parameters
    ----------
    sigma : BlockCovariance
        Covariance of the stacked data vector.
    design : DesignMatrix
    y : ndarray
        Stacked data vector, length n(B-1).

    Returns
    -------
    (beta, cov_beta)
        ``beta = (D' Sigma^-1 D)^-1 D' Sigma^-1 y`` via Cholesky solves and
        ``cov_beta = (D' Sigma^-1 D)^-1``.
    """
    d = design.assembled
    y = np.asarray(y, dtype=float)
    si_d = sigma.solve(d)
    info = d.T @ si_d
    rhs = si_d.T @ y
    c = cho_factor(info, lower=True)
    beta = cho_solve(c, rhs)
    cov_beta = cho_solve(c, np.eye(info.shape[0]))
    return beta, cov_beta


def log_lik(params: ModelParams, data: GeoDataset, fam: CorrelationFamily) -> float:
    """Gaussian log-likelihood of the stacked alr-transformed data."""
    sigma = build_sigma(data.locations, params.cov, fam)
    return _gaussian_loglik(sigma, data.design().assembled @ params.beta, data.stacked_alr())


def _gaussian_loglik(sigma: BlockCovariance, mean: np.ndarray, y: np.ndarray) -> float:
    resid = y - mean
    white = sigma.solve(resid)
    k = y.size
    return float(-0.5 * (k * np.log(2.0 * np.pi) + sigma.logdet() + resid @ white))


def profile_loglik(cov: CovarianceParams, data: GeoDataset, fam: CorrelationFamily) -> float:
    """Log-likelihood profiled over the regression coefficients."""
    sigma = build_sigma(data.locations, cov, fam)
    design = data.design()
    y = data.stacked_alr()
    beta, _ = gls_beta(sigma, design, y)
    return _gaussian_loglik(sigma, design.assembled @ beta, y)


def score(cov: CovarianceParams, data: GeoDataset, fam: CorrelationFamily) -> np.ndarray:
    """Analytic gradient of the profile log-likelihood.

    Component q is ``-tr(Sigma^-1 dSigma_q)/2 + u' dSigma_q u / 2`` with
    ``u = Sigma^-1 (y - D beta_hat)``; by the envelope theorem this equals
    the derivative of the profile log-likelihood at any covariance point,
    not only at the optimum.
    """
    sigma = build_sigma(data.locations, cov, fam)
    design = data.design()
    y = data.stacked_alr()
    beta, _ = gls_beta(sigma, design, y)
    resid = y - design.assembled @ beta
    u = sigma.solve(resid)
    siginv = sigma.solve(np.eye(sigma.n))
    out = np.empty(pack_covariance(cov).size)
    for q, sel in enumerate(lambda_selectors(cov.n_components)):
        dsig = sigma_derivative(data.locations, cov, fam, sel)
        out[q] = -0.5 * np.sum(siginv * dsig) + 0.5 * (u @ dsig @ u)
    return out


@dataclass(frozen=True)
class FitOptions:
    """Knobs for :func:`fit`; defaults match the documented contract."""

    maxiter: int = 500
    gtol: float = 1e-5
    ftol: float = 1e-10
    min_variance: float = 1e-8
    min_phi: float = 1e-8
    rho_margin: float = 1e-6
    ci_level: float = 0.95
    compute_se: bool = True
    check_flat_phi: bool = True
    flat_phi_deviance: float = 0.01
    richardson_step: float = 1e-2
    richardson_stages: int = 4
    richardson_reduction: float = 2.0


@dataclass(frozen=True)
class FitResult:
    """Maximum likelihood fit: estimates, uncertainty, diagnostics."""

    params: ModelParams
    family: CorrelationFamily
    denominator: int
    part_names: tuple[str, ...]
    loglik: float
    beta_names: tuple[str, ...]
    beta_se: np.ndarray
    beta_cov: np.ndarray
    lambda_se: np.ndarray
    obs_info: np.ndarray | None
    converged: bool
    iterations: int
    gradient_norm: float
    se_unreliable: bool = False
    notes: tuple[str, ...] = ()
    ci_level: float = 0.95
    options: FitOptions = field(default_factory=FitOptions)
    # uncertainty for the beta block deliberately comes from (D' Sigma^-1 D)^-1
    # and for the covariance block from the observed information alone; the
    # two blocks are treated as orthogonal.
    beta_information: str = "gls"

    @property
    def lambda_names(self) -> list[str]:
        return lambda_names(self.params.cov.n_components)

    def lambda_values(self) -> np.ndarray:
        return pack_covariance(self.params.cov)

    def sd_scale_rows(self) -> list[tuple[str, float, float]]:
        """(name, estimate, se) with sigma/tau reported as standard deviations.

        Variance-scale estimates map by square root and their standard
        errors by the delta method, se(s) = se(s^2) / (2 s).
        """
        cov = self.params.cov
        vals = self.lambda_values()
        rows = []
        for name, est, se_var in zip(self.lambda_names, vals, self.lambda_se):
            if name.startswith(("sigma2_", "tau2_")):
                sd = float(np.sqrt(est))
                se_sd = float(se_var / (2.0 * sd)) if sd > 0 else float("nan")
                rows.append((name.replace("sigma2_", "sigma_").replace("tau2_", "tau_"), sd, se_sd))
            else:
                rows.append((name, float(est), float(se_var)))
        return rows

    def wald_ci(self, level: float | None = None) -> dict[str, tuple[float, float]]:
        """Wald intervals for every parameter, on both reporting scales."""
        level = self.ci_level if level is None else level
        out = {}
        for name, est, se in zip(self.beta_names, self.params.beta, self.beta_se):
            out[name] = wald_interval(float(est), float(se), level)
        for name, est, se in zip(self.lambda_names, self.lambda_values(), self.lambda_se):
            out[name] = wald_interval(float(est), float(se), level)
        for name, est, se in self.sd_scale_rows():
            if name.startswith(("sigma_", "tau_")):
                out[name] = wald_interval(est, se, level)
        return out

    def summary_rows(self) -> list[tuple[str, float, float, float, float]]:
        """(name, estimate, se, lower, upper) on the presentation scale."""
        ci = self.wald_ci()
        rows = []
        for name, est, se in zip(self.beta_names, self.params.beta, self.beta_se):
            rows.append((name, float(est), float(se), *ci[name]))
        for name, est, se in self.sd_scale_rows():
            rows.append((name, est, se, *ci[name]))
        return rows


def default_init(data: GeoDataset, fam: CorrelationFamily) -> CovarianceParams:
    """Cheap moment-based starting values.

    OLS per component; half the residual variance goes to the nugget and
    half to the partial sill, the range starts at a third of the mean
    pairwise distance and the cross-correlations at the clamped empirical
    residual correlations.
    """
    ymat = data.alr_matrix()
    design = data.design()
    m = data.n_components
    resid = np.empty_like(ymat)
    for r in range(m):
        d_r = design.blocks[r]
        coef, *_ = np.linalg.lstsq(d_r, ymat[:, r], rcond=None)
        resid[:, r] = ymat[:, r] - d_r @ coef
    v = resid.var(axis=0, ddof=1) if data.n > 1 else np.ones(m)
    if np.any(v < 1e-14):
        bad = int(np.argmin(v))
        raise ValueError(f"transformed component {bad + 1} is constant; cannot estimate its variance")
    coords = data.locations.coords
    diffs = coords[:, None, :] - coords[None, :, :]
    dists = np.sqrt((diffs**2).sum(-1))
    mean_dist = dists[np.triu_indices(data.n, k=1)].mean() if data.n > 1 else 1.0
    if m > 1:
        c = np.corrcoef(resid, rowvar=False)
        rho = np.array([np.clip(c[r, s], -0.95, 0.95) for r, s in _rho_pairs(m)])
    else:
        rho = np.empty(0)
    return CovarianceParams(sigma2=v / 2.0, tau2=v / 2.0, phi=mean_dist / 3.0, rho=rho)


def _bounds(m: int, opts: FitOptions) -> list[tuple[float, float | None]]:
    b = [(opts.min_variance, None)] * (2 * m)
    b.append((opts.min_phi, None))
    b += [(-1.0 + opts.rho_margin, 1.0 - opts.rho_margin)] * (m * (m - 1) // 2)
    return b


def _neg_profile(x: np.ndarray, data: GeoDataset, fam: CorrelationFamily, m: int) -> tuple[float, np.ndarray]:
    try:
        cov = unpack_covariance(x, m)
        return -profile_loglik(cov, data, fam), -score(cov, data, fam)
    except (ValueError, LinAlgError):
        return _NONPD_OBJECTIVE, np.zeros(x.size)


def _safe_profile(cov_vec: np.ndarray, data: GeoDataset, fam: CorrelationFamily, m: int) -> float:
    try:
        return profile_loglik(unpack_covariance(cov_vec, m), data, fam)
    except (ValueError, LinAlgError):
        return -np.inf


def _relaxed_profile(x: np.ndarray, data: GeoDataset, fam: CorrelationFamily, m: int) -> float:
    """Profile log-likelihood without the box constraints on the parameters.

    Numerical differentiation near a boundary steps outside the box; the
    likelihood is still well defined there whenever the assembled matrix is
    positive definite (cross-correlations slightly beyond +/-1 often are),
    so only genuinely impossible evaluations return -inf.
    """
    sigma2, tau2, phi = x[:m], x[m : 2 * m], float(x[2 * m])
    if np.any(sigma2 < 0) or np.any(tau2 < 0) or phi <= 0:
        return -np.inf
    sig, tau = np.sqrt(sigma2), np.sqrt(tau2)
    c = np.eye(m)
    for k, (r, s) in enumerate(_rho_pairs(m)):
        c[r, s] = c[s, r] = x[2 * m + 1 + k]
    r_mat = correlation(distance_matrix(data.locations), phi, fam)
    np.fill_diagonal(r_mat, 1.0)
    matrix = np.kron(np.outer(sig, sig), r_mat) + np.kron(
        np.outer(tau, tau) * c, np.eye(data.n)
    )
    try:
        sigma = BlockCovariance(matrix)
        design = data.design()
        y = data.stacked_alr()
        beta, _ = gls_beta(sigma, design, y)
        return _gaussian_loglik(sigma, design.assembled @ beta, y)
    except (ValueError, LinAlgError):
        return -np.inf


def observed_information(
    cov: CovarianceParams,
    data: GeoDataset,
    fam: CorrelationFamily,
    opts: FitOptions = FitOptions(),
) -> np.ndarray:
    """Observed information for the covariance parameters.

    Negative Hessian of the profile log-likelihood by Richardson-extrapolated
    central differences, symmetrized. The point should be strictly interior
    to the parameter bounds; differencing steps that cross a bound are still
    evaluated as long as the covariance matrix stays positive definite (the
    likelihood extends smoothly past the box there), and only impossible
    evaluations contribute -inf, surfacing as non-finite entries.
    """
    m = cov.n_components
    x = pack_covariance(cov)
    hess = richardson_hessian(
        lambda v: _relaxed_profile(v, data, fam, m),
        x,
        rel_step=opts.richardson_step,
        stages=opts.richardson_stages,
        reduction=opts.richardson_reduction,
    )
    return -hess


def _projected_gradient_norm(x, grad, bounds) -> float:
    pg = np.array(grad, dtype=float)
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and x[i] <= lo and pg[i] > 0:
            pg[i] = 0.0
        if hi is not None and x[i] >= hi and pg[i] < 0:
            pg[i] = 0.0
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def fit(
    data: GeoDataset,
    fam: CorrelationFamily = CorrelationFamily("exponential"),
    init: CovarianceParams | None = None,
    options: FitOptions = FitOptions(),
) -> FitResult:
    """Maximum likelihood fit of the compositional spatial model.

    Maximizes the profile log-likelihood over the covariance parameters with
    L-BFGS-B (variances and range bounded below, cross-correlations inside
    (-1, 1)), then recovers the regression coefficients by GLS. Non-positive
    definite covariance proposals score as -inf so the line search backs off
    rather than raising.

    Returns
    -------
    FitResult
        ``converged=False`` (never an exception) when the iteration cap is
        reached; standard errors may be flagged unreliable when the observed
        information is not positive definite.
    """
    m = data.n_components
    design = data.design()
    q = 2 * m + 1 + m * (m - 1) // 2
    if data.n * m <= design.p_total + q:
        raise ValueError("not enough observations to estimate all parameters")
    start = init if init is not None else default_init(data, fam)
    if start.n_components != m:
        raise ValueError("init has the wrong number of components")
    bounds = _bounds(m, options)
    x0 = np.clip(
        pack_covariance(start),
        [lo for lo, _ in bounds],
        [np.inf if hi is None else hi for _, hi in bounds],
    )

    res = minimize(
        _neg_profile,
        x0,
        args=(data, fam, m),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": options.maxiter, "ftol": options.ftol, "gtol": options.gtol},
    )

    cov_hat = unpack_covariance(res.x, m)
    sigma = build_sigma(data.locations, cov_hat, fam)
    y = data.stacked_alr()
    beta, beta_cov = gls_beta(sigma, design, y)
    loglik = _gaussian_loglik(sigma, design.assembled @ beta, y)
    grad_norm = _projected_gradient_norm(res.x, res.jac, bounds)
    converged = bool(res.success) and np.isfinite(loglik)

    notes: list[str] = []
    se_unreliable = False
    if options.compute_se and converged:
        info = observed_information(cov_hat, data, fam, options)
        lam_se, bad = _se_from_information(info)
        if bad:
            se_unreliable = True
            notes.append("observed information not positive definite; covariance SEs from pseudo-inverse")
    else:
        info = None
        lam_se = np.full(q, np.nan)

    if converged and options.check_flat_phi and options.compute_se:
        if _phi_profile_is_flat(cov_hat, loglik, data, fam, m, bounds, options):
            notes.append("phi profile flat within +/-50% of the estimate; range weakly identified")

    return FitResult(
        params=ModelParams(beta=beta, cov=cov_hat),
        family=fam,
        denominator=data.denominator,
        part_names=data.part_names,
        loglik=loglik,
        beta_names=tuple(design.coef_names()),
        beta_se=np.sqrt(np.diag(beta_cov)),
        beta_cov=beta_cov,
        lambda_se=lam_se,
        obs_info=info,
        converged=converged,
        iterations=int(res.nit),
        gradient_norm=grad_norm,
        se_unreliable=se_unreliable,
        notes=tuple(notes),
        ci_level=options.ci_level,
        options=options,
    )


def _se_from_information(info: np.ndarray) -> tuple[np.ndarray, bool]:
    if not np.all(np.isfinite(info)):
        return np.full(info.shape[0], np.nan), True
    try:
        c = cho_factor(info, lower=True)
        cov = cho_solve(c, np.eye(info.shape[0]))
        var = np.diag(cov)
        if np.any(var <= 0):
            raise LinAlgError("nonpositive variance")
        return np.sqrt(var), False
    except LinAlgError:
        cov = np.linalg.pinv(info)
        var = np.abs(np.diag(cov))
        return np.sqrt(var), True


def _maximize_with_fixed(
    fixed_index: int,
    fixed_value: float,
    start_free: np.ndarray,
    data: GeoDataset,
    fam: CorrelationFamily,
    m: int,
    bounds: list[tuple[float, float | None]],
    options: FitOptions,
    maxiter: int | None = None,
) -> tuple[float, np.ndarray]:
    """Profile out all covariance parameters except one held fixed."""
    free_idx = [i for i in range(len(bounds)) if i != fixed_index]

    def assemble(xf):
        full = np.empty(len(bounds))
        full[free_idx] = xf
        full[fixed_index] = fixed_value
        return full

    def objective(xf):
        full = assemble(xf)
        try:
            cov = unpack_covariance(full, m)
            g = -score(cov, data, fam)
            return -profile_loglik(cov, data, fam), g[free_idx]
        except (ValueError, LinAlgError):
            return _NONPD_OBJECTIVE, np.zeros(len(free_idx))

    res = minimize(
        objective,
        start_free,
        jac=True,
        method="L-BFGS-B",
        bounds=[bounds[i] for i in free_idx],
        options={
            "maxiter": maxiter if maxiter is not None else options.maxiter,
            "ftol": options.ftol,
            "gtol": options.gtol,
        },
    )
    return -res.fun, res.x


def _phi_profile_is_flat(cov_hat, loglik_hat, data, fam, m, bounds, options) -> bool:
    x_hat = pack_covariance(cov_hat)
    phi_index = 2 * m
    free_idx = [i for i in range(len(bounds)) if i != phi_index]
    for factor in (0.5, 1.5):
        ll, _ = _maximize_with_fixed(
            phi_index, cov_hat.phi * factor, x_hat[free_idx], data, fam, m, bounds, options, maxiter=100
        )
        if 2.0 * (loglik_hat - ll) >= options.flat_phi_deviance:
            return False
    return True


@dataclass(frozen=True)
class ProfileTrace:
    """Deviance trace of one covariance parameter with its likelihood-ratio CI."""

    parameter: str
    grid: np.ndarray
    deviance: np.ndarray
    ci: tuple[float, float]
    level: float
    mle: float


def profile_trace(
    fitted: FitResult,
    data: GeoDataset,
    parameter: str,
    grid: np.ndarray | None = None,
    n_points: int = 30,
    span_se: float = 4.0,
    level: float = 0.95,
) -> ProfileTrace:
    """Profile-deviance trace for one covariance parameter.

    For each grid value the remaining covariance parameters are re-maximized
    (warm-started from the neighboring solution, sweeping outward from the
    MLE). Interval endpoints are where the square root of the deviance
    crosses the normal quantile, located by monotone (PCHIP) interpolation;
    an endpoint that never crosses inside the grid is reported as +/-inf.

    Parameters
    ----------
    fitted : FitResult
        A converged fit.
    data : GeoDataset
        The data the model was fitted to.
    parameter : str
        One of the variance-scale covariance names, e.g. ``"phi"``,
        ``"sigma2_1"``, ``"rho_12"``.
    grid : ndarray, optional
        Explicit grid of parameter values; must bracket the MLE. Default is
        MLE +/- ``span_se`` standard errors, floored at the bounds.
    """
    if not fitted.converged:
        raise ValueError("profile_trace requires a converged fit")
    m = fitted.params.cov.n_components
    names = lambda_names(m)
    if parameter not in names:
        raise ValueError(f"unknown covariance parameter {parameter!r}")
    q_idx = names.index(parameter)
    opts = fitted.options
    bounds = _bounds(m, opts)
    x_hat = pack_covariance(fitted.params.cov)
    mle = float(x_hat[q_idx])

    if grid is None:
        se = fitted.lambda_se[q_idx]
        if not np.isfinite(se) or se <= 0:
            se = max(abs(mle), 1.0) * 0.5
        lo, hi = mle - span_se * se, mle + span_se * se
        blo, bhi = bounds[q_idx]
        if blo is not None:
            lo = max(lo, blo)
        if bhi is not None:
            hi = min(hi, bhi)
        grid = np.linspace(lo, hi, n_points)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.min() > mle or grid.max() < mle:
            raise ValueError("grid does not contain the MLE")
    if not np.any(np.isclose(grid, mle, rtol=1e-12, atol=0.0)):
        grid = np.sort(np.append(grid, mle))
    else:
        grid = np.sort(grid)

    free_idx = [i for i in range(len(bounds)) if i != q_idx]
    k0 = int(np.argmin(np.abs(grid - mle)))
    loglik_prof = np.empty(grid.size)

    for direction in (range(k0, grid.size), range(k0 - 1, -1, -1)):
        start = x_hat[free_idx]
        for k in direction:
            ll, start = _maximize_with_fixed(
                q_idx, float(grid[k]), start, data, fam=fitted.family, m=m, bounds=bounds, options=opts
            )
            loglik_prof[k] = ll

    deviance = 2.0 * (fitted.loglik - loglik_prof)
    if deviance.min() < -1e-6:
        warnings.warn(
            f"profile exceeded the fitted log-likelihood by {-deviance.min() / 2:.2e}; base fit may be unconverged",
            RuntimeWarning,
        )
    deviance = np.maximum(deviance, 0.0)
    z = norm.ppf(0.5 + level / 2.0)
    ci = (_cross(grid, deviance, k0, z, side=-1), _cross(grid, deviance, k0, z, side=+1))
    return ProfileTrace(parameter=parameter, grid=grid, deviance=deviance, ci=ci, level=level, mle=mle)


def _cross(grid: np.ndarray, deviance: np.ndarray, k0: int, z: float, side: int) -> float:
    """Locate the z-crossing of sqrt(deviance) on one side of the MLE."""
    if side > 0:
        idx = np.arange(k0, grid.size)
    else:
        idx = np.arange(k0, -1, -1)
    g = grid[idx]
    s = np.sqrt(deviance[idx])
    above = np.nonzero(s >= z)[0]
    if above.size == 0:
        return float(side * np.inf)
    j = above[0]
    if j == 0:
        return float(g[0])
    xs = g[: j + 1] if side > 0 else g[: j + 1][::-1]
    ys = s[: j + 1] if side > 0 else s[: j + 1][::-1]
    xs, keep = np.unique(xs, return_index=True)
    ys = ys[keep]
    if xs.size < 2:
        return float(g[j])
    interp = PchipInterpolator(xs, ys)
    lo, hi = (g[j - 1], g[j]) if side > 0 else (g[j], g[j - 1])
    try:
        return float(brentq(lambda v: interp(v) - z, lo, hi))
    except ValueError:
        return float(g[j])
