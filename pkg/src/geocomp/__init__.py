"""Likelihood-based geostatistics for compositional data.

Fits common-component multivariate Gaussian models to alr-transformed
regionalized compositions by maximum likelihood, and predicts
simplex-valued compositions by Gauss-Hermite back-transformation or Monte
Carlo simulation of the predictive distribution.
"""

from .data import DesignMatrix, GeoDataset, default_denominator
from .mle import (
    FitOptions,
    FitResult,
    ModelParams,
    ProfileTrace,
    fit,
    gls_beta,
    lambda_names,
    log_lik,
    observed_information,
    pack_covariance,
    profile_loglik,
    profile_trace,
    score,
    unpack_covariance,
    wald_interval,
)
from .predict import (
    CompositionPrediction,
    ConditionalLaw,
    GaussHermiteRule,
    PredictiveSample,
    conditional_gaussian,
    expected_composition_gh,
    gauss_hermite_rule,
    make_prediction_grid,
    predict_grid,
    simulate_predictive,
)
from .simplex import (
    AlrVector,
    Composition,
    agl,
    agl_array,
    aln_log_density,
    alr,
    alr_array,
    closure,
    closure_array,
    geometric_mean,
)
from .simstudy import (
    ReplicateRecord,
    SimConfig,
    StudySummary,
    make_grid,
    preset_config,
    run_study,
    simulate_dataset,
)
from .spatial import (
    BlockCovariance,
    CorrelationFamily,
    CovarianceParams,
    SpatialLocations,
    build_sigma,
    correlation,
    cross_sigma,
    distance_matrix,
    sigma_derivative,
)

__version__ = "0.1.0"
