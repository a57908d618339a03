"""Bayesian free-knot spline regression via auxiliary-variable MCMC."""

from .basis import (
    Dataset,
    DesignBuilder,
    DesignMatrix,
    IntervalPartition,
    KnotState,
    RankDeficiencyError,
    bspline_design,
    changepoint_design,
    default_intervals,
    periodic_full_coefficients,
    periodic_linear_design,
    truncated_power_design,
)
from .conjugate import (
    MarginalPosteriorValue,
    SamplerConfig,
    log_marginal_posterior,
    make_rng,
    posterior_mean_beta,
    propose_add_delete,
    propose_swap,
    run_gaussian_chain,
    shrinkage_residual,
    update_gamma_step,
    update_z_step,
)
from .glm import (
    FitModeError,
    GlmState,
    ModeFit,
    ProposalScales,
    fit_mode,
    joint_update_z_beta,
    log_joint_posterior_glm,
    refresh_beta,
    run_glm_chain,
    update_gamma_glm,
)
from .models import (
    GaussianVarianceModel,
    GpdConfig,
    GpdSeasonalModel,
    PoissonLogLinkModel,
    changepoint_loglik,
    gpd_loglik,
    gpd_seasonal_loglik,
    poisson_loglik,
    return_level,
    tombs_coefficients,
)
from .outputs import (
    Chain,
    ChainSample,
    bma_curve,
    curve_samples,
    diagnostics,
    map_estimate,
    mse,
    pointwise_bands,
)
from .priors import PriorConfig, default_c, log_gamma_prior, log_gprior, log_trunc_poisson
from .simulate import simulate_example, true_function
from .studies import StudySettings, replicate_study

__version__ = "0.1.0"
