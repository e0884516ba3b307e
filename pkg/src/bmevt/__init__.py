"""Block maxima inference for stationary time series.

Fits the generalized extreme value (GEV) distribution to disjoint block
maxima, estimates the extremal index from sliding blocks, and turns both
into risk functionals (T-horizon return levels, extreme value-at-risk)
with frequentist and Bayesian interval estimators.  A small simulation
suite and a Monte-Carlo coverage harness are included; the ``bm-evt``
command line exposes everything.
"""

from bmevt.gev import (
    GevParams,
    gev_cdf,
    gev_log_density,
    gev_model_quantile,
    gev_quantile,
    gev_quantile_dgamma,
    gev_support,
)
from bmevt.blocks import BlockConfig, PseudoObs, block_maxima, ecdf, pseudo_observations
from bmevt.freq import (
    GevFit,
    RiskQuery,
    ThetaFit,
    ci_asymmetric_mc,
    ci_gamma_symmetric,
    ci_return_level_symmetric,
    ci_theta_symmetric,
    ci_var_symmetric,
    expected_information,
    fit_gev_mle,
    fit_theta,
    gev_loglik,
    return_level_point,
    theta_mle,
    theta_sliding_variance,
    var_point,
)
from bmevt.bayes import (
    ChainConfig,
    PosteriorChain,
    PriorSpec,
    ThetaPosterior,
    ThetaPriorSpec,
    credible_interval_asymmetric,
    credible_interval_symmetric,
    log_posterior_unnorm,
    log_prior,
    rl_posterior,
    sample_posterior,
    theta_posterior,
    var_posterior,
)
from bmevt.simulate import (
    DgpSpec,
    GroundTruth,
    ground_truth_quantiles,
    simulate_arch,
    simulate_armax,
    simulate_clayton_markov,
    simulate_series,
)
from bmevt.harness import ExperimentConfig, diagnose_blocks, run_coverage, run_mse_ratio

__version__ = "0.1.0"

__all__ = [
    "GevParams",
    "gev_cdf",
    "gev_log_density",
    "gev_quantile",
    "gev_quantile_dgamma",
    "gev_model_quantile",
    "gev_support",
    "BlockConfig",
    "PseudoObs",
    "block_maxima",
    "ecdf",
    "pseudo_observations",
    "GevFit",
    "ThetaFit",
    "RiskQuery",
    "gev_loglik",
    "fit_gev_mle",
    "expected_information",
    "ci_gamma_symmetric",
    "theta_mle",
    "theta_sliding_variance",
    "fit_theta",
    "ci_theta_symmetric",
    "return_level_point",
    "ci_return_level_symmetric",
    "var_point",
    "ci_var_symmetric",
    "ci_asymmetric_mc",
    "PriorSpec",
    "ThetaPriorSpec",
    "ChainConfig",
    "PosteriorChain",
    "ThetaPosterior",
    "log_prior",
    "log_posterior_unnorm",
    "sample_posterior",
    "theta_posterior",
    "credible_interval_symmetric",
    "credible_interval_asymmetric",
    "rl_posterior",
    "var_posterior",
    "DgpSpec",
    "GroundTruth",
    "simulate_armax",
    "simulate_clayton_markov",
    "simulate_arch",
    "simulate_series",
    "ground_truth_quantiles",
    "ExperimentConfig",
    "run_coverage",
    "run_mse_ratio",
    "diagnose_blocks",
]
