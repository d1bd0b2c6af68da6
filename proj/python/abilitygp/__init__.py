"""Joint local predictive ability of experts via a correlated multi-output GP
on cube-root transformed log scores, with locally weighted forecast pools."""

from ._core import (
    AbilityDraws,
    BacktestRecord,
    ChainDiagnostics,
    HmcConfig,
    HyperParams,
    LatentPosterior,
    LogPosterior,
    McmcResult,
    NumericalError,
    PosteriorDraws,
    PriorConfig,
    ScorePanel,
    SimConfig,
    TransformedPanel,
    ValidationError,
    bulk_ess,
    compute_a,
    cross_cov,
    dynamic_backtest,
    elpd_from_latent,
    equal_weights,
    fit_panel,
    gen_dataset,
    grad_log_marginal_posterior,
    hmc_sample,
    hmc_sample_fn,
    joint_truth_density,
    latent_posterior_at,
    lkj_log_pdf,
    log_marginal_posterior,
    log_prior,
    marginal_cov,
    natural_weights,
    pooled_log_score,
    prob_second_best_gaussian,
    psi,
    rwm_sample_fn,
    sample_ability,
    se_ard,
    selection_weights,
    softmax_weights,
    split_rhat,
    transform_scores,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
