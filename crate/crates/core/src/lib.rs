//! Bayesian estimation of the multi-period optimal portfolio under
//! exponential utility.
//!
//! Returns are modelled as i.i.d. multivariate normal with unknown mean and
//! covariance. The crate computes posteriors under a diffuse or conjugate
//! prior, samples the posterior of the optimal weights, summarizes it in
//! closed form, simulates the posterior predictive wealth and runs rolling
//! backtests.

pub mod backtest;
pub mod error;
pub mod linalg;
pub mod posterior;
pub mod predictive;
pub mod random;
pub mod stats;
pub mod synthetic;
pub mod weights;

pub use backtest::{
    compare_priors, run_backtest, BacktestConfig, BacktestReport, PairedReport, PeriodRecord,
    PriorConfig, WeightPolicy,
};
pub use error::{MppError, Result};
pub use linalg::SpdMatrix;
pub use posterior::{
    empirical_bayes_hyperparams, posterior_params, sample_moments, ConjugatePrior,
    PosteriorParams, PriorKind, PriorSpec, ReturnsWindow,
};
pub use predictive::{
    credible_band, default_probability, sample_predictive_wealth, wealth_step, CredibleBand,
    WealthSampleBatch,
};
pub use random::{RngStream, StreamId};
pub use weights::{
    asymptotic_covariance, bayes_estimate, normality_check, oracle_weights, plugin_weights,
    sample_weights, sample_weights_basic, sample_weights_fast, standardize_batch,
    weight_covariance, LatentParams, PortfolioContext, SamplerKind, Selector, WeightSampleBatch,
};
