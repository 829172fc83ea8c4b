//! Multi-period optimal portfolio weights under exponential utility.
//!
//! With known parameters the optimal weights are
//! `w_t = C_t Σ⁻¹(μ − r_{f,t+1}·1)`, `C_t = 1/(γ W_t ∏_{i=t+2}^T (1 + r_{f,i}))`.
//! This module evaluates them at known or estimated parameters, gives the
//! posterior mean and covariance in closed form, and draws from the posterior
//! of `L·w_t` with two equivalent stochastic representations:
//!
//! * [`sample_weights_basic`] draws `μ` from its marginal t, then the
//!   conditional law of `L·w_t` given `μ`, inverting the conditional scale on
//!   every draw.
//! * [`sample_weights_fast`] rewrites the same law through `Q ~ F(k, t_df)`
//!   and `u` uniform on the unit sphere, so the only inverses are computed
//!   once per batch.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::linalg::{psd_sqrt_with_reference, spd_inv_sqrt, spd_inverse, SpdMatrix};
use crate::posterior::{sample_moments, PosteriorParams, ReturnsWindow};
use crate::random::{
    sample_unit_sphere, standard_normal_vector, ChiSquare, FDist, MultivariateT, RngStream,
    StreamId,
};
use crate::stats::{jarque_bera, TestResult};

/// Draws per parallel chunk; chunk `j` consumes child stream `j`.
pub const CHUNK_SIZE: usize = 1024;

const SELECTOR_RANK_TOL: f64 = 1e-10;

/// Investor and market state at period `t` of a horizon of `T` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioContext {
    pub gamma: f64,
    pub wealth: f64,
    pub t: usize,
    pub horizon: usize,
    /// `rf_schedule[i - 1]` is the net risk-free rate `r_{f,i}` of period `i`.
    pub rf_schedule: Vec<f64>,
}

impl PortfolioContext {
    pub fn new(gamma: f64, wealth: f64, t: usize, horizon: usize, rf_schedule: Vec<f64>) -> Result<Self> {
        let ctx = PortfolioContext {
            gamma,
            wealth,
            t,
            horizon,
            rf_schedule,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Context with a flat risk-free rate over the whole horizon.
    pub fn flat(gamma: f64, wealth: f64, t: usize, horizon: usize, rf: f64) -> Result<Self> {
        Self::new(gamma, wealth, t, horizon, vec![rf; horizon])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(MppError::InvalidContext(format!("gamma = {} must be positive", self.gamma)));
        }
        if !self.wealth.is_finite() {
            return Err(MppError::InvalidContext("wealth is not finite".into()));
        }
        if self.horizon == 0 || self.t >= self.horizon {
            return Err(MppError::InvalidContext(format!(
                "period t = {} must lie in 0..{}",
                self.t, self.horizon
            )));
        }
        if self.rf_schedule.len() < self.horizon {
            return Err(MppError::InvalidContext(format!(
                "risk-free schedule has {} rates, horizon needs {}",
                self.rf_schedule.len(),
                self.horizon
            )));
        }
        if let Some(r) = self.rf_schedule.iter().find(|r| !(**r > -1.0 && r.is_finite())) {
            return Err(MppError::InvalidContext(format!("risk-free rate {r} must exceed -1")));
        }
        Ok(())
    }

    /// `r_{f,t+1}`, the rate earned over the coming period.
    pub fn rf_next(&self) -> f64 {
        self.rf_schedule[self.t]
    }

    /// Same investor at another period and wealth level.
    pub fn at_period(&self, t: usize, wealth: f64) -> Result<Self> {
        Self::new(self.gamma, wealth, t, self.horizon, self.rf_schedule.clone())
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(gamma, self.wealth, self.t, self.horizon, self.rf_schedule.clone())
    }

    /// `C_t`. The product over `i = t+2..=T` is empty (= 1) in the last period.
    pub fn discount_factor(&self) -> Result<f64> {
        self.validate()?;
        if self.wealth == 0.0 {
            return Err(MppError::ZeroWealth);
        }
        let growth: f64 = self.rf_schedule[self.t + 1..self.horizon]
            .iter()
            .map(|r| 1.0 + r)
            .product();
        Ok(1.0 / (self.gamma * self.wealth * growth))
    }

    fn excess(&self, mean: &DVector<f64>) -> DVector<f64> {
        mean.add_scalar(-self.rf_next())
    }
}

/// Known mean vector and covariance matrix of the returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    pub mu: Vec<f64>,
    pub sigma: SpdMatrix,
}

impl LatentParams {
    pub fn new(mu: DVector<f64>, sigma: SpdMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(MppError::DimensionMismatch {
                expected: sigma.dim(),
                actual: mu.len(),
            });
        }
        Ok(LatentParams {
            mu: mu.iter().copied().collect(),
            sigma,
        })
    }
}

/// A `p×k` matrix of full row rank selecting linear combinations of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Selector(DMatrix<f64>);

impl Selector {
    pub fn identity(k: usize) -> Self {
        Selector(DMatrix::identity(k, k))
    }

    pub fn new(l: DMatrix<f64>, k: usize) -> Result<Self> {
        if l.ncols() != k {
            return Err(MppError::InvalidSelector(format!(
                "selector has {} columns, portfolio has {k} assets",
                l.ncols()
            )));
        }
        if l.nrows() == 0 || l.nrows() > k {
            return Err(MppError::InvalidSelector(format!(
                "selector needs between 1 and {k} rows, got {}",
                l.nrows()
            )));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(MppError::InvalidSelector("selector has a non-finite entry".into()));
        }
        let sv = l.singular_values();
        let (max, min) = (sv.max(), sv.min());
        if !(max > 0.0) || min <= SELECTOR_RANK_TOL * max {
            return Err(MppError::InvalidSelector(format!(
                "selector is rank deficient (singular values {min:e}..{max:e})"
            )));
        }
        Ok(Selector(l))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `B` posterior draws of `L·w_t`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSampleBatch {
    pub draws: DMatrix<f64>,
    pub seed: StreamId,
    pub posterior: PosteriorParams,
    pub context: PortfolioContext,
    pub selector: Selector,
}

impl WeightSampleBatch {
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Basic,
    Fast,
}

/// `C_t Σ⁻¹(μ − r_{f,t+1}·1)`.
pub fn oracle_weights(params: &LatentParams, ctx: &PortfolioContext) -> Result<DVector<f64>> {
    let c = ctx.discount_factor()?;
    let mu = DVector::from_column_slice(&params.mu);
    let chol = params.sigma.as_matrix().clone().cholesky().ok_or_else(|| {
        MppError::NotSpd("covariance matrix has no Cholesky factor".into())
    })?;
    Ok(chol.solve(&ctx.excess(&mu)) * c)
}

/// Optimal weights with the sample mean and covariance plugged in.
pub fn plugin_weights(window: &ReturnsWindow, ctx: &PortfolioContext) -> Result<DVector<f64>> {
    let (mean, cov) = sample_moments(window)?;
    oracle_weights(&LatentParams::new(mean, cov)?, ctx)
}

/// Posterior mean of `w_t`: `C_t (m − 1) S⁻¹(mean − r_{f,t+1}·1)` with
/// `m = chi2_df`.
pub fn bayes_estimate(post: &PosteriorParams, ctx: &PortfolioContext) -> Result<DVector<f64>> {
    let c = ctx.discount_factor()?;
    let s_inv = spd_inverse(&post.scale)?;
    let g = ctx.excess(&post.mean_vector());
    Ok(s_inv.as_matrix() * g * (c * post.bayes_multiplier()))
}

/// Exact posterior covariance of `w_t`:
/// `C²(m − 1)[S⁻¹ggᵀS⁻¹ + ((1 + b)/v)S⁻¹]` with `g = mean − r_{f,t+1}·1`,
/// `m = chi2_df`, `v = precision`, `b = v·gᵀS⁻¹g`.
///
/// Follows from `Σ⁻¹ | μ ~ W(m, S*(μ)⁻¹)` and the F/sphere representation of
/// `μ`; Monte Carlo agreement is part of the test suite.
pub fn weight_covariance(post: &PosteriorParams, ctx: &PortfolioContext) -> Result<SpdMatrix> {
    let c = ctx.discount_factor()?;
    let s_inv = spd_inverse(&post.scale)?.into_inner();
    let g = ctx.excess(&post.mean_vector());
    let a = &s_inv * &g;
    let v = post.precision;
    let b = v * g.dot(&a);
    let m = post.chi2_df;
    let cov = (&a * a.transpose() + &s_inv * ((1.0 + b) / v)) * (c * c * (m - 1.0));
    SpdMatrix::new(cov)
}

/// Large-sample limit of `n·Cov(w_t)`, shared by both priors:
/// `C²[S̆⁻¹ggᵀS̆⁻¹ + (1 + gᵀS̆⁻¹g)S̆⁻¹]`, evaluated at the posterior mean and
/// the covariance estimate of [`PosteriorParams::covariance_estimate`].
pub fn asymptotic_covariance(post: &PosteriorParams, ctx: &PortfolioContext) -> Result<SpdMatrix> {
    let c = ctx.discount_factor()?;
    let s_inv = spd_inverse(&post.covariance_estimate()?)?.into_inner();
    let g = ctx.excess(&post.mean_vector());
    let a = &s_inv * &g;
    let cov = (&a * a.transpose() + &s_inv * (1.0 + g.dot(&a))) * (c * c);
    SpdMatrix::new(cov)
}

fn check_inputs(post: &PosteriorParams, ctx: &PortfolioContext, b: usize, selector: &Selector) -> Result<f64> {
    if b == 0 {
        return Err(MppError::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    if selector.k() != post.k() {
        return Err(MppError::InvalidSelector(format!(
            "selector has {} columns, posterior has {} assets",
            selector.k(),
            post.k()
        )));
    }
    ctx.discount_factor()
}

/// Runs `draw` for `b` draws in chunks of [`CHUNK_SIZE`], chunk `j` on child
/// stream `j`, and stacks the `p`-vectors into a `b×p` matrix in chunk order.
pub(crate) fn sample_chunked<F>(b: usize, p: usize, rng: &RngStream, draw: F) -> Result<DMatrix<f64>>
where
    F: Fn(&mut RngStream) -> Result<DVector<f64>> + Sync,
{
    let chunks = b.div_ceil(CHUNK_SIZE);
    let parts: Vec<Result<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let len = CHUNK_SIZE.min(b - j * CHUNK_SIZE);
            let mut child = rng.child(j as u64);
            let mut out = Vec::with_capacity(len * p);
            for _ in 0..len {
                out.extend(draw(&mut child)?.iter());
            }
            Ok(out)
        })
        .collect();
    let mut data = Vec::with_capacity(b * p);
    for part in parts {
        data.extend(part?);
    }
    Ok(DMatrix::from_row_slice(b, p, &data))
}

/// `C(η·La + √η·M^{1/2} z₀)` with `M = ε·LΥLᵀ − La·Laᵀ`, `η ~ χ²_m` and
/// `z₀ ~ N_p(0, I)`.
///
/// `M` has rank at most `k − 1`, so it vanishes identically for `k = 1`.
/// Otherwise rounding is judged against `eps_scale`, the magnitude of the
/// terms summed into `ε`, rather than against `M` itself.
#[allow(clippy::too_many_arguments)]
fn assemble(
    c: f64,
    chi2: &ChiSquare,
    k: usize,
    eps: f64,
    eps_scale: f64,
    l_ups_l: &DMatrix<f64>,
    la: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let eta = chi2.sample(rng);
    if k == 1 {
        return Ok(la * (eta * c));
    }
    let outer = la * la.transpose();
    let m = l_ups_l * eps - &outer;
    let reference = (l_ups_l.amax() * eps_scale).max(outer.amax());
    let root = psd_sqrt_with_reference(&m, reference)?.root;
    let z0 = standard_normal_vector(la.len(), rng);
    Ok((la * eta + root * z0 * eta.sqrt()) * c)
}

/// Posterior draws of `L·w_t` via the conditional-on-`μ` representation.
pub fn sample_weights_basic(
    post: &PosteriorParams,
    ctx: &PortfolioContext,
    b: usize,
    selector: &Selector,
    rng: &RngStream,
) -> Result<WeightSampleBatch> {
    let c = check_inputs(post, ctx, b, selector)?;
    let k = post.k();
    let mean = post.mean_vector();
    let mvt = MultivariateT::new(post.t_df, mean.clone(), &post.mean_dispersion()?)?;
    let chi2 = ChiSquare::new(post.chi2_df)?;
    let l = selector.as_matrix();
    let rf = ctx.rf_next();
    let draws = sample_chunked(b, selector.p(), rng, |r| {
        let mu = mvt.sample(r);
        let s_star_inv = spd_inverse(&post.conditional_scale(&mu)?)?.into_inner();
        let g_mu = mu.add_scalar(-rf);
        let a = &s_star_inv * &g_mu;
        let la = l * &a;
        let l_ups_l = l * &s_star_inv * l.transpose();
        let eps = g_mu.dot(&a);
        assemble(c, &chi2, k, eps, eps, &l_ups_l, &la, r)
    })?;
    Ok(WeightSampleBatch {
        draws,
        seed: rng.id(),
        posterior: post.clone(),
        context: ctx.clone(),
        selector: selector.clone(),
    })
}

/// Posterior draws of `L·w_t` via `(Q, u)`, with `S⁻¹` and `S^{-1/2}`
/// computed once per batch.
///
/// With `A = kQ/t_df`, `β = A/(1+A)`, `s = √A/(1+A)`, `h = S^{-1/2}g` and
/// `x = hᵀu`, the conditional quantities become
/// `ε = gᵀS⁻¹g + 2sx/√v + β/v − βx²`,
/// `ζ = S⁻¹g + (s/√v − βx)S^{-1/2}u` and `Υ = S⁻¹ − βS^{-1/2}uuᵀS^{-1/2}`.
pub fn sample_weights_fast(
    post: &PosteriorParams,
    ctx: &PortfolioContext,
    b: usize,
    selector: &Selector,
    rng: &RngStream,
) -> Result<WeightSampleBatch> {
    let c = check_inputs(post, ctx, b, selector)?;
    let k = post.k();
    let kf = k as f64;
    let s_inv = spd_inverse(&post.scale)?.into_inner();
    let s_inv_half = spd_inv_sqrt(&post.scale)?.into_inner();
    let g = ctx.excess(&post.mean_vector());
    let h = &s_inv_half * &g;
    let g_s_g = h.dot(&h);
    let l = selector.as_matrix();
    let l_s_g = l * (&s_inv * &g);
    let l_s_l = l * &s_inv * l.transpose();
    let l_s_half = l * &s_inv_half;
    let sqrt_v = post.precision.sqrt();
    let v = post.precision;
    let f = FDist::new(kf, post.t_df)?;
    let chi2 = ChiSquare::new(post.chi2_df)?;
    let draws = sample_chunked(b, selector.p(), rng, |r| {
        let q = f.sample(r);
        let u = sample_unit_sphere(k, r);
        let a = kf * q / post.t_df;
        let beta = a / (1.0 + a);
        let s = a.sqrt() / (1.0 + a);
        let x = h.dot(&u);
        let eps = g_s_g + 2.0 * s * x / sqrt_v + beta / v - beta * x * x;
        let eps_scale = g_s_g + 2.0 * s * x.abs() / sqrt_v + beta / v + beta * x * x;
        let w_u = &l_s_half * &u;
        let l_zeta = &l_s_g + &w_u * (s / sqrt_v - beta * x);
        let l_ups_l = &l_s_l - &w_u * w_u.transpose() * beta;
        assemble(c, &chi2, k, eps, eps_scale, &l_ups_l, &l_zeta, r)
    })?;
    Ok(WeightSampleBatch {
        draws,
        seed: rng.id(),
        posterior: post.clone(),
        context: ctx.clone(),
        selector: selector.clone(),
    })
}

pub fn sample_weights(
    kind: SamplerKind,
    post: &PosteriorParams,
    ctx: &PortfolioContext,
    b: usize,
    selector: &Selector,
    rng: &RngStream,
) -> Result<WeightSampleBatch> {
    match kind {
        SamplerKind::Basic => sample_weights_basic(post, ctx, b, selector, rng),
        SamplerKind::Fast => sample_weights_fast(post, ctx, b, selector, rng),
    }
}

/// Centers each column at the Bayes estimate and scales it by the exact
/// posterior standard deviation (both mapped through the batch selector).
pub fn standardize_batch(
    batch: &WeightSampleBatch,
    post: &PosteriorParams,
    ctx: &PortfolioContext,
) -> Result<DMatrix<f64>> {
    let l = batch.selector.as_matrix();
    let center = l * bayes_estimate(post, ctx)?;
    let cov = l * weight_covariance(post, ctx)?.as_matrix() * l.transpose();
    let mut sd = Vec::with_capacity(cov.nrows());
    for j in 0..cov.nrows() {
        let var = cov[(j, j)];
        if !(var > 0.0 && var.is_finite()) {
            return Err(MppError::DegenerateVariance(format!(
                "posterior variance of coordinate {j} is {var:e}"
            )));
        }
        sd.push(var.sqrt());
    }
    Ok(DMatrix::from_fn(batch.draws.nrows(), batch.draws.ncols(), |i, j| {
        (batch.draws[(i, j)] - center[j]) / sd[j]
    }))
}

/// Jarque–Bera normality test of one coordinate of a standardized batch.
pub fn normality_check(samples: &[f64]) -> Result<TestResult> {
    jarque_bera(samples)
}
