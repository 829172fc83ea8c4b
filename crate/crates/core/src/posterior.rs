//! Posterior parameters of the normal model under the diffuse (Jeffreys)
//! and conjugate (normal-inverse-Wishart) priors, and the empirical-Bayes
//! fit of the conjugate hyperparameters.
//!
//! Both posteriors share one shape: the marginal of `μ` is a multivariate t
//! with `t_df` degrees of freedom, location `mean` and dispersion
//! `scale / (precision · t_df)`, and given `μ` the covariance is
//! inverse-Wishart with `iw_df` degrees of freedom and scale
//! `scale + precision · (μ − mean)(μ − mean)ᵀ`. Equivalently `Σ⁻¹ | μ` is
//! Wishart with `chi2_df = iw_df − k − 1` degrees of freedom.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::linalg::SpdMatrix;

/// An `n×k` block of net simple returns with asset and date labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsWindow {
    assets: Vec<String>,
    dates: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnsWindow {
    pub fn new(assets: Vec<String>, dates: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if assets.is_empty() {
            return Err(MppError::InvalidInput("returns window has no assets".into()));
        }
        if returns.ncols() != assets.len() {
            return Err(MppError::DimensionMismatch {
                expected: assets.len(),
                actual: returns.ncols(),
            });
        }
        if returns.nrows() != dates.len() {
            return Err(MppError::DimensionMismatch {
                expected: dates.len(),
                actual: returns.nrows(),
            });
        }
        if returns.nrows() < 2 {
            return Err(MppError::InsufficientData(format!(
                "need at least 2 return observations, got {}",
                returns.nrows()
            )));
        }
        if let Some((i, _)) = returns.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (i % returns.nrows(), i / returns.nrows());
            return Err(MppError::InvalidInput(format!(
                "non-finite return at row {row}, column {col}"
            )));
        }
        Ok(ReturnsWindow {
            assets,
            dates,
            returns,
        })
    }

    /// Window with generated labels `A1..Ak` and dates `0..n`; handy for
    /// synthetic data.
    pub fn unlabeled(returns: DMatrix<f64>) -> Result<Self> {
        let assets = (1..=returns.ncols()).map(|j| format!("A{j}")).collect();
        let dates = (0..returns.nrows()).map(|i| i.to_string()).collect();
        Self::new(assets, dates, returns)
    }

    pub fn n(&self) -> usize {
        self.returns.nrows()
    }

    pub fn k(&self) -> usize {
        self.returns.ncols()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.returns.row(i).transpose()
    }

    /// Rows `start .. start + len`.
    pub fn rows(&self, start: usize, len: usize) -> Result<ReturnsWindow> {
        if start + len > self.n() {
            return Err(MppError::InsufficientData(format!(
                "rows {start}..{} requested from a window of {} rows",
                start + len,
                self.n()
            )));
        }
        ReturnsWindow::new(
            self.assets.clone(),
            self.dates[start..start + len].to_vec(),
            self.returns.rows(start, len).into_owned(),
        )
    }

    /// Columns reordered so that new column `j` is old column `order[j]`.
    pub fn permuted_assets(&self, order: &[usize]) -> Result<ReturnsWindow> {
        let assets = order.iter().map(|&j| self.assets[j].clone()).collect();
        let returns = DMatrix::from_fn(self.n(), self.k(), |i, j| self.returns[(i, order[j])]);
        ReturnsWindow::new(assets, self.dates.clone(), returns)
    }
}

/// Hyperparameters of the normal-inverse-Wishart prior
/// `μ | Σ ~ N(m0, Σ/r0)`, `Σ ~ IW(d0, S0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePrior {
    pub m0: Vec<f64>,
    pub r0: f64,
    pub d0: f64,
    pub s0: SpdMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    Diffuse,
    Conjugate(ConjugatePrior),
}

impl PriorSpec {
    /// Validated conjugate prior; requires `d0 > k + 1` and `r0 > 0`.
    pub fn conjugate(m0: DVector<f64>, r0: f64, d0: f64, s0: SpdMatrix) -> Result<Self> {
        let prior = ConjugatePrior {
            m0: m0.iter().copied().collect(),
            r0,
            d0,
            s0,
        };
        prior.validate()?;
        Ok(PriorSpec::Conjugate(prior))
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            PriorSpec::Diffuse => PriorKind::Diffuse,
            PriorSpec::Conjugate(_) => PriorKind::Conjugate,
        }
    }
}

impl ConjugatePrior {
    pub fn k(&self) -> usize {
        self.m0.len()
    }

    pub fn m0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.m0)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.s0.dim() != k {
            return Err(MppError::DimensionMismatch {
                expected: k,
                actual: self.s0.dim(),
            });
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(MppError::InvalidPrior(format!("r0 = {} must be positive", self.r0)));
        }
        if !(self.d0 > k as f64 + 1.0 && self.d0.is_finite()) {
            return Err(MppError::InvalidDf(format!(
                "d0 = {} must exceed k + 1 = {}",
                self.d0,
                k + 1
            )));
        }
        if self.m0.iter().any(|v| !v.is_finite()) {
            return Err(MppError::InvalidPrior("m0 has a non-finite entry".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Diffuse,
    Conjugate,
}

/// Posterior of `(μ, Σ)` given one estimation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorParams {
    pub prior_kind: PriorKind,
    /// Posterior location of `μ` (sample mean, or the shrunk mean).
    pub mean: Vec<f64>,
    /// `S_{t,d} = (n−1)S_t` under the diffuse prior, `S_{t,c}` under the conjugate one.
    pub scale: SpdMatrix,
    /// Degrees of freedom of the marginal t of `μ`.
    pub t_df: f64,
    /// Wishart degrees of freedom of `Σ⁻¹ | μ`.
    pub chi2_df: f64,
    /// Inverse-Wishart degrees of freedom of `Σ | μ`.
    pub iw_df: f64,
    /// Multiplier of the `(μ − mean)(μ − mean)ᵀ` term in the conditional scale.
    pub precision: f64,
    /// Number of observations in the estimation window.
    pub n_obs: usize,
}

impl PosteriorParams {
    pub fn k(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    /// Factor `m − 1` (`n − 1` diffuse, `n + d0 − k − 1` conjugate) that turns
    /// `scale⁻¹` into the posterior-mean precision estimate.
    pub fn bayes_multiplier(&self) -> f64 {
        self.chi2_df - 1.0
    }

    /// Consistent estimate of `Σ` implied by the scale: `S_{t,d}/(n−1)` or
    /// `S_{t,c}/(n + r0)`.
    pub fn covariance_estimate(&self) -> Result<SpdMatrix> {
        let divisor = match self.prior_kind {
            PriorKind::Diffuse => self.n_obs as f64 - 1.0,
            PriorKind::Conjugate => self.precision,
        };
        self.scale.scaled(1.0 / divisor)
    }

    /// Conditional inverse-Wishart scale `scale + precision·(μ − mean)(μ − mean)ᵀ`.
    pub fn conditional_scale(&self, mu: &DVector<f64>) -> Result<SpdMatrix> {
        let d = mu - self.mean_vector();
        SpdMatrix::new(self.scale.as_matrix() + (&d * d.transpose()) * self.precision)
    }

    /// Dispersion of the marginal t of `μ`: `scale / (precision · t_df)`.
    pub fn mean_dispersion(&self) -> Result<SpdMatrix> {
        self.scale.scaled(1.0 / (self.precision * self.t_df))
    }
}

/// Sample mean and unbiased sample covariance (divisor `n − 1`).
pub fn sample_moments(window: &ReturnsWindow) -> Result<(DVector<f64>, SpdMatrix)> {
    let n = window.n();
    if n <= window.k() {
        // Rank-deficient even when rounding lets a Cholesky through.
        return Err(MppError::DegenerateSample(format!(
            "{n} observations cannot give a nonsingular covariance for {} assets",
            window.k()
        )));
    }
    let x = window.returns();
    let mean = x.row_mean().transpose();
    let centered = DMatrix::from_fn(n, window.k(), |i, j| x[(i, j)] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let cov = SpdMatrix::new(cov).map_err(|e| {
        MppError::DegenerateSample(format!(
            "sample covariance of {n} observations on {} assets is not positive definite ({e})",
            window.k()
        ))
    })?;
    Ok((mean, cov))
}

/// Posterior parameters for a window under the given prior.
pub fn posterior_params(window: &ReturnsWindow, prior: &PriorSpec) -> Result<PosteriorParams> {
    let n = window.n();
    let k = window.k();
    let nf = n as f64;
    let kf = k as f64;
    let (xbar, cov) = sample_moments(window)?;
    let s_d = cov.scaled(nf - 1.0)?;
    match prior {
        PriorSpec::Diffuse => Ok(PosteriorParams {
            prior_kind: PriorKind::Diffuse,
            mean: xbar.iter().copied().collect(),
            scale: s_d,
            t_df: nf - kf,
            chi2_df: nf,
            iw_df: nf + kf + 1.0,
            precision: nf,
            n_obs: n,
        }),
        PriorSpec::Conjugate(p) => {
            p.validate()?;
            if p.k() != k {
                return Err(MppError::DimensionMismatch {
                    expected: k,
                    actual: p.k(),
                });
            }
            let t_df = nf + p.d0 - 2.0 * kf;
            if t_df <= 0.0 {
                return Err(MppError::InsufficientSample(format!(
                    "conjugate posterior needs n + d0 - 2k > 0, got {t_df}"
                )));
            }
            let m0 = p.m0_vector();
            let precision = nf + p.r0;
            let mean = (&xbar * nf + &m0 * p.r0) / precision;
            // Completing the square in μ leaves the prior/data mean gap
            // (m0 − x̄), weighted by n·r0/(n + r0).
            let gap = &m0 - &xbar;
            let scale = s_d.as_matrix()
                + p.s0.as_matrix()
                + (&gap * gap.transpose()) * (nf * p.r0 / precision);
            Ok(PosteriorParams {
                prior_kind: PriorKind::Conjugate,
                mean: mean.iter().copied().collect(),
                scale: SpdMatrix::new(scale)?,
                t_df,
                chi2_df: nf + p.d0 - kf,
                iw_df: nf + p.d0 + 1.0,
                precision,
                n_obs: n,
            })
        }
    }
}

/// Empirical-Bayes hyperparameters from a presample: maximizing the marginal
/// likelihood gives `m0 = x̄` and `S0 = ((d0 − k − 1)(n − 1)/n)·S`.
pub fn empirical_bayes_hyperparams(
    presample: &ReturnsWindow,
    d0: f64,
) -> Result<(DVector<f64>, SpdMatrix)> {
    let n = presample.n();
    let k = presample.k();
    if !(d0 > k as f64 + 1.0 && d0.is_finite()) {
        return Err(MppError::InvalidDf(format!("d0 = {d0} must exceed k + 1 = {}", k + 1)));
    }
    if n <= k {
        return Err(MppError::InsufficientSample(format!(
            "presample needs n > k, got n = {n}, k = {k}"
        )));
    }
    let (mean, cov) = sample_moments(presample)?;
    let nf = n as f64;
    let factor = (d0 - k as f64 - 1.0) * (nf - 1.0) / nf;
    Ok((mean, cov.scaled(factor)?))
}
