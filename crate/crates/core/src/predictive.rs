//! Posterior predictive distribution of next-period wealth, credible bands
//! and default probabilities.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::posterior::PosteriorParams;
use crate::random::{RngStream, StreamId, StudentT};
use crate::stats::{quantile_type7, sorted_copy};
use crate::weights::sample_chunked;

/// Draws of next-period wealth `Ŵ_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthSampleBatch {
    pub draws: Vec<f64>,
    pub seed: StreamId,
    /// Label of the period the wealth refers to, if known.
    pub period: Option<String>,
}

impl WealthSampleBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.draws)
    }
}

/// Equal-tailed credible interval with the predictive mean as point value.
///
/// `point` is a mean, not a median, so for very skewed batches and narrow
/// levels it can fall outside `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleBand {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
}

impl CredibleBand {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `W_{t−1}(1 + r_f + vᵀ(X_t − r_f·1))`.
pub fn wealth_step(w_prev: f64, v: &DVector<f64>, realized_returns: &DVector<f64>, rf_next: f64) -> f64 {
    w_prev * (1.0 + rf_next + v.dot(&realized_returns.add_scalar(-rf_next)))
}

/// Draws from the posterior predictive law of next-period wealth for a fixed
/// holding `v`:
///
/// `W(1 + r_f + vᵀ(mean − r_f·1) + √(vᵀ S v)·κ)`,
/// `κ = t₁/√(v_y·d_y) + √(1 + t₁²/d_y)·t₂/√(d_y + 1)`,
///
/// with `t₁ ~ t_{d_y}`, `t₂ ~ t_{d_y+1}` independent, `d_y = t_df`,
/// `v_y = precision` and `S` the posterior scale.
pub fn sample_predictive_wealth(
    post: &PosteriorParams,
    v: &DVector<f64>,
    w_now: f64,
    rf_next: f64,
    b: usize,
    rng: &RngStream,
) -> Result<WealthSampleBatch> {
    if v.len() != post.k() {
        return Err(MppError::DimensionMismatch {
            expected: post.k(),
            actual: v.len(),
        });
    }
    if b == 0 {
        return Err(MppError::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    if !(post.t_df > 0.0) {
        return Err(MppError::InsufficientSample(format!(
            "predictive law needs positive t degrees of freedom, got {}",
            post.t_df
        )));
    }
    if !w_now.is_finite() || !rf_next.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(MppError::InvalidInput("wealth, rate and holding must be finite".into()));
    }
    let d = post.t_df;
    let t1 = StudentT::new(d)?;
    let t2 = StudentT::new(d + 1.0)?;
    let drift = 1.0 + rf_next + v.dot(&post.mean_vector().add_scalar(-rf_next));
    let spread = post.scale.quad_form(v).max(0.0).sqrt();
    let a1 = 1.0 / (post.precision * d).sqrt();
    let a2 = 1.0 / (d + 1.0).sqrt();
    let draws = if spread == 0.0 {
        vec![w_now * drift; b]
    } else {
        sample_chunked(b, 1, rng, |r| {
            let x1 = t1.sample(r);
            let x2 = t2.sample(r);
            let kappa = x1 * a1 + (1.0 + x1 * x1 / d).sqrt() * x2 * a2;
            Ok(DVector::from_element(1, w_now * (drift + spread * kappa)))
        })?
        .as_slice()
        .to_vec()
    };
    Ok(WealthSampleBatch {
        draws,
        seed: rng.id(),
        period: None,
    })
}

/// Equal-tailed band `[q_{(1−level)/2}, q_{(1+level)/2}]` from type-7
/// empirical quantiles.
pub fn credible_band(batch: &WealthSampleBatch, level: f64) -> Result<CredibleBand> {
    const MIN: usize = 100;
    if !(level > 0.0 && level < 1.0) {
        return Err(MppError::InvalidLevel(level));
    }
    if batch.len() < MIN {
        return Err(MppError::TooFewSamples {
            required: MIN,
            actual: batch.len(),
        });
    }
    let sorted = sorted_copy(&batch.draws);
    Ok(CredibleBand {
        level,
        lower: quantile_type7(&sorted, (1.0 - level) / 2.0),
        upper: quantile_type7(&sorted, (1.0 + level) / 2.0),
        point: batch.mean(),
    })
}

/// Share of draws with strictly negative wealth. Zero wealth is not a default.
pub fn default_probability(batch: &WealthSampleBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch.draws.iter().filter(|w| **w < 0.0).count() as f64 / batch.len() as f64
}
