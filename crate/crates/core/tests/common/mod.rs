//! Two-stage reference samplers built straight from the model hierarchy,
//! sharing no sampling code with the library:
//!
//! 1. `μ` from its marginal multivariate t,
//! 2. `Σ⁻¹ | μ` from a Bartlett-decomposition Wishart draw,
//! 3. either the optimal weights at `(μ, Σ)` or next-period wealth under
//!    `X ~ N(μ, Σ)`.

#![allow(dead_code)]

use mpp_core::posterior::{posterior_params, PosteriorParams, PriorSpec, ReturnsWindow};
use mpp_core::synthetic::{gaussian_returns, weekly_market};
use mpp_core::{empirical_bayes_hyperparams, PortfolioContext};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

pub struct TwoStage {
    rng: ChaCha8Rng,
    k: usize,
    mean: DVector<f64>,
    scale: DMatrix<f64>,
    mu_factor: DMatrix<f64>,
    t_df: f64,
    wishart_df: f64,
    precision: f64,
}

impl TwoStage {
    pub fn new(post: &PosteriorParams, seed: u64) -> Self {
        let k = post.k();
        let scale = post.scale.as_matrix().clone();
        let disp = &scale / (post.precision * post.t_df);
        TwoStage {
            rng: ChaCha8Rng::seed_from_u64(seed),
            k,
            mean: post.mean_vector(),
            mu_factor: disp.cholesky().unwrap().l(),
            scale,
            t_df: post.t_df,
            // Σ | μ ~ IW with iw_df in the |Σ|^{-iw_df/2} convention, so
            // Σ⁻¹ | μ is Wishart with iw_df − k − 1 degrees of freedom.
            wishart_df: post.iw_df - k as f64 - 1.0,
            precision: post.precision,
        }
    }

    fn normals(&mut self, k: usize) -> DVector<f64> {
        DVector::from_fn(k, |_, _| StandardNormal.sample(&mut self.rng))
    }

    fn mu(&mut self) -> DVector<f64> {
        let z = self.normals(self.k);
        let chi: f64 = ChiSquared::new(self.t_df).unwrap().sample(&mut self.rng);
        &self.mean + &self.mu_factor * z * (self.t_df / chi).sqrt()
    }

    /// Bartlett draw of `W_k(df, V)`.
    fn wishart(&mut self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.k;
        let l = v.clone().cholesky().unwrap().l();
        let mut a = DMatrix::zeros(k, k);
        for i in 0..k {
            let chi: f64 = ChiSquared::new(self.wishart_df - i as f64).unwrap().sample(&mut self.rng);
            a[(i, i)] = chi.sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(&mut self.rng);
            }
        }
        let la = l * a;
        &la * la.transpose()
    }

    /// One joint draw of `(μ, Σ⁻¹)`.
    pub fn params(&mut self) -> (DVector<f64>, DMatrix<f64>) {
        let mu = self.mu();
        let d = &mu - &self.mean;
        let s_star = &self.scale + &d * d.transpose() * self.precision;
        let v = s_star.try_inverse().unwrap();
        let v = (&v + v.transpose()) * 0.5;
        let prec = self.wishart(&v);
        (mu, prec)
    }

    /// Draws of `C·Σ⁻¹(μ − r_f·1)`, one per row.
    pub fn weights(&mut self, ctx: &PortfolioContext, b: usize) -> DMatrix<f64> {
        let c = ctx.discount_factor().unwrap();
        let rf = ctx.rf_next();
        let mut out = DMatrix::zeros(b, self.k);
        for i in 0..b {
            let (mu, prec) = self.params();
            let w = prec * mu.add_scalar(-rf) * c;
            out.set_row(i, &w.transpose());
        }
        out
    }

    /// Draws of `W(1 + r_f + vᵀ(X − r_f·1))` with `X | μ, Σ ~ N(μ, Σ)`.
    pub fn wealth(&mut self, v: &DVector<f64>, w_now: f64, rf: f64, b: usize) -> Vec<f64> {
        (0..b)
            .map(|_| {
                let (mu, prec) = self.params();
                let sigma = prec.try_inverse().unwrap();
                let sigma = (&sigma + sigma.transpose()) * 0.5;
                let x = &mu + sigma.cholesky().unwrap().l() * self.normals(self.k);
                w_now * (1.0 + rf + v.dot(&x.add_scalar(-rf)))
            })
            .collect()
    }
}

/// Synthetic window of `n` weekly-scale rows on `k` assets.
pub fn window(n: usize, k: usize, seed: u64) -> ReturnsWindow {
    ReturnsWindow::unlabeled(gaussian_returns(&weekly_market(k).unwrap(), n, seed)).unwrap()
}

/// Posterior under `prior_kind` ("diffuse" or "conjugate"). The conjugate
/// prior is fitted by empirical Bayes on an independent presample of
/// `n` rows with `d0 = n` and `r0 = 5`.
pub fn posterior(n: usize, k: usize, seed: u64, conjugate: bool) -> PosteriorParams {
    let w = window(n, k, seed);
    let prior = if conjugate {
        let pre = window(n, k, seed ^ 0xabcd);
        let (m0, s0) = empirical_bayes_hyperparams(&pre, n as f64).unwrap();
        PriorSpec::conjugate(m0, 5.0, n as f64, s0).unwrap()
    } else {
        PriorSpec::Diffuse
    };
    posterior_params(&w, &prior).unwrap()
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}
