//! Seeded Gaussian return panels with known moments, used by tests, the
//! acceptance suite and the bundled example dataset.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::SpdMatrix;
use crate::posterior::ReturnsWindow;
use crate::random::{standard_normal_vector, RngStream};
use crate::weights::LatentParams;

/// Seed of the bundled 12-asset weekly panel.
pub const BUNDLED_SEED: u64 = 20_160_624;
pub const BUNDLED_ROWS: usize = 300;
pub const BUNDLED_ASSETS: usize = 12;
/// Weekly risk-free rate used with the bundled panel.
pub const BUNDLED_RF: f64 = 0.0004;

/// `n` i.i.d. rows from `N(μ, Σ)` drawn on stream `(seed, 0)`.
pub fn gaussian_returns(params: &LatentParams, n: usize, seed: u64) -> DMatrix<f64> {
    let k = params.mu.len();
    let mu = DVector::from_column_slice(&params.mu);
    let l = params.sigma.cholesky_factor();
    let mut rng = RngStream::new(seed, 0);
    let mut x = DMatrix::zeros(n, k);
    for i in 0..n {
        let row = &mu + &l * standard_normal_vector(k, &mut rng);
        x.set_row(i, &row.transpose());
    }
    x
}

/// Weekly-scale moments for `k` assets: means rising from 0.1% to about
/// 0.35%, volatilities from 2% to 4.5%, one common factor with pairwise
/// correlation 0.3.
pub fn weekly_market(k: usize) -> Result<LatentParams> {
    let denom = (k.max(2) - 1) as f64;
    let mu: Vec<f64> = (0..k).map(|j| 0.001 + 0.0025 * j as f64 / denom).collect();
    let vol: Vec<f64> = (0..k).map(|j| 0.02 + 0.025 * j as f64 / denom).collect();
    let sigma = DMatrix::from_fn(k, k, |i, j| {
        let rho = if i == j { 1.0 } else { 0.3 };
        rho * vol[i] * vol[j]
    });
    LatentParams::new(DVector::from_vec(mu), SpdMatrix::new(sigma)?)
}

/// The bundled panel: [`BUNDLED_ROWS`] weeks of [`BUNDLED_ASSETS`] assets
/// labelled `A01..A12`, with dates `0..n` (the CLI attaches calendar dates).
pub fn bundled_panel() -> Result<ReturnsWindow> {
    let params = weekly_market(BUNDLED_ASSETS)?;
    let x = gaussian_returns(&params, BUNDLED_ROWS, BUNDLED_SEED);
    let assets = (1..=BUNDLED_ASSETS).map(|j| format!("A{j:02}")).collect();
    let dates = (0..BUNDLED_ROWS).map(|i| format!("{i:04}")).collect();
    ReturnsWindow::new(assets, dates, x)
}
