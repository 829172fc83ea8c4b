//! Summary statistics over Monte Carlo batches: quantiles, standard errors,
//! Kolmogorov–Smirnov and Jarque–Bera tests.

use nalgebra::DMatrix;

use crate::error::{MppError, Result};

/// Arithmetic mean, accumulated around the first element so that a
/// constant slice returns its value exactly.
pub fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Monte Carlo standard error of the mean, `sd / √B`.
pub fn mc_standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Column means of a `B×p` draw matrix.
pub fn column_means(draws: &DMatrix<f64>) -> Vec<f64> {
    draws.row_mean().iter().copied().collect()
}

/// Unbiased covariance of the columns of a `B×p` draw matrix.
pub fn column_covariance(draws: &DMatrix<f64>) -> DMatrix<f64> {
    let b = draws.nrows();
    let m = draws.row_mean();
    let mut centered = draws.clone();
    for mut row in centered.row_iter_mut() {
        row -= &m;
    }
    (centered.transpose() * centered) / (b as f64 - 1.0)
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// `Q_KS((√m_e + 0.12 + 0.11/√m_e)·D)`, `m_e = nm/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(MppError::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    let a = sorted_copy(a);
    let b = sorted_copy(b);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(TestResult {
        statistic: d,
        p_value,
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * 2.0 * (a2 * jf * jf).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    // Series failed to converge only for tiny λ, where Q is 1.
    1.0
}

/// Jarque–Bera statistic `B(skew²/6 + (kurt − 3)²/24)` with its χ²₂ p-value
/// `exp(−JB/2)`.
pub fn jarque_bera(xs: &[f64]) -> Result<TestResult> {
    const MIN: usize = 20;
    if xs.len() < MIN {
        return Err(MppError::TooFewSamples {
            required: MIN,
            actual: xs.len(),
        });
    }
    let b = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= b;
    m3 /= b;
    m4 /= b;
    if !(m2.sqrt() > 1e-14 * m.abs()) {
        return Err(MppError::DegenerateVariance(
            "normality test input has zero variance".into(),
        ));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let statistic = b * (skew * skew / 6.0 + (kurt - 3.0).powi(2) / 24.0);
    Ok(TestResult {
        statistic,
        p_value: (-statistic / 2.0).exp(),
    })
}
