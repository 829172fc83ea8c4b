//! Symmetric-matrix kernels.
//!
//! Every covariance-like quantity (population covariance, posterior scale
//! matrices, prior scale) is carried as an [`SpdMatrix`], which is checked
//! for symmetry and positive definiteness once on construction. Square roots
//! are the symmetric (eigendecomposition) roots, so `R = Rᵀ` and `R·R = M`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};

/// Relative tolerance for the symmetry check on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative eigenvalue clamp used by [`psd_sqrt`].
pub const PSD_CLAMP_TOL: f64 = 1e-10;

/// A symmetric positive definite `k×k` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Validates and wraps `m`. The stored matrix is the exact symmetrization
    /// `(m + mᵀ)/2` of the input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(MppError::NotSpd(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(MppError::NotSpd("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(MppError::NotSpd("non-finite entry".into()));
        }
        let scale = m.amax();
        let k = m.nrows();
        for i in 0..k {
            for j in (i + 1)..k {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(MppError::NotSpd(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        let sym = symmetrize(&m);
        if sym.clone().cholesky().is_none() {
            return Err(MppError::NotSpd(
                "Cholesky factorization failed (singular or indefinite)".into(),
            ));
        }
        Ok(SpdMatrix(sym))
    }

    pub fn identity(k: usize) -> Self {
        SpdMatrix(DMatrix::identity(k, k))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }

    /// Lower Cholesky factor `L` with `L·Lᵀ = M`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        // Construction guarantees the factorization succeeds.
        self.0
            .clone()
            .cholesky()
            .expect("SpdMatrix is positive definite")
            .l()
    }

    /// `c·M` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(MppError::NotSpd(format!("scale factor {c} is not positive")));
        }
        Ok(SpdMatrix(&self.0 * c))
    }

    /// Symmetric rearrangement `P M Pᵀ` for a permutation given as the new
    /// order of indices.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let k = self.dim();
        SpdMatrix(DMatrix::from_fn(k, k, |i, j| self.0[(order[i], order[j])]))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SpdMatrix {
    type Error = MppError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MppError::NotSpd("ragged matrix rows".into()));
        }
        SpdMatrix::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }
}

impl From<SpdMatrix> for Vec<Vec<f64>> {
    fn from(m: SpdMatrix) -> Self {
        matrix_rows(&m.0)
    }
}

/// Row-major nested vectors, convenient for JSON output.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of an SPD matrix via its Cholesky factorization.
pub fn spd_inverse(m: &SpdMatrix) -> Result<SpdMatrix> {
    let chol = m
        .0
        .clone()
        .cholesky()
        .ok_or_else(|| MppError::NotSpd("Cholesky factorization failed".into()))?;
    let inv = symmetrize(&chol.inverse());
    SpdMatrix::new(inv)
}

/// Symmetric inverse square root `M^{-1/2}`.
pub fn spd_inv_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = SymmetricEigen::new(m.0.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(MppError::NotSpd("non-positive eigenvalue".into()));
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    SpdMatrix::new(symmetrize(&root))
}

/// Symmetric square root of a symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSqrtResult {
    pub root: DMatrix<f64>,
    /// Number of slightly negative eigenvalues that were clamped to zero.
    pub clamped_count: usize,
}

/// Symmetric PSD square root.
///
/// Eigenvalues in `[-τ·λ_max, 0)` (τ = [`PSD_CLAMP_TOL`], λ_max the largest
/// absolute eigenvalue) are treated as rounding noise and clamped to zero;
/// anything more negative is an [`MppError::IndefiniteMatrix`].
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<PsdSqrtResult> {
    psd_sqrt_with_reference(m, 0.0)
}

/// [`psd_sqrt`] for a matrix formed as a difference of larger terms, where
/// cancellation noise scales with those terms rather than with the result.
/// The clamp threshold is `τ·max(λ_max, reference)`.
pub fn psd_sqrt_with_reference(m: &DMatrix<f64>, reference: f64) -> Result<PsdSqrtResult> {
    if m.nrows() != m.ncols() {
        return Err(MppError::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let k = m.nrows();
    if k == 1 {
        // Scalar fast path, used heavily by the per-draw samplers.
        let v = m[(0, 0)];
        if v >= 0.0 {
            return Ok(PsdSqrtResult {
                root: DMatrix::from_element(1, 1, v.sqrt()),
                clamped_count: 0,
            });
        }
        if v >= -PSD_CLAMP_TOL * reference {
            return Ok(PsdSqrtResult {
                root: DMatrix::zeros(1, 1),
                clamped_count: 1,
            });
        }
        return Err(MppError::IndefiniteMatrix {
            min_eigenvalue: v,
            max_eigenvalue: v.abs(),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lambda_max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !min.is_finite() || min < -PSD_CLAMP_TOL * lambda_max.max(reference) {
        return Err(MppError::IndefiniteMatrix {
            min_eigenvalue: min,
            max_eigenvalue: lambda_max,
        });
    }
    let mut clamped_count = 0;
    let d = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            clamped_count += 1;
            0.0
        } else {
            l.sqrt()
        }
    });
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    Ok(PsdSqrtResult {
        root: symmetrize(&root),
        clamped_count,
    })
}
