//! Seeded random streams and the elementary samplers used by the
//! stochastic representations.
//!
//! An [`RngStream`] is a ChaCha20 generator keyed by a 64-bit seed and
//! positioned on a 64-bit stream id. Equal `(seed, stream_id)` pairs yield
//! bitwise-identical sequences; distinct stream ids select disjoint
//! keystreams. Batch samplers split their work into fixed-size chunks and
//! give chunk `j` the child stream [`RngStream::child`]`(j)`, so output does
//! not depend on thread scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::linalg::SpdMatrix;

/// Reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha20Rng,
}

/// The identity of a stream, recorded alongside every sample batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            id: StreamId { seed, stream_id },
            rng,
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn seed(&self) -> u64 {
        self.id.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.id.stream_id
    }

    /// Independent child stream number `index`, derived only from this
    /// stream's identity (not from its current position).
    pub fn child(&self, index: u64) -> RngStream {
        let key = splitmix64(self.id.seed ^ splitmix64(self.id.stream_id.wrapping_add(0x5851_f42d)));
        RngStream::new(key, index)
    }
}

impl From<StreamId> for RngStream {
    fn from(id: StreamId) -> Self {
        RngStream::new(id.seed, id.stream_id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_df(df: f64, what: &str) -> Result<()> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(MppError::InvalidDf(format!("{what} = {df} must be positive and finite")))
    }
}

/// Chi-square distribution with real degrees of freedom, drawn as
/// Gamma(df/2, scale 2).
#[derive(Debug, Clone, Copy)]
pub struct ChiSquare {
    gamma: Gamma<f64>,
}

impl ChiSquare {
    pub fn new(df: f64) -> Result<Self> {
        check_df(df, "df")?;
        let gamma = Gamma::new(df / 2.0, 2.0).map_err(|e| MppError::InvalidDf(e.to_string()))?;
        Ok(ChiSquare { gamma })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.gamma.sample(rng)
    }
}

/// Snedecor F distribution, drawn as `(χ²_{d1}/d1) / (χ²_{d2}/d2)`.
#[derive(Debug, Clone, Copy)]
pub struct FDist {
    num: ChiSquare,
    den: ChiSquare,
    d1: f64,
    d2: f64,
}

impl FDist {
    pub fn new(d1: f64, d2: f64) -> Result<Self> {
        check_df(d1, "d1")?;
        check_df(d2, "d2")?;
        Ok(FDist {
            num: ChiSquare::new(d1)?,
            den: ChiSquare::new(d2)?,
            d1,
            d2,
        })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.num.sample(rng) / self.d1;
        let b = self.den.sample(rng) / self.d2;
        a / b
    }
}

/// Standard univariate Student t, drawn as `z / √(χ²_df / df)`.
#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    chi: ChiSquare,
    df: f64,
}

impl StudentT {
    pub fn new(df: f64) -> Result<Self> {
        check_df(df, "df")?;
        Ok(StudentT {
            chi: ChiSquare::new(df)?,
            df,
        })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z / (self.chi.sample(rng) / self.df).sqrt()
    }
}

/// Multivariate t with location `a` and dispersion `A`: `a + L z √(df/χ²_df)`
/// where `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct MultivariateT {
    location: DVector<f64>,
    factor: DMatrix<f64>,
    chi: ChiSquare,
    df: f64,
}

impl MultivariateT {
    pub fn new(df: f64, location: DVector<f64>, dispersion: &SpdMatrix) -> Result<Self> {
        check_df(df, "df")?;
        if dispersion.dim() != location.len() {
            return Err(MppError::DimensionMismatch {
                expected: location.len(),
                actual: dispersion.dim(),
            });
        }
        Ok(MultivariateT {
            location,
            factor: dispersion.cholesky_factor(),
            chi: ChiSquare::new(df)?,
            df,
        })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(self.location.len(), rng);
        let s = (self.df / self.chi.sample(rng)).sqrt();
        &self.location + (&self.factor * z) * s
    }
}

pub fn standard_normal_vector<R: RngCore + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

/// One χ²_df draw.
pub fn sample_chi2(df: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(ChiSquare::new(df)?.sample(rng))
}

/// One F(d1, d2) draw.
pub fn sample_f(d1: f64, d2: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(FDist::new(d1, d2)?.sample(rng))
}

/// One standard t_df draw.
pub fn sample_student_t(df: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(StudentT::new(df)?.sample(rng))
}

/// Uniform draw on the unit sphere in `R^k`: a normalized standard normal
/// vector, resampled in the (measure-zero) event that it is exactly zero.
pub fn sample_unit_sphere<R: RngCore + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    assert!(k >= 1, "sphere dimension must be positive");
    loop {
        let z = standard_normal_vector(k, rng);
        let norm = z.norm();
        if norm > 0.0 {
            return z / norm;
        }
    }
}

/// One multivariate t draw.
pub fn sample_mvt(
    df: f64,
    location: &DVector<f64>,
    dispersion: &SpdMatrix,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    Ok(MultivariateT::new(df, location.clone(), dispersion)?.sample(rng))
}
