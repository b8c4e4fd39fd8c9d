//! Multivariate Gaussian parameters, densities and samplers.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::math::{self, LN_2PI};
use crate::rng::ContentHasher;

/// Relative size of the diagonal jitter added when a covariance fails to
/// factor: `JITTER_SCALE * trace / dim`.
pub const JITTER_SCALE: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-9;

/// Mean vector and covariance matrix of a valuation distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl GaussianParams {
    /// Validates that `sigma` is square, symmetric and positive definite.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let dim = mu.len();
        if dim == 0 {
            return Err(invalid("gaussian dimension must be at least 1"));
        }
        check_dim(dim, sigma.nrows())?;
        check_dim(dim, sigma.ncols())?;
        if mu.iter().chain(sigma.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("gaussian parameters must be finite"));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if math::abs(sigma[(i, j)] - sigma[(j, i)]) > SYMMETRY_TOL * scale {
                    return Err(invalid(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NumericFailure("covariance is not positive definite".into()));
        }
        Ok(Self { mu, sigma })
    }

    /// Builds parameters from row-major slices.
    pub fn from_slices(mu: &[f64], sigma_rows: &[f64]) -> Result<Self> {
        let dim = mu.len();
        check_dim(dim * dim, sigma_rows.len())?;
        Self::new(
            DVector::from_column_slice(mu),
            DMatrix::from_row_slice(dim, dim, sigma_rows),
        )
    }

    /// Symmetrizes `sigma` and adds diagonal jitter until it factors.
    pub fn regularized(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let sigma = stabilize_covariance(sigma)?;
        Self::new(mu, sigma)
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: DVector::zeros(dim),
            sigma: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, mu: DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), mu.len())?;
        Ok(Self {
            mu,
            sigma: self.sigma.clone(),
        })
    }

    /// Content hash of the exact parameter bits.
    pub fn content_key(&self) -> u64 {
        let mut h = ContentHasher::default();
        h.write_u64(self.dim() as u64);
        for x in self.mu.iter().chain(self.sigma.iter()) {
            h.write_f64(*x);
        }
        h.finish()
    }

    /// `‖μ_a − μ_b‖₁ + ‖Σ_a − Σ_b‖₁`, entrywise over the full matrix.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let dm: f64 = (&self.mu - &other.mu).iter().map(|x| math::abs(*x)).sum();
        let ds: f64 = (&self.sigma - &other.sigma).iter().map(|x| math::abs(*x)).sum();
        dm + ds
    }
}

/// Makes `sigma` symmetric and positive definite by adding
/// `JITTER_SCALE * trace / dim` (at least `JITTER_SCALE`) to the diagonal,
/// growing the jitter tenfold until a Cholesky factorization succeeds.
pub fn stabilize_covariance(sigma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = sigma.nrows();
    check_dim(dim, sigma.ncols())?;
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericFailure("covariance has non-finite entries".into()));
    }
    let mut sym = (&sigma + sigma.transpose()) * 0.5;
    if sym.clone().cholesky().is_some() {
        return Ok(sym);
    }
    let mean_diag = sym.trace() / dim as f64;
    let mut jitter = JITTER_SCALE * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for _ in 0..16 {
        for i in 0..dim {
            sym[(i, i)] += jitter;
        }
        if sym.clone().cholesky().is_some() {
            return Ok(sym);
        }
        jitter *= 10.0;
    }
    Err(Error::NumericFailure("covariance could not be regularized".into()))
}

/// Precomputed Cholesky factor of a Gaussian for fast sampling and density
/// evaluation on flat `&[f64]` points.
#[derive(Clone, Debug)]
pub struct Mvn {
    dim: usize,
    mu: Vec<f64>,
    /// Row-major lower-triangular factor.
    chol: Vec<f64>,
    log_norm: f64,
}

impl Mvn {
    pub fn new(params: &GaussianParams) -> Result<Self> {
        let dim = params.dim();
        let factor = params
            .sigma()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericFailure("cholesky factorization failed".into()))?;
        let l = factor.l();
        let mut chol = alloc::vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for i in 0..dim {
            for j in 0..=i {
                chol[i * dim + j] = l[(i, j)];
            }
            log_det += 2.0 * math::ln(l[(i, i)]);
        }
        Ok(Self {
            dim,
            mu: params.mu().iter().copied().collect(),
            chol,
            log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    /// Writes `μ + L z` for a fresh standard-normal `z`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], z: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        self.transform_into(z, out);
    }

    /// Writes `μ + L z`.
    pub fn transform_into(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            out[i] = self.mu[i] + math::dot(row, &z[..=i]);
        }
    }

    /// Squared Mahalanobis distance `(x − μ)ᵀ Σ⁻¹ (x − μ)`.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        // Forward substitution L y = x − μ, kept on the stack for small d.
        let mut buf = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if d <= 16 {
            &mut buf[..d]
        } else {
            heap = alloc::vec![0.0; d];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s = x[i] - self.mu[i] - math::dot(row, &y[..i]);
            y[i] = s / self.chol[i * d + i];
            q += y[i] * y[i];
        }
        q
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }
}

/// `log f(v | μ, Σ)` for the multivariate normal density.
pub fn gaussian_log_pdf(v: &[f64], params: &GaussianParams) -> Result<f64> {
    check_dim(params.dim(), v.len())?;
    let stable = GaussianParams::regularized(params.mu().clone(), params.sigma().clone())?;
    Ok(Mvn::new(&stable)?.log_pdf(v))
}
