//! Closed-form full conditionals on the working scale.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Result, ScfmError};
use crate::rngdist::sample_std_normal;

/// A Gaussian stored through the Cholesky factor of its precision.
#[derive(Clone, Debug)]
pub struct GaussianPrecision {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianPrecision {
    /// `N(P⁻¹b, P⁻¹)`.
    pub fn from_canonical(precision: DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let chol = precision
            .cholesky()
            .ok_or_else(|| invariant("conditional precision is not positive definite"))?;
        let mean = chol.solve(b);
        Ok(Self { mean, chol })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Solves `P x = b` with the stored factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L⁻ᵀε` for standard normal `ε`, a zero-mean draw with covariance `P⁻¹`.
    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let mut e = DVector::from_fn(k, |_, _| sample_std_normal(rng));
        self.chol.l_dirty().tr_solve_lower_triangular_mut(&mut e);
        e
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.mean + self.noise(rng)
    }
}

fn invariant(msg: &str) -> ScfmError {
    ScfmError::Invariant {
        sweep: 0,
        msg: msg.to_string(),
    }
}

/// Shape and scale of the inverse-gamma conditional of `σ_j²` given the
/// residuals `W_ij − λ_jᵀu_i`.
pub fn sigma2_conditional(a: f64, b: f64, residuals: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (count, ss) = residuals
        .into_iter()
        .fold((0usize, 0.0), |(c, s), r| (c + 1, s + r * r));
    (a + count as f64 / 2.0, b + ss / 2.0)
}

/// Conditional of one score vector: precision `ΛᵀΣ⁻¹Λ + I` and linear term
/// `ΛᵀΣ⁻¹W_i`.
pub fn score_conditional(
    lambda: &DMatrix<f64>,
    sigma2: &DVector<f64>,
    w_i: &DVector<f64>,
) -> Result<GaussianPrecision> {
    let (precision, gain) = score_system(lambda, sigma2);
    GaussianPrecision::from_canonical(precision, &(gain * w_i))
}

/// `(ΛᵀΣ⁻¹Λ + I, ΛᵀΣ⁻¹)`, shared by every cell in a sweep.
pub fn score_system(lambda: &DMatrix<f64>, sigma2: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = lambda.ncols();
    let mut gain = lambda.transpose();
    for (j, s) in sigma2.iter().enumerate() {
        gain.column_mut(j).scale_mut(1.0 / s);
    }
    let precision = &gain * lambda + DMatrix::identity(k, k);
    (precision, gain)
}

/// Conditional of one loading row given `UᵀU`, `UᵀW_j`, `σ_j²` and the
/// prior variances `D_j`: precision `UᵀU/σ² + D⁻¹`, linear term `UᵀW_j/σ²`.
pub fn loading_conditional(
    utu: &DMatrix<f64>,
    utw: &DVector<f64>,
    sigma2: f64,
    prior_var: &[f64],
) -> Result<GaussianPrecision> {
    let mut precision = utu / sigma2;
    for (h, d) in prior_var.iter().enumerate() {
        precision[(h, h)] += 1.0 / d;
    }
    GaussianPrecision::from_canonical(precision, &(utw / sigma2))
}
