//! Synthetic data with a known factor structure pushed through given
//! marginals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::EmpiricalCdf;
use crate::error::{Result, ScfmError};
use crate::ingest::CountMatrix;
use crate::model::compute_psi;
use crate::normal;
use crate::rngdist::{open_unit, sample_exponential, sample_std_normal};

/// The generating parameters of a simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTruth {
    /// p × k
    pub lambda: DMatrix<f64>,
    pub sigma2: DVector<f64>,
    /// n × k
    pub u: DMatrix<f64>,
    pub marginals: Vec<EmpiricalCdf>,
}

/// `λ_jh ~ Laplace(0, 1)`, `σ_j² ~ U(0.3, 1)`, `u_ih ~ N(0, 1)`.
pub fn gen_truth<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    k: usize,
    marginals: Vec<EmpiricalCdf>,
    rng: &mut R,
) -> Result<SimTruth> {
    if k == 0 || n == 0 || p == 0 {
        return Err(ScfmError::arg("n, p and k must be positive"));
    }
    if marginals.len() != p {
        return Err(ScfmError::arg(format!("{} marginals for {p} genes", marginals.len())));
    }
    let mut lambda = DMatrix::zeros(p, k);
    for v in lambda.iter_mut() {
        let e = sample_exponential(1.0, rng)?;
        *v = if rng.random::<bool>() { e } else { -e };
    }
    let sigma2 = DVector::from_fn(p, |_, _| 0.3 + 0.7 * open_unit(rng));
    let u = DMatrix::from_fn(n, k, |_, _| sample_std_normal(rng));
    Ok(SimTruth {
        lambda,
        sigma2,
        u,
        marginals,
    })
}

/// Latent copula-scale values `z_i = Ψ^{-1/2}(Λu_i + ε_i)` (n × p).
pub fn gen_latent<R: Rng + ?Sized>(truth: &SimTruth, rng: &mut R) -> DMatrix<f64> {
    let psi = compute_psi(&truth.lambda, &truth.sigma2);
    let mut z = &truth.u * truth.lambda.transpose();
    for j in 0..z.ncols() {
        let (sd, root) = (truth.sigma2[j].sqrt(), psi[j].sqrt());
        for i in 0..z.nrows() {
            z[(i, j)] = (z[(i, j)] + sd * sample_std_normal(rng)) / root;
        }
    }
    z
}

/// `x_ij = F̂_j⁻(Φ(z_ij))` for latent `z` drawn by [`gen_latent`].
pub fn gen_data<R: Rng + ?Sized>(truth: &SimTruth, rng: &mut R) -> Result<CountMatrix> {
    let z = gen_latent(truth, rng);
    let x = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| {
        truth.marginals[j].quantile_clamped(normal::cdf(z[(i, j)]))
    });
    CountMatrix::from_values(x)
}

/// Shape of the synthetic reference marginals. Each gene draws its zero and
/// one fractions uniformly from the given ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalSpec {
    pub zero_frac: [f64; 2],
    pub one_frac: [f64; 2],
    /// Log-scale standard deviation of the count tail.
    pub tail_shape: f64,
    pub sample_size: usize,
}

impl Default for MarginalSpec {
    fn default() -> Self {
        Self {
            zero_frac: [0.54, 0.59],
            one_frac: [0.14, 0.17],
            tail_shape: 1.0,
            sample_size: 10_000,
        }
    }
}

impl MarginalSpec {
    /// Fixed fractions for every gene.
    pub fn fixed(zero_frac: f64, one_frac: f64, tail_shape: f64) -> Self {
        Self {
            zero_frac: [zero_frac; 2],
            one_frac: [one_frac; 2],
            tail_shape,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |r: [f64; 2]| r[0] >= 0.0 && r[0] <= r[1] && r[1] < 1.0;
        if !in_unit(self.zero_frac) || !in_unit(self.one_frac) {
            return Err(ScfmError::arg("fraction ranges must satisfy 0 ≤ lo ≤ hi < 1"));
        }
        if self.zero_frac[1] + self.one_frac[1] >= 1.0 {
            return Err(ScfmError::arg("zero and one fractions must sum to less than 1"));
        }
        if !(self.tail_shape > 0.0 && self.tail_shape.is_finite()) || self.sample_size < 2 {
            return Err(ScfmError::arg("tail shape must be positive and the sample size at least 2"));
        }
        Ok(())
    }
}

/// Empirical CDFs of synthetic count samples: exactly
/// `round(zero_frac·N)` zeros, `round(one_frac·N)` ones and a log-normal
/// remainder rounded up to counts of at least 2.
pub fn synthetic_marginals<R: Rng + ?Sized>(
    p: usize,
    spec: &MarginalSpec,
    rng: &mut R,
) -> Result<Vec<EmpiricalCdf>> {
    spec.validate()?;
    let size = spec.sample_size;
    let uniform = |r: [f64; 2], rng: &mut R| r[0] + (r[1] - r[0]) * rng.random::<f64>();
    (0..p)
        .map(|_| {
            let n0 = (uniform(spec.zero_frac, rng) * size as f64).round() as usize;
            let n1 = (uniform(spec.one_frac, rng) * size as f64).round() as usize;
            let mut sample = vec![0.0; n0];
            sample.extend(std::iter::repeat_n(1.0, n1));
            while sample.len() < size {
                let tail = (2.0 * (spec.tail_shape * sample_std_normal(rng)).exp()).ceil();
                sample.push(1.0 + tail);
            }
            EmpiricalCdf::fit(&sample)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngdist::RngStream;

    fn truth(n: usize, p: usize, k: usize, seed: u64) -> SimTruth {
        let mut rng = RngStream::new(seed, 0).rng();
        let marg = synthetic_marginals(p, &MarginalSpec::default(), &mut rng).unwrap();
        gen_truth(n, p, k, marg, &mut rng).unwrap()
    }

    #[test]
    fn laplace_loadings_and_noise_range() {
        let t = truth(10, 2500, 40, 1);
        let mean_abs = t.lambda.iter().map(|v| v.abs()).sum::<f64>() / 1e5;
        assert!((mean_abs - 1.0).abs() < 0.02, "{mean_abs}");
        assert!(t.sigma2.iter().all(|&s| s > 0.3 && s < 1.0));
        assert_eq!(truth(10, 5, 2, 7), truth(10, 5, 2, 7));
    }

    #[test]
    fn generated_values_lie_in_the_support() {
        let t = truth(300, 6, 3, 2);
        let mut rng = RngStream::new(3, 0).rng();
        let x = gen_data(&t, &mut rng).unwrap();
        for j in 0..6 {
            for v in x.values().column(j).iter() {
                assert!(t.marginals[j].support().contains(v));
            }
        }
    }

    #[test]
    fn zero_fraction_follows_the_marginal() {
        let mut rng = RngStream::new(4, 0).rng();
        let marg = synthetic_marginals(1, &MarginalSpec::fixed(0.55, 0.15, 1.0), &mut rng).unwrap();
        assert!((marg[0].eval(0.0) - 0.55 * 1e4 / (1e4 + 1.0)).abs() < 1e-12);
        assert!((marg[0].eval(1.0) - 0.70 * 1e4 / (1e4 + 1.0)).abs() < 1e-12);
        let t = gen_truth(10_000, 1, 2, marg, &mut rng).unwrap();
        let x = gen_data(&t, &mut rng).unwrap();
        let zeros = x.values().iter().filter(|&&v| v == 0.0).count() as f64 / 1e4;
        assert!((zeros - 0.55).abs() < 0.02, "{zeros}");
    }

    #[test]
    fn no_zero_mass_when_requested() {
        let mut rng = RngStream::new(5, 0).rng();
        let marg = synthetic_marginals(2, &MarginalSpec::fixed(0.0, 0.2, 1.0), &mut rng).unwrap();
        assert!(marg.iter().all(|m| m.eval(0.0) == 0.0));
        assert!(synthetic_marginals(1, &MarginalSpec::fixed(0.6, 0.4, 1.0), &mut rng).is_err());
    }

    #[test]
    fn zero_loadings_give_independent_columns() {
        let mut t = truth(10_000, 5, 2, 6);
        t.lambda.fill(0.0);
        let mut rng = RngStream::new(7, 0).rng();
        let x = gen_data(&t, &mut rng).unwrap();
        let mut total = 0.0;
        let mut pairs = 0;
        for a in 0..5 {
            for b in a + 1..5 {
                let ca: Vec<f64> = x.values().column(a).iter().copied().collect();
                let cb: Vec<f64> = x.values().column(b).iter().copied().collect();
                total += crate::postprocess::pearson(&ca, &cb).unwrap().abs();
                pairs += 1;
            }
        }
        assert_eq!(pairs, 10);
        assert!(total / 10.0 < 0.05);
    }

    #[test]
    fn true_distances_form_a_metric() {
        let t = truth(12, 3, 4, 8);
        let d = |a: usize, b: usize| (t.u.row(a) - t.u.row(b)).norm();
        for a in 0..12 {
            assert_eq!(d(a, a), 0.0);
            for b in 0..12 {
                for c in 0..12 {
                    assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
                }
            }
        }
    }
}
