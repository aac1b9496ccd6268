//! Seeded random streams and the distributions the Gibbs sampler draws from.
//!
//! Every parallel region derives a child [`RngStream`] from a fixed key
//! (sweep, step, index), so results do not depend on thread scheduling.

mod gig;
mod truncnorm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfmError};

pub use gig::sample_gig;
pub use truncnorm::sample_truncated_normal;

/// Floor applied to `|λ|` inside shrinkage hyperparameter draws.
pub const ABS_LOADING_FLOOR: f64 = 1e-10;

/// The generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A child stream keyed by `key`; distinct keys give distinct streams.
    pub fn derive(&self, key: u64) -> Self {
        let id = splitmix64(self.stream_id.rotate_left(17) ^ splitmix64(key ^ GOLDEN));
        Self {
            seed: self.seed,
            stream_id: id,
        }
    }

    /// Shorthand for repeated [`RngStream::derive`].
    pub fn derive_path(&self, keys: &[u64]) -> Self {
        keys.iter().fold(*self, |s, &k| s.derive(k))
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[inline]
pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on the open interval (0, 1).
#[inline]
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScfmError::arg(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    check_positive("rate", rate)?;
    let e: f64 = Exp1.sample(rng);
    Ok(e / rate)
}

/// Gamma with the given shape and rate (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| ScfmError::arg(e.to_string()))?;
    // very small shapes can underflow to zero
    loop {
        let x = g.sample(rng);
        if x > 0.0 {
            return Ok(x);
        }
    }
}

/// Inverse gamma `IG(a, b)`, the law of `1/Y` for `Y ~ Gamma(a, rate b)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / sample_gamma(a, b, rng)?)
}

/// Draws `R_i ~ giG(α-1, 1, 2|w_i|)` independently and returns `R / ΣR`.
///
/// Weights are floored at [`ABS_LOADING_FLOOR`] so every draw is proper.
pub fn sample_dirichlet_like_phi<R: Rng + ?Sized>(
    abs_weights: &[f64],
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_positive("alpha", alpha)?;
    if abs_weights.is_empty() {
        return Err(ScfmError::arg("no weights"));
    }
    let mut r = abs_weights
        .iter()
        .map(|&w| sample_gig(alpha - 1.0, 1.0, 2.0 * w.abs().max(ABS_LOADING_FLOOR), rng))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = r.iter().sum();
    for v in &mut r {
        *v /= total;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of(n: usize, mut f: impl FnMut() -> f64) -> f64 {
        (0..n).map(|_| f()).sum::<f64>() / n as f64
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(7, 0);
        let a: Vec<u64> = (0..4).map(|_| 0).scan(s.rng(), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(s.rng(), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        let c: u64 = s.derive(1).rng().random();
        let d: u64 = s.derive(2).rng().random();
        assert_ne!(c, d);
        assert_ne!(c, a[0]);
        let e: u64 = RngStream::new(8, 0).rng().random();
        assert_ne!(e, a[0]);
        assert_eq!(s.derive_path(&[1, 2]), s.derive(1).derive(2));
    }

    #[test]
    fn gamma_with_shape_one_is_exponential() {
        let mut rng = RngStream::new(11, 0).rng();
        let m = mean_of(100_000, || sample_gamma(1.0, 4.0, &mut rng).unwrap());
        assert!((m - 0.25).abs() < 0.0025, "{m}");
        let m = mean_of(100_000, || sample_exponential(4.0, &mut rng).unwrap());
        assert!((m - 0.25).abs() < 0.0025, "{m}");
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = RngStream::new(12, 0).rng();
        let m = mean_of(100_000, || sample_inverse_gamma(3.0, 2.0, &mut rng).unwrap());
        assert!((m - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(1.0, 0.0, &mut rng).is_err());
        assert!(sample_exponential(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn phi_single_entry_is_one() {
        let mut rng = RngStream::new(2, 0).rng();
        assert_eq!(sample_dirichlet_like_phi(&[0.3], 0.5, &mut rng).unwrap(), vec![1.0]);
    }

    #[test]
    fn phi_with_zero_weights_is_a_simplex() {
        let mut rng = RngStream::new(3, 0).rng();
        for alpha in [1.0, 0.5, 2.0] {
            let phi = sample_dirichlet_like_phi(&[0.0; 6], alpha, &mut rng).unwrap();
            assert!(phi.iter().all(|&v| v > 0.0 && v.is_finite()));
            assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_favours_large_weights() {
        let mut rng = RngStream::new(4, 0).rng();
        let mut acc = [0.0; 2];
        for _ in 0..10_000 {
            let phi = sample_dirichlet_like_phi(&[10.0, 0.01], 0.5, &mut rng).unwrap();
            acc[0] += phi[0];
            acc[1] += phi[1];
        }
        assert!(acc[0] > acc[1], "{acc:?}");
    }
}
