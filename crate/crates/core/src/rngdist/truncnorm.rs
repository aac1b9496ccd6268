use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::open_unit;
use crate::error::{Result, ScfmError};
use crate::normal;

/// Standardized lower bound beyond which one-sided tails switch to
/// exponential-proposal rejection.
const TAIL_START: f64 = 5.0;

/// Draws from `N(mu, sigma²)` conditioned on `(lo, hi]`. Either bound may be
/// infinite. The returned value always satisfies `lo < x ≤ hi`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(ScfmError::arg(format!(
            "truncated normal needs finite mean and positive sd, got ({mu}, {sigma})"
        )));
    }
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(ScfmError::arg(format!(
            "truncation interval ({lo}, {hi}] is empty"
        )));
    }
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    for _ in 0..64 {
        let x = mu + sigma * truncated_std_normal(a, b, rng);
        if x > lo && x <= hi {
            return Ok(x);
        }
    }
    // Only reachable when (lo, hi] is a handful of ulps wide.
    Ok(hi)
}

/// Standard normal restricted to `(a, b]`, `a < b`.
pub(crate) fn truncated_std_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= 0.0 {
        positive_side(a, b, rng)
    } else if b <= 0.0 {
        -positive_side(-b, -a, rng)
    } else if a * a <= 2.0 && b * b <= 2.0 {
        uniform_rejection(a, b, 0.0, rng)
    } else {
        let pa = normal::cdf(a);
        let pb = normal::cdf(b);
        loop {
            let u = pa + open_unit(rng) * (pb - pa);
            let x = normal::quantile_unclamped(u);
            if x > a && x <= b {
                return x;
            }
        }
    }
}

// 0 ≤ a < b ≤ ∞
fn positive_side<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b.is_finite() && (b - a) * (b + a) <= 2.0 {
        return uniform_rejection(a, b, a, rng);
    }
    if a >= TAIL_START {
        return exponential_rejection(a, b, rng);
    }
    let qa = normal::sf(a);
    let qb = normal::sf(b);
    loop {
        let q = qb + open_unit(rng) * (qa - qb);
        let x = -normal::quantile_unclamped(q);
        if x > a && x <= b {
            return x;
        }
    }
}

// Uniform proposal on (a, b] against the density ratio to its maximum at
// `peak` (the point of the interval closest to zero).
fn uniform_rejection<R: Rng + ?Sized>(a: f64, b: f64, peak: f64, rng: &mut R) -> f64 {
    let width = b - a;
    loop {
        let x = b - width * rng.random::<f64>();
        if x <= a {
            continue;
        }
        let log_ratio = 0.5 * (peak * peak - x * x);
        if rng.random::<f64>().ln() <= log_ratio {
            return x;
        }
    }
}

// Robert (1995): translated exponential proposal with the optimal rate.
fn exponential_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / rate;
        if x > b || x <= a {
            continue;
        }
        let d = x - rate;
        if rng.random::<f64>().ln() <= -0.5 * d * d {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngdist::RngStream;

    fn draws(mu: f64, s: f64, lo: f64, hi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0).rng();
        (0..n)
            .map(|_| sample_truncated_normal(mu, s, lo, hi, &mut rng).unwrap())
            .collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn untruncated_mean() {
        let v = draws(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, 100_000, 1);
        assert!(mean(&v).abs() < 0.01);
    }

    #[test]
    fn half_normal_mean() {
        let v = draws(0.0, 1.0, 0.0, f64::INFINITY, 100_000, 2);
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean(&v) - want).abs() < 0.01, "{}", mean(&v));
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn tail_interval_mean() {
        // E[Z | 4 < Z ≤ 5] from scipy.stats.truncnorm(4, 5).mean()
        let want = 4.216_830_780_601_032;
        let v = draws(0.0, 1.0, 4.0, 5.0, 100_000, 3);
        assert!(v.iter().all(|&x| x > 4.0 && x <= 5.0));
        assert!((mean(&v) - want).abs() < 0.01, "{}", mean(&v));
    }

    #[test]
    fn far_tails_and_mirrored_intervals_stay_inside() {
        for &(mu, s, lo, hi) in &[
            (0.0, 1.0, 6.0, 7.0),
            (0.0, 1.0, -7.0, -6.0),
            (0.0, 1.0, 30.0, f64::INFINITY),
            (0.0, 1.0, f64::NEG_INFINITY, -40.0),
            (1.0, 0.01, 1.2, 1.2000001),
            (-3.0, 2.0, -0.5, 0.8),
            (0.0, 1.0, -1e-12, 1e-12),
        ] {
            for x in draws(mu, s, lo, hi, 2_000, 4) {
                assert!(x > lo && x <= hi, "({mu},{s},{lo},{hi}) -> {x}");
            }
        }
    }

    #[test]
    fn empty_interval_is_an_error() {
        let mut rng = RngStream::new(0, 0).rng();
        assert!(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 1.0, 2.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
    }
}
