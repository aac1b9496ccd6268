//! Full conditional of one gene's thresholds `δ_1 ≤ … ≤ δ_{m+1}`.
//!
//! Given the latent values, `δ_d` must separate level `d-1` from level `d`
//! (level `m+1` being the observed entries). Each threshold therefore lives
//! in `(max z at level d-1, min z at level d)`. When level `d` is empty,
//! `δ_d` and `δ_{d+1}` share one interval, so the thresholds split into runs
//! linked by empty levels. Under a flat or ordered-uniform prior each run is
//! a set of sorted independent uniforms over its interval.

use rand::Rng;

use crate::copula::Entry;
use crate::error::{Result, ScfmError};
use crate::normal;
use crate::rngdist::open_unit;

/// Where the thresholds may go when the data leave a side unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdSupport {
    /// Flat prior; an unbounded top is capped at `ceiling` and an unbounded
    /// bottom at `min(Φ⁻¹(1/(n+1)), upper − 1)`.
    Capped { ceiling: f64, floor: f64 },
    /// Ordered-uniform prior on `[-B, B]`.
    Box(f64),
}

impl ThresholdSupport {
    /// The flat-prior caps for `n` cells.
    pub fn capped(n: usize) -> Self {
        let n1 = (n + 1) as f64;
        ThresholdSupport::Capped {
            ceiling: normal::quantile(n as f64 / n1),
            floor: normal::quantile(1.0 / n1),
        }
    }

    pub fn new(threshold_box: Option<f64>, n: usize) -> Self {
        match threshold_box {
            Some(b) => ThresholdSupport::Box(b),
            None => Self::capped(n),
        }
    }
}

/// Per-threshold bounds `(lower_d, upper_d)` from the data, `d = 1..=m+1`;
/// infinite where the relevant level is empty.
pub fn threshold_bounds(entries: &[Entry], z: &[f64], m: u32) -> (Vec<f64>, Vec<f64>) {
    let levels = m as usize + 1;
    let mut max_at = vec![f64::NEG_INFINITY; levels];
    let mut min_at = vec![f64::INFINITY; levels + 1];
    for (e, &v) in entries.iter().zip(z) {
        let l = match *e {
            Entry::LowCount(d) => d as usize,
            Entry::Observed(_) => levels,
        };
        if l < levels {
            max_at[l] = max_at[l].max(v);
        }
        min_at[l] = min_at[l].min(v);
    }
    (max_at, min_at[1..].to_vec())
}

/// Draws `δ_1..δ_{m+1}` uniformly from the region allowed by `lower`/`upper`.
pub fn sample_thresholds<R: Rng + ?Sized>(
    lower: &[f64],
    upper: &[f64],
    support: ThresholdSupport,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let t = lower.len();
    let mut out = Vec::with_capacity(t);
    let mut start = 0;
    while start < t {
        // Threshold d joins d+1 when level d+1 is empty, i.e. upper_d = ∞.
        let mut end = start;
        while end + 1 < t && upper[end] == f64::INFINITY {
            end += 1;
        }
        let (mut lo, mut hi) = (lower[start], upper[end]);
        match support {
            ThresholdSupport::Box(b) => {
                lo = lo.max(-b);
                hi = hi.min(b);
            }
            ThresholdSupport::Capped { ceiling, floor } => {
                if hi == f64::INFINITY {
                    hi = ceiling;
                }
                if lo == f64::NEG_INFINITY {
                    lo = floor.min(hi - 1.0);
                }
            }
        }
        if !(lo < hi) {
            return Err(ScfmError::Invariant {
                sweep: 0,
                msg: format!(
                    "empty threshold region ({lo}, {hi}) for thresholds {}..={}",
                    start + 1,
                    end + 1
                ),
            });
        }
        let first = out.len();
        for _ in start..=end {
            let mut v = lo + (hi - lo) * open_unit(rng);
            let mut tries = 0;
            while !(v > lo && v < hi) {
                tries += 1;
                if tries > 64 {
                    return Err(ScfmError::Invariant {
                        sweep: 0,
                        msg: format!("threshold interval ({lo}, {hi}) too narrow"),
                    });
                }
                v = lo + (hi - lo) * open_unit(rng);
            }
            out.push(v);
        }
        out[first..].sort_by(f64::total_cmp);
        start = end + 1;
    }
    Ok(out)
}
