//! Empirical marginals and the transform of counts to Gaussian-scale
//! pseudodata.
//!
//! Each gene `j` gets a rescaled empirical CDF `F̂_j(x) = #{x_ij ≤ x} / (n+1)`.
//! Values above the inflation cap `m` become observed pseudodata
//! `Φ⁻¹(F̂_j(x))`; values `d ≤ m` are kept only as their level, to be
//! imputed by the sampler inside `(δ_jd, δ_j,d+1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfmError};
use crate::ingest::CountMatrix;
use crate::normal;

/// Step-function CDF scaled by `n/(n+1)` so that it stays below one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    support: Vec<f64>,
    cum_prob: Vec<f64>,
    n: usize,
}

impl EmpiricalCdf {
    /// Fits `F̂(x) = (n/(n+1)) · (1/n) · #{i : x_i ≤ x}`.
    pub fn fit(column: &[f64]) -> Result<Self> {
        if column.is_empty() {
            return Err(ScfmError::arg("empirical CDF of an empty column"));
        }
        if column.iter().any(|v| v.is_nan()) {
            return Err(ScfmError::arg("empirical CDF of a column containing NaN"));
        }
        let n = column.len();
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        let denom = (n + 1) as f64;
        let mut support = Vec::new();
        let mut cum_prob = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if i + 1 == n || sorted[i + 1] != v {
                support.push(v);
                cum_prob.push((i + 1) as f64 / denom);
            }
        }
        Ok(Self {
            support,
            cum_prob,
            n,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_prob(&self) -> &[f64] {
        &self.cum_prob
    }

    /// Number of observations the CDF was fitted on.
    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= x);
        if k == 0 {
            0.0
        } else {
            self.cum_prob[k - 1]
        }
    }

    /// Smallest support value `v` with `F̂(v) ≥ u`; the sample maximum when
    /// `u` exceeds `n/(n+1)`.
    pub fn pseudo_inverse(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(ScfmError::arg(format!(
                "pseudo-inverse argument must lie in [0, 1), got {u}"
            )));
        }
        Ok(self.quantile_clamped(u))
    }

    // Caller guarantees u ∈ [0, 1).
    pub(crate) fn quantile_clamped(&self, u: f64) -> f64 {
        let k = self.cum_prob.partition_point(|&c| c < u);
        self.support[k.min(self.support.len() - 1)]
    }

    /// The copula transform `Φ⁻¹ ∘ F̂`.
    pub fn gaussian_score(&self, x: f64) -> f64 {
        normal::quantile(self.eval(x))
    }
}

/// Largest count treated as an inflated low-count level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationScheme {
    pub m: u32,
}

impl SegmentationScheme {
    pub fn new(m: u32) -> Self {
        Self { m }
    }
}

/// One cell of the pseudodata grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Entry {
    /// Gaussian-scale pseudo-observation of a count above the cap.
    Observed(f64),
    /// A low count `d ≤ m` whose latent value is imputed.
    LowCount(u32),
}

/// Gene-major grid of pseudodata entries plus the marginals they came from.
#[derive(Clone, Debug)]
pub struct PseudoData {
    n: usize,
    p: usize,
    m: u32,
    entries: Vec<Entry>,
    cdfs: Vec<EmpiricalCdf>,
}

impl PseudoData {
    /// Builds pseudodata directly from entries laid out gene-major
    /// (`entries[j * n + i]`). No marginals are attached.
    pub fn from_entries(n: usize, p: usize, m: u32, entries: Vec<Entry>) -> Result<Self> {
        if entries.len() != n * p {
            return Err(ScfmError::arg(format!(
                "{} entries for a {n}×{p} grid",
                entries.len()
            )));
        }
        for e in &entries {
            match *e {
                Entry::Observed(z) if !z.is_finite() => {
                    return Err(ScfmError::data("observed pseudodata must be finite"))
                }
                Entry::LowCount(d) if d > m => {
                    return Err(ScfmError::data(format!("low-count level {d} above cap {m}")))
                }
                _ => {}
            }
        }
        Ok(Self {
            n,
            p,
            m,
            entries,
            cdfs: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Entry {
        self.entries[j * self.n + i]
    }

    /// Entries of gene `j`, indexed by cell.
    pub fn gene(&self, j: usize) -> &[Entry] {
        &self.entries[j * self.n..(j + 1) * self.n]
    }

    /// Per-gene marginals; empty when built with [`PseudoData::from_entries`].
    pub fn cdfs(&self) -> &[EmpiricalCdf] {
        &self.cdfs
    }

    /// Number of entries of gene `j` at each level `0..=m`.
    pub fn level_counts(&self, j: usize) -> Vec<usize> {
        let mut counts = vec![0; self.m as usize + 1];
        for e in self.gene(j) {
            if let Entry::LowCount(d) = e {
                counts[*d as usize] += 1;
            }
        }
        counts
    }

    /// The highest attainable pseudodata value, `Φ⁻¹(n/(n+1))`.
    pub fn score_ceiling(&self) -> f64 {
        normal::quantile(self.n as f64 / (self.n + 1) as f64)
    }
}

/// Transforms a count matrix into pseudodata under the cap `seg.m`.
pub fn build_pseudodata(m: &CountMatrix, seg: SegmentationScheme) -> Result<PseudoData> {
    let (n, p) = (m.n_cells(), m.n_genes());
    if p == 0 {
        return Err(ScfmError::arg("matrix has no genes"));
    }
    let cap = f64::from(seg.m);
    let mut entries = Vec::with_capacity(n * p);
    let mut cdfs = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = m.values().column(j).iter().copied().collect();
        let cdf = EmpiricalCdf::fit(&col)?;
        for (i, &x) in col.iter().enumerate() {
            if x <= cap {
                if x.fract() != 0.0 {
                    return Err(ScfmError::data(format!(
                        "inflated region must be integer counts: cell {}, gene {} has {x}",
                        i + 1,
                        m.gene_names()[j]
                    )));
                }
                entries.push(Entry::LowCount(x as u32));
            } else {
                entries.push(Entry::Observed(cdf.gaussian_score(x)));
            }
        }
        cdfs.push(cdf);
    }
    Ok(PseudoData {
        n,
        p,
        m: seg.m,
        entries,
        cdfs,
    })
}

/// Maps a Gaussian value to an observation: level `d` when
/// `δ_d < z ≤ δ_{d+1}` (with `δ_0 = -∞`), otherwise `x_star`.
///
/// `deltas` holds `δ_1..δ_{m+1}`.
pub fn segment(x_star: f64, deltas: &[f64], z: f64, m: u32) -> f64 {
    debug_assert_eq!(deltas.len(), m as usize + 1);
    match deltas.iter().position(|&upper| z <= upper) {
        Some(d) => d as f64,
        None => x_star,
    }
}
