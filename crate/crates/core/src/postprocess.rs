//! Posterior summaries, factor-count selection, evaluation metrics and
//! posterior predictive checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{segment, EmpiricalCdf};
use crate::error::{Result, ScfmError};
use crate::model::{compute_correlation, compute_psi, standardized_loadings, Chain, Draw};
use crate::normal;
use crate::rngdist::{sample_std_normal, RngStream};

/// Column norms closer than this count as all equal.
const NORM_TIE: f64 = 1e-8;

/// Share of sign changes above which a factor column is reported.
pub const SIGN_CHANGE_LIMIT: f64 = 0.1;

/// Euclidean norm of every column.
pub fn column_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.norm()).collect()
}

/// Size of the high group when the column norms of one loadings draw are
/// split by 2-means. Centroids start at the smallest and largest norm and
/// Lloyd iterations run until the assignment stops changing.
pub fn khat_one_iteration(lambda: &DMatrix<f64>) -> usize {
    let norms = column_norms(lambda);
    let k = norms.len();
    if k <= 1 {
        return k;
    }
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < NORM_TIE {
        return k;
    }
    let (mut c_lo, mut c_hi) = (lo, hi);
    let mut high: Vec<bool> = vec![false; k];
    loop {
        let next: Vec<bool> = norms
            .iter()
            .map(|&v| (v - c_hi).abs() < (v - c_lo).abs())
            .collect();
        if next == high {
            break;
        }
        high = next;
        let mean = |flag: bool| {
            let (s, c) = norms
                .iter()
                .zip(&high)
                .filter(|(_, &h)| h == flag)
                .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
            s / c as f64
        };
        c_lo = mean(false);
        c_hi = mean(true);
    }
    high.iter().filter(|&&h| h).count()
}

/// Most frequent value, ties toward the smaller one.
pub fn mode_smallest(values: &[usize]) -> Option<usize> {
    let max = *values.iter().max()?;
    let mut counts = vec![0usize; max + 1];
    for &v in values {
        counts[v] += 1;
    }
    let best = *counts.iter().max()?;
    counts.iter().position(|&c| c == best)
}

/// Mode of the per-iteration k̂ values of a chain.
pub fn estimate_k(chain: &Chain) -> Result<usize> {
    mode_smallest(&chain.khat_per_iter).ok_or_else(|| ScfmError::arg("chain has no k̂ values"))
}

/// Indices of the `k_hat` columns with the largest norms, in descending
/// order of norm; equal norms keep the lower index first.
pub fn select_factors(lambda_mean: &DMatrix<f64>, k_hat: usize) -> Result<Vec<usize>> {
    let norms = column_norms(lambda_mean);
    if k_hat > norms.len() {
        return Err(ScfmError::arg(format!(
            "k_hat = {k_hat} exceeds {} columns",
            norms.len()
        )));
    }
    let mut idx: Vec<usize> = (0..norms.len()).collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    idx.truncate(k_hat);
    Ok(idx)
}

/// Posterior summary of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub lambda_mean: DMatrix<f64>,
    /// Mean of `Ψ^{-1/2}Λ` over draws: loadings on the correlation scale.
    pub lambda_std_mean: DMatrix<f64>,
    pub sigma2_mean: DVector<f64>,
    pub scores_mean: DMatrix<f64>,
    pub delta_mean: DMatrix<f64>,
    pub psi_mean: DVector<f64>,
    pub k_hat: usize,
    pub significant_factor_indices: Vec<usize>,
    /// Significant columns whose dominant loading changes sign in more than
    /// [`SIGN_CHANGE_LIMIT`] of consecutive draws.
    pub unstable_columns: Vec<usize>,
}

/// Averages the stored draws and selects the significant factors.
pub fn summarize(chain: &Chain) -> Result<FitResult> {
    let draws = &chain.draws;
    if draws.is_empty() {
        return Err(ScfmError::arg("chain has no stored draws"));
    }
    let s = draws.len() as f64;
    let first = &draws[0];
    let mut lambda_mean = DMatrix::zeros(first.lambda.nrows(), first.lambda.ncols());
    let mut lambda_std_mean = lambda_mean.clone();
    let mut sigma2_mean = DVector::zeros(first.sigma2.len());
    let mut delta_mean = DMatrix::zeros(first.delta.nrows(), first.delta.ncols());
    let mut psi_mean = DVector::zeros(first.sigma2.len());
    for d in draws {
        lambda_mean += &d.lambda;
        lambda_std_mean += standardized_loadings(&d.lambda, &d.sigma2);
        sigma2_mean += &d.sigma2;
        delta_mean += &d.delta;
        psi_mean += compute_psi(&d.lambda, &d.sigma2);
    }
    for m in [&mut lambda_mean, &mut lambda_std_mean, &mut delta_mean] {
        *m /= s;
    }
    sigma2_mean /= s;
    psi_mean /= s;

    let k_hat = estimate_k(chain)?;
    let significant_factor_indices = select_factors(&lambda_std_mean, k_hat)?;
    let unstable_columns = significant_factor_indices
        .iter()
        .copied()
        .filter(|&h| sign_change_rate(draws, &lambda_mean, h) > SIGN_CHANGE_LIMIT)
        .collect();
    Ok(FitResult {
        lambda_mean,
        lambda_std_mean,
        sigma2_mean,
        scores_mean: chain.scores_mean.clone(),
        delta_mean,
        psi_mean,
        k_hat,
        significant_factor_indices,
        unstable_columns,
    })
}

/// Share of consecutive draws in which the sign of column `h`'s dominant
/// loading (largest in the posterior mean) flips.
pub fn sign_change_rate(draws: &[Draw], lambda_mean: &DMatrix<f64>, h: usize) -> f64 {
    if draws.len() < 2 {
        return 0.0;
    }
    let j = lambda_mean.column(h).iamax();
    let flips = draws
        .windows(2)
        .filter(|w| (w[0].lambda[(j, h)] >= 0.0) != (w[1].lambda[(j, h)] >= 0.0))
        .count();
    flips as f64 / (draws.len() - 1) as f64
}

/// Pairwise Euclidean distances between rows, strict upper triangle in
/// row-major order.
pub fn pairwise_distances(a: &DMatrix<f64>) -> Vec<f64> {
    let r = a.nrows();
    let mut out = Vec::with_capacity(r * (r - 1) / 2);
    for i in 0..r {
        for k in i + 1..r {
            out.push((a.row(i) - a.row(k)).norm());
        }
    }
    out
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ScfmError::Undefined("correlation with a constant vector".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation between the pairwise row-distance matrices of `a`
/// and `b`. Invariant to rotations, reflections and shifts of either.
pub fn distance_spearman(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(ScfmError::arg(format!(
            "row counts differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() < 3 {
        return Err(ScfmError::Undefined("distance correlation needs at least 3 rows".into()));
    }
    let ra = average_ranks(&pairwise_distances(a));
    let rb = average_ranks(&pairwise_distances(b));
    pearson(&ra, &rb)
}

/// Columns `idx` of `m`, in that order.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_columns(idx)
}

/// One posterior predictive observation: `z ~ N(0, Ω)` mapped through the
/// thresholds and the empirical marginals.
pub fn ppc_sample<R: Rng + ?Sized>(
    draw: &Draw,
    cdfs: &[EmpiricalCdf],
    m: u32,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let omega = compute_correlation(&draw.lambda, &draw.sigma2);
    let chol = omega.cholesky().ok_or_else(|| ScfmError::Invariant {
        sweep: 0,
        msg: "predictive correlation is not positive definite".into(),
    })?;
    ppc_from_factor(chol.l_dirty(), draw, cdfs, m, rng)
}

fn ppc_from_factor<R: Rng + ?Sized>(
    l: &DMatrix<f64>,
    draw: &Draw,
    cdfs: &[EmpiricalCdf],
    m: u32,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = cdfs.len();
    if draw.sigma2.len() != p {
        return Err(ScfmError::arg(format!(
            "{p} marginals for a {}-gene draw",
            draw.sigma2.len()
        )));
    }
    let e = DVector::from_fn(p, |_, _| sample_std_normal(rng));
    let z = l.lower_triangle() * e;
    Ok((0..p)
        .map(|j| {
            let deltas: Vec<f64> = draw.delta.row(j).iter().copied().collect();
            let x_star = cdfs[j].quantile_clamped(normal::cdf(z[j]));
            segment(x_star, &deltas, z[j], m)
        })
        .collect())
}

/// `per_draw` predictive replicates for every stored draw; rows are
/// replicates, columns genes.
pub fn ppc_replicates(
    draws: &[Draw],
    cdfs: &[EmpiricalCdf],
    m: u32,
    per_draw: usize,
    stream: RngStream,
) -> Result<DMatrix<f64>> {
    let rows = draws
        .par_iter()
        .enumerate()
        .map(|(s, draw)| {
            let mut rng = stream.derive(s as u64).rng();
            let omega = compute_correlation(&draw.lambda, &draw.sigma2);
            let chol = omega.cholesky().ok_or_else(|| ScfmError::Invariant {
                sweep: s as u64,
                msg: "predictive correlation is not positive definite".into(),
            })?;
            let l = chol.l_dirty().clone();
            (0..per_draw)
                .map(|_| ppc_from_factor(&l, draw, cdfs, m, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / cdfs.len().max(1), cdfs.len(), &flat))
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Paired quantiles at probabilities `q/(Q+1)`, `q = 1..=Q`.
pub fn qq_table(observed: &[f64], predictive: &[f64], n_quantiles: usize) -> Result<Vec<(f64, f64)>> {
    if n_quantiles < 2 {
        return Err(ScfmError::arg("at least two quantiles required"));
    }
    if observed.is_empty() || predictive.is_empty() {
        return Err(ScfmError::arg("empty sample"));
    }
    let sort = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (o, p) = (sort(observed), sort(predictive));
    Ok((1..=n_quantiles)
        .map(|q| {
            let prob = q as f64 / (n_quantiles + 1) as f64;
            (quantile_type7(&o, prob), quantile_type7(&p, prob))
        })
        .collect())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a − F_b|`, exact under
/// ties.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let sort = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (a, b) = (sort(a), sort(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Per-gene posterior predictive comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpcGene {
    pub gene: String,
    pub ks: f64,
    pub qq: Vec<(f64, f64)>,
}

/// Median of a nonempty slice.
pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
