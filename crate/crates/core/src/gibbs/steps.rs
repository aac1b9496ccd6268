//! The six conditional updates of one sweep, plus the rescaling move used
//! by the exact scale update.
//!
//! Every parallel loop draws from a child stream keyed by its gene or cell
//! index, so results do not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::conditionals::{loading_conditional, score_system, GaussianPrecision};
use super::thresholds::{sample_thresholds, threshold_bounds, ThresholdSupport};
use crate::copula::{Entry, PseudoData};
use crate::error::{Result, ScfmError};
use crate::model::{DlMode, Hyperparams, ModelState};
use crate::rngdist::{
    open_unit, sample_gig, sample_inverse_gamma, sample_std_normal, sample_truncated_normal,
    RngStream, ABS_LOADING_FLOOR,
};

/// Standard deviation of the log scale factor in [`step_rescale`].
const RESCALE_STEP: f64 = 0.5;

/// Standard deviation of the small-angle proposals in [`step_rotate`].
const ROTATE_STEP: f64 = 0.2;

/// Accepted/proposed counts of one Metropolis-Hastings move type.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MhTally {
    pub accepted: u64,
    pub proposed: u64,
}

impl MhTally {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn add(&mut self, other: MhTally) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }

    fn one(accepted: bool) -> Self {
        MhTally {
            accepted: accepted as u64,
            proposed: 1,
        }
    }
}

fn sum_tallies(t: impl Iterator<Item = MhTally>) -> MhTally {
    t.fold(MhTally::default(), |mut a, b| {
        a.add(b);
        a
    })
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || open_unit(rng).ln() < log_ratio
}

fn invariant(msg: String) -> ScfmError {
    ScfmError::Invariant { sweep: 0, msg }
}

/// `(δ_d, δ_{d+1}]` for level `d`, with `δ_0 = −∞`.
pub fn level_interval(delta_row: &[f64], d: u32) -> (f64, f64) {
    let d = d as usize;
    let lo = if d == 0 { f64::NEG_INFINITY } else { delta_row[d - 1] };
    (lo, delta_row[d])
}

fn delta_row(state: &ModelState, j: usize) -> Vec<f64> {
    state.delta.row(j).iter().copied().collect()
}

/// Step (i): latent values of low-count entries. On the copula scale
/// `z_ij ~ N(λ_jᵀu_i/√ψ_j, σ_j²/ψ_j)` restricted to the entry's interval.
pub fn step_latent(state: &mut ModelState, pd: &PseudoData, stream: RngStream) -> Result<()> {
    let n = state.n();
    let psi = state.psi();
    let mean = &state.u * state.lambda.transpose();
    let sigma2 = &state.sigma2;
    let delta = &state.delta;
    state
        .z
        .as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(j, zcol)| {
            let mut rng = stream.derive(j as u64).rng();
            let root = psi[j].sqrt();
            let sd = (sigma2[j] / psi[j]).sqrt();
            let row: Vec<f64> = delta.row(j).iter().copied().collect();
            for (i, e) in pd.gene(j).iter().enumerate() {
                match *e {
                    Entry::Observed(v) => zcol[i] = v,
                    Entry::LowCount(d) => {
                        let (lo, hi) = level_interval(&row, d);
                        zcol[i] = sample_truncated_normal(mean[(i, j)] / root, sd, lo, hi, &mut rng)?;
                    }
                }
            }
            Ok(())
        })
}

/// Step (ii): thresholds, uniformly over the region the latent values allow.
pub fn step_thresholds(
    state: &mut ModelState,
    pd: &PseudoData,
    support: ThresholdSupport,
    stream: RngStream,
) -> Result<()> {
    let n = state.n();
    let z = state.z.as_slice();
    let rows = (0..state.p())
        .into_par_iter()
        .map(|j| {
            let (lo, hi) = threshold_bounds(pd.gene(j), &z[j * n..(j + 1) * n], pd.m());
            let mut rng = stream.derive(j as u64).rng();
            sample_thresholds(&lo, &hi, support, &mut rng)
                .map_err(|e| annotate(e, &format!("gene {}", j + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (j, row) in rows.into_iter().enumerate() {
        for (d, v) in row.into_iter().enumerate() {
            state.delta[(j, d)] = v;
        }
    }
    Ok(())
}

fn annotate(e: ScfmError, what: &str) -> ScfmError {
    match e {
        ScfmError::Invariant { sweep, msg } => ScfmError::Invariant {
            sweep,
            msg: format!("{what}: {msg}"),
        },
        other => other,
    }
}

/// Sufficient statistics of gene `j` for the scale-aware updates.
struct GeneStats {
    /// `Σ_i z_ij²`
    zz: f64,
    /// `Uᵀz_j`
    utz: DVector<f64>,
}

fn gene_stats(state: &ModelState, utz: &DMatrix<f64>, j: usize) -> GeneStats {
    GeneStats {
        zz: state.z.column(j).norm_squared(),
        utz: utz.column(j).into_owned(),
    }
}

/// Step (iii): noise variances.
///
/// `Conjugate` draws `σ_j² ~ IG(a + n/2, b + ½Σ_i(√ψ_j z_ij − λ_jᵀu_i)²)` at
/// the current ψ. `Exact` uses that draw as a proposal and corrects for the
/// dependence of `W = √ψ z` on σ².
pub fn step_sigma(state: &mut ModelState, hp: &Hyperparams, stream: RngStream) -> Result<MhTally> {
    let n = state.n() as f64;
    let psi = state.psi();
    let utz = state.u.transpose() * &state.z;
    let utu = state.u.transpose() * &state.u;
    let exact = hp.scale_update == crate::model::ScaleUpdate::Exact;
    let results = (0..state.p())
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.derive(j as u64).rng();
            let lam = state.lambda.row(j).transpose();
            let st = gene_stats(state, &utz, j);
            let c1 = lam.dot(&st.utz);
            let c2 = lam.dot(&(&utu * &lam));
            let lam2 = lam.norm_squared();
            // Σ_i (√ψ z_ij − λᵀu_i)² as a function of ψ
            let ss = |psi: f64| (psi * st.zz - 2.0 * psi.sqrt() * c1 + c2).max(0.0);
            let shape = hp.a_sigma + n / 2.0;
            let scale_at = |psi: f64| hp.b_sigma + ss(psi) / 2.0;

            let s_old = state.sigma2[j];
            let s_new = sample_inverse_gamma(shape, scale_at(psi[j]), &mut rng)?;
            if !exact {
                return Ok((s_new, MhTally::default()));
            }
            // log π(s) − log q(s | ψ_from), dropping terms common to both sides
            let h = |s: f64, psi_from: f64| {
                let psi_s = lam2 + s;
                n / 2.0 * psi_s.ln() - (ss(psi_s) - ss(psi_from)) / (2.0 * s)
                    - shape * scale_at(psi_from).ln()
            };
            let psi_new = lam2 + s_new;
            let log_ratio = h(s_new, psi[j]) - h(s_old, psi_new);
            let ok = accept(log_ratio, &mut rng);
            Ok((if ok { s_new } else { s_old }, MhTally::one(ok)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tally = MhTally::default();
    for (j, (s, t)) in results.into_iter().enumerate() {
        state.sigma2[j] = s;
        tally.add(t);
    }
    Ok(tally)
}

/// Step (iv): factor scores, `u_i ~ N(V ΛᵀΣ⁻¹W_i, V)` with
/// `V = (ΛᵀΣ⁻¹Λ + I)⁻¹` factorized once per sweep.
pub fn step_scores(state: &mut ModelState, stream: RngStream) -> Result<()> {
    let (precision, gain) = score_system(&state.lambda, &state.sigma2);
    let k = state.k();
    let cond = GaussianPrecision::from_canonical(precision, &DVector::zeros(k))?;
    let w = state.working();
    let means = (0..state.n())
        .map(|i| cond.solve(&(&gain * w.row(i).transpose())))
        .collect::<Vec<_>>();
    let rows = means
        .into_par_iter()
        .enumerate()
        .map(|(i, mean)| {
            let mut rng = stream.derive(i as u64).rng();
            mean + cond.noise(&mut rng)
        })
        .collect::<Vec<_>>();
    for (i, r) in rows.into_iter().enumerate() {
        state.u.row_mut(i).copy_from(&r.transpose());
    }
    Ok(())
}

/// Step (v): loading rows, `λ_j ~ N(η_j, (UᵀU/σ_j² + D_j⁻¹)⁻¹)` with
/// `D_j = diag(ξ_jh τ² φ_jh²)` and `η_j` built from `W_j = √ψ_j z_j`.
/// `Exact` adds the Metropolis-Hastings correction for the ψ dependence.
pub fn step_loadings(state: &mut ModelState, hp: &Hyperparams, stream: RngStream) -> Result<MhTally> {
    let n = state.n() as f64;
    let k = state.k();
    let psi = state.psi();
    let utu = state.u.transpose() * &state.u;
    let utz = state.u.transpose() * &state.z;
    let exact = hp.scale_update == crate::model::ScaleUpdate::Exact;
    let results = (0..state.p())
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.derive(j as u64).rng();
            let prior: Vec<f64> = (0..k).map(|h| state.loading_prior_var(j, h)).collect();
            let s2 = state.sigma2[j];
            let st = gene_stats(state, &utz, j);
            // unit-ψ conditional: mean η₁, and η(ψ) = √ψ η₁
            let cond = loading_conditional(&utu, &st.utz, s2, &prior)?;
            let old = state.lambda.row(j).transpose();
            let new = &cond.mean * psi[j].sqrt() + cond.noise(&mut rng);
            if !exact {
                return Ok((new, MhTally::default()));
            }
            let b1 = &st.utz / s2;
            let eta_b = cond.mean.dot(&b1);
            // log π(λ) − log q(λ | ψ_from) up to shared constants
            let g = |lam: &DVector<f64>, psi_from: f64| {
                let psi_l = lam.norm_squared() + s2;
                n / 2.0 * psi_l.ln() - psi_l * st.zz / (2.0 * s2)
                    + (psi_l.sqrt() - psi_from.sqrt()) * lam.dot(&b1)
                    + psi_from * eta_b / 2.0
            };
            let psi_new = new.norm_squared() + s2;
            let log_ratio = g(&new, psi[j]) - g(&old, psi_new);
            let ok = accept(log_ratio, &mut rng);
            Ok((if ok { new } else { old }, MhTally::one(ok)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tally = MhTally::default();
    for (j, (row, t)) in results.into_iter().enumerate() {
        state.lambda.row_mut(j).copy_from(&row.transpose());
        tally.add(t);
    }
    Ok(tally)
}

/// Rescales `(λ_j, σ_j²) → (cλ_j, c²σ_j²)`. The copula-scale likelihood is
/// invariant, so only the prior and the Jacobian `c^{k+2}` enter.
pub fn step_rescale(state: &mut ModelState, hp: &Hyperparams, stream: RngStream) -> Result<MhTally> {
    let k = state.k();
    let results = (0..state.p())
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.derive(j as u64).rng();
            let log_c = RESCALE_STEP * sample_std_normal(&mut rng);
            let c2 = (2.0 * log_c).exp();
            let s = state.sigma2[j];
            let quad: f64 = (0..k)
                .map(|h| state.lambda[(j, h)].powi(2) / state.loading_prior_var(j, h))
                .sum();
            let log_ratio = -(c2 - 1.0) / 2.0 * quad - 2.0 * (hp.a_sigma + 1.0) * log_c
                - hp.b_sigma / (c2 * s)
                + hp.b_sigma / s
                + (k as f64 + 2.0) * log_c;
            let ok = accept(log_ratio, &mut rng);
            (if ok { log_c.exp() } else { 1.0 }, MhTally::one(ok))
        })
        .collect::<Vec<_>>();
    for (j, &(c, _)) in results.iter().enumerate() {
        if c != 1.0 {
            state.lambda.row_mut(j).scale_mut(c);
            state.sigma2[j] *= c * c;
        }
    }
    Ok(sum_tallies(results.into_iter().map(|(_, t)| t)))
}

/// Rotates every pair of factor columns, `(Λ, U) → (ΛR, UR)`. The product
/// `ΛUᵀ`, the row norms of Λ (hence ψ and W) and the score prior are
/// invariant, so only the shrinkage prior enters, with ξ integrated out:
/// `λ_jh | φ, τ ~ Laplace(φ_jh τ)`. Must be followed by [`step_dl_hyper`],
/// which redraws ξ.
pub fn step_rotate(state: &mut ModelState, stream: RngStream) -> Result<MhTally> {
    let (p, k) = (state.p(), state.k());
    let mut tally = MhTally::default();
    let mut rng = stream.rng();
    let inv_scale = DMatrix::from_fn(p, k, |j, h| 1.0 / (state.phi_at(j, h) * state.tau));
    for a in 0..k {
        for b in a + 1..k {
            let theta = if rng.random::<bool>() {
                ROTATE_STEP * sample_std_normal(&mut rng)
            } else {
                std::f64::consts::PI * (open_unit(&mut rng) - 0.5)
            };
            let (c, s) = (theta.cos(), theta.sin());
            let lam = &state.lambda;
            let log_ratio: f64 = (0..p)
                .map(|j| {
                    let (x, y) = (lam[(j, a)], lam[(j, b)]);
                    let (nx, ny) = (c * x - s * y, s * x + c * y);
                    (x.abs() - nx.abs()) * inv_scale[(j, a)] + (y.abs() - ny.abs()) * inv_scale[(j, b)]
                })
                .sum();
            let ok = accept(log_ratio, &mut rng);
            tally.add(MhTally::one(ok));
            if ok {
                for m in [&mut state.lambda, &mut state.u] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, a)], m[(r, b)]);
                        m[(r, a)] = c * x - s * y;
                        m[(r, b)] = s * x + c * y;
                    }
                }
            }
        }
    }
    Ok(tally)
}

/// Step (vi): Dirichlet-Laplace scales `φ`, `τ`, `ξ`, drawn in that order
/// from `p(φ | Λ) p(τ | φ, Λ) p(ξ | τ, φ, Λ)`.
pub fn step_dl_hyper(state: &mut ModelState, hp: &Hyperparams, stream: RngStream) -> Result<()> {
    let (p, k) = (state.p(), state.k());
    let alpha = hp.alpha;
    let abs = state.lambda.map(|v| v.abs().max(ABS_LOADING_FLOOR));
    let (pf, kf) = (p as f64, k as f64);

    let tau_order;
    match hp.dl_mode {
        DlMode::Elementwise => {
            let r = (0..p)
                .into_par_iter()
                .map(|j| {
                    let mut rng = stream.derive_path(&[0, j as u64]).rng();
                    (0..k)
                        .map(|h| sample_gig(alpha - 1.0, 1.0, 2.0 * abs[(j, h)], &mut rng))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let total: f64 = r.iter().flatten().sum();
            state.phi = DMatrix::from_fn(p, k, |j, h| r[j][h] / total);
            tau_order = pf * kf * (alpha - 1.0);
        }
        DlMode::Columnwise => {
            let mut rng = stream.derive(0).rng();
            let col_sums: Vec<f64> = (0..k).map(|h| abs.column(h).sum()).collect();
            let r = col_sums
                .iter()
                .map(|&s| sample_gig(alpha - pf, 1.0, 2.0 * s, &mut rng))
                .collect::<Result<Vec<f64>>>()?;
            let total: f64 = r.iter().sum();
            state.phi = DMatrix::from_fn(1, k, |_, h| r[h] / total);
            tau_order = kf * alpha - pf * kf;
        }
    }

    let chi_tau: f64 = (0..p)
        .flat_map(|j| (0..k).map(move |h| (j, h)))
        .map(|(j, h)| abs[(j, h)] / state.phi_at(j, h))
        .sum();
    let mut rng = stream.derive(1).rng();
    state.tau = sample_gig(tau_order, 1.0, 2.0 * chi_tau, &mut rng)?;

    let tau2 = state.tau * state.tau;
    let xi = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.derive_path(&[2, j as u64]).rng();
            (0..k)
                .map(|h| {
                    let phi = state.phi_at(j, h);
                    let chi = abs[(j, h)].powi(2) / (tau2 * phi * phi);
                    sample_gig(0.5, 1.0, chi, &mut rng)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    state.xi = DMatrix::from_fn(p, k, |j, h| xi[j][h]);
    Ok(())
}

/// Checks the state invariants that hold after every sweep.
pub fn check_state(state: &ModelState, pd: &PseudoData) -> Result<()> {
    let (n, p) = (state.n(), state.p());
    for j in 0..p {
        let row = delta_row(state, j);
        if row.iter().any(|v| !v.is_finite()) || row.windows(2).any(|w| w[0] > w[1]) {
            return Err(invariant(format!("gene {}: thresholds {row:?} not ordered", j + 1)));
        }
        if !(state.sigma2[j] > 0.0 && state.sigma2[j].is_finite()) {
            return Err(invariant(format!("gene {}: sigma2 = {}", j + 1, state.sigma2[j])));
        }
        if state.lambda.row(j).iter().any(|v| !v.is_finite()) {
            return Err(invariant(format!("gene {}: non-finite loading", j + 1)));
        }
        let top = row[row.len() - 1];
        for i in 0..n {
            let z = state.z[(i, j)];
            match pd.get(i, j) {
                Entry::Observed(v) => {
                    if z != v || !(z > top) {
                        return Err(invariant(format!(
                            "cell {}, gene {}: observed value {v} inconsistent (z = {z}, top threshold {top})",
                            i + 1,
                            j + 1
                        )));
                    }
                }
                Entry::LowCount(d) => {
                    let (lo, hi) = level_interval(&row, d);
                    if !(z > lo && z <= hi) {
                        return Err(invariant(format!(
                            "cell {}, gene {}: latent {z} outside ({lo}, {hi}]",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
    }
    if !(state.tau > 0.0 && state.tau.is_finite()) {
        return Err(invariant(format!("tau = {}", state.tau)));
    }
    if state.xi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invariant("nonpositive xi".into()));
    }
    if state.phi.iter().any(|v| !(*v > 0.0)) || (state.phi.sum() - 1.0).abs() > 1e-12 {
        return Err(invariant(format!("phi off the simplex (sum {})", state.phi.sum())));
    }
    if state.u.iter().any(|v| !v.is_finite()) {
        return Err(invariant("non-finite score".into()));
    }
    Ok(())
}
