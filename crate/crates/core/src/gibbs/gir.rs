//! Getting-it-right check of the sampler on a small model.
//!
//! Marginal-conditional draws sample parameters straight from the prior.
//! Successive-conditional draws alternate one Gibbs sweep with a fresh draw
//! of scores, latent values and data given the current parameters. Both
//! target the same joint law, so functionals of the parameters must have
//! matching means.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sweep, tau_prior_shape, ThresholdSupport};
use crate::copula::{Entry, PseudoData};
use crate::error::{Result, ScfmError};
use crate::model::{DlMode, Hyperparams, ModelState, ScaleUpdate};
use crate::rngdist::{
    sample_exponential, sample_gamma, sample_inverse_gamma, sample_std_normal, RngStream,
};

/// Names of the monitored functionals, in the order of [`functionals`].
pub const FUNCTIONALS: [&str; 4] = ["tau", "sigma2_1", "lambda_11", "delta_11"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirConfig {
    pub n: usize,
    pub p: usize,
    pub k_max: usize,
    pub m: u32,
    pub alpha: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub threshold_box: f64,
    pub dl_mode: DlMode,
    pub scale_update: ScaleUpdate,
    pub rotation_moves: bool,
    pub sweeps: usize,
    pub prior_draws: usize,
    pub batches: usize,
    pub seed: u64,
}

impl Default for GirConfig {
    fn default() -> Self {
        Self {
            n: 20,
            p: 3,
            k_max: 2,
            m: 1,
            alpha: 0.5,
            // a > 2 so that σ² has a finite variance
            a_sigma: 3.0,
            b_sigma: 2.0,
            threshold_box: 2.0,
            dl_mode: DlMode::Elementwise,
            scale_update: ScaleUpdate::Exact,
            rotation_moves: true,
            sweeps: 50_000,
            prior_draws: 50_000,
            batches: 50,
            seed: 1,
        }
    }
}

impl GirConfig {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            k_max: self.k_max,
            m: self.m,
            alpha: self.alpha,
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            iterations: self.sweeps.max(1),
            burn_in: 0,
            thin: 1,
            seed: self.seed,
            dl_mode: self.dl_mode,
            scale_update: self.scale_update,
            save_scores: false,
            rotation_moves: self.rotation_moves,
            threshold_box: Some(self.threshold_box),
            progress_every: 0,
        }
    }
}

/// Comparison of one functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirCheck {
    pub name: String,
    pub prior_mean: f64,
    pub prior_se: f64,
    pub chain_mean: f64,
    pub chain_se: f64,
    /// Difference of means in units of its combined standard error.
    pub z: f64,
}

impl GirCheck {
    pub fn passes(&self, max_se: f64) -> bool {
        self.z.abs() <= max_se
    }
}

fn dirichlet<R: Rng + ?Sized>(len: usize, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    let g = (0..len)
        .map(|_| sample_gamma(alpha, 1.0, rng))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = g.iter().sum();
    Ok(g.into_iter().map(|v| v / total).collect())
}

/// Parameters drawn from the prior; scores and latent values are then drawn
/// given them.
pub fn sample_prior<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<ModelState> {
    let k = hp.k_max;
    let bound = hp
        .threshold_box
        .ok_or_else(|| ScfmError::arg("prior sampling needs a threshold box"))?;
    let tau = sample_gamma(tau_prior_shape(p, k, hp.alpha, hp.dl_mode), 0.5, rng)?;
    let phi = match hp.dl_mode {
        DlMode::Elementwise => DMatrix::from_row_slice(p, k, &dirichlet(p * k, hp.alpha, rng)?),
        DlMode::Columnwise => DMatrix::from_row_slice(1, k, &dirichlet(k, hp.alpha, rng)?),
    };
    let mut xi = DMatrix::zeros(p, k);
    for v in xi.iter_mut() {
        *v = sample_exponential(0.5, rng)?;
    }
    let mut state = ModelState {
        lambda: DMatrix::zeros(p, k),
        sigma2: DVector::zeros(p),
        u: DMatrix::zeros(n, k),
        delta: DMatrix::zeros(p, hp.m as usize + 1),
        phi,
        tau,
        xi,
        z: DMatrix::zeros(n, p),
    };
    for j in 0..p {
        for h in 0..k {
            state.lambda[(j, h)] = state.loading_prior_var(j, h).sqrt() * sample_std_normal(rng);
        }
        state.sigma2[j] = sample_inverse_gamma(hp.a_sigma, hp.b_sigma, rng)?;
        let mut d: Vec<f64> = (0..=hp.m)
            .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        d.sort_by(f64::total_cmp);
        for (t, v) in d.into_iter().enumerate() {
            state.delta[(j, t)] = v;
        }
    }
    regenerate_latent(&mut state, rng);
    Ok(state)
}

/// Fresh `u_i ~ N(0, I)` and `z_i = Ψ^{-1/2}(Λu_i + ε_i)`.
pub fn regenerate_latent<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) {
    for v in state.u.iter_mut() {
        *v = sample_std_normal(rng);
    }
    let psi = state.psi();
    let mean = &state.u * state.lambda.transpose();
    for j in 0..state.p() {
        let (root, sd) = (psi[j].sqrt(), state.sigma2[j].sqrt());
        for i in 0..state.n() {
            state.z[(i, j)] = (mean[(i, j)] + sd * sample_std_normal(rng)) / root;
        }
    }
}

/// The data implied by the latent values: level `d` when
/// `δ_d < z ≤ δ_{d+1}`, the value itself above `δ_{m+1}`.
pub fn pseudodata_from_latent(state: &ModelState, m: u32) -> Result<PseudoData> {
    let (n, p) = (state.n(), state.p());
    let mut entries = Vec::with_capacity(n * p);
    for j in 0..p {
        let row: Vec<f64> = state.delta.row(j).iter().copied().collect();
        for i in 0..n {
            let z = state.z[(i, j)];
            entries.push(match row.iter().position(|&t| z <= t) {
                Some(d) => Entry::LowCount(d as u32),
                None => Entry::Observed(z),
            });
        }
    }
    PseudoData::from_entries(n, p, m, entries)
}

/// `(τ, σ_1², λ_11, δ_11)`.
pub fn functionals(state: &ModelState) -> [f64; 4] {
    [state.tau, state.sigma2[0], state.lambda[(0, 0)], state.delta[(0, 0)]]
}

fn mean_se_iid(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and batch-means standard error.
pub fn mean_se_batched(x: &[f64], batches: usize) -> (f64, f64) {
    let len = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let (_, se) = mean_se_iid(&means);
    (x.iter().sum::<f64>() / x.len() as f64, se)
}

/// Runs both simulators and compares the functional means.
pub fn getting_it_right(cfg: &GirConfig) -> Result<Vec<GirCheck>> {
    let hp = cfg.hyperparams();
    hp.validate()?;
    if cfg.batches < 2 || cfg.sweeps < cfg.batches || cfg.prior_draws < 2 {
        return Err(ScfmError::arg("too few draws for the requested batches"));
    }
    let base = RngStream::new(cfg.seed, 0);

    let mut rng = base.derive(1).rng();
    let mut prior = vec![Vec::with_capacity(cfg.prior_draws); 4];
    for _ in 0..cfg.prior_draws {
        let s = sample_prior(cfg.n, cfg.p, &hp, &mut rng)?;
        for (acc, v) in prior.iter_mut().zip(functionals(&s)) {
            acc.push(v);
        }
    }

    let mut rng = base.derive(2).rng();
    let chain_stream = base.derive(3);
    let support = ThresholdSupport::Box(cfg.threshold_box);
    let mut state = sample_prior(cfg.n, cfg.p, &hp, &mut rng)?;
    let mut chain = vec![Vec::with_capacity(cfg.sweeps); 4];
    for s in 1..=cfg.sweeps {
        let pd = pseudodata_from_latent(&state, cfg.m)?;
        sweep(&mut state, &pd, &hp, support, &chain_stream, s as u64)?;
        regenerate_latent(&mut state, &mut rng);
        for (acc, v) in chain.iter_mut().zip(functionals(&state)) {
            acc.push(v);
        }
    }

    Ok(FUNCTIONALS
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let (pm, pse) = mean_se_iid(&prior[f]);
            let (cm, cse) = mean_se_batched(&chain[f], cfg.batches);
            GirCheck {
                name: name.to_string(),
                prior_mean: pm,
                prior_se: pse,
                chain_mean: cm,
                chain_se: cse,
                z: (cm - pm) / (pse * pse + cse * cse).sqrt(),
            }
        })
        .collect())
}
