//! Data-augmented Gibbs sampler for the segmented copula factor model.
//!
//! The chain state keeps the latent matrix on the copula scale `z`; the
//! working-scale values `W = √ψ z` used by the factor-model updates are
//! derived from it, so observed entries always equal their pseudodata and
//! latent entries stay inside their threshold intervals when ψ moves.

mod conditionals;
pub mod gir;
mod steps;
mod thresholds;

use std::time::Instant;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub use conditionals::{
    loading_conditional, score_conditional, score_system, sigma2_conditional, GaussianPrecision,
};
pub use steps::{
    check_state, level_interval, step_dl_hyper, step_latent, step_loadings, step_rescale,
    step_rotate, step_scores, step_sigma, step_thresholds, MhTally,
};
pub use thresholds::{sample_thresholds, threshold_bounds, ThresholdSupport};

use crate::copula::{Entry, PseudoData};
use crate::error::{Result, ScfmError};
use crate::model::{
    standardized_loadings, Chain, ChainMeta, DlMode, Draw, Hyperparams, ModelState, ScaleUpdate,
};
use crate::normal;
use crate::postprocess::khat_one_iteration;
use crate::rngdist::{sample_std_normal, RngStream};

/// Smallest gap enforced between initial thresholds.
const INIT_GAP: f64 = 1e-6;

/// Prior mean of τ, `2·shape` under `Gamma(shape, rate ½)`.
pub fn tau_prior_shape(p: usize, k: usize, alpha: f64, mode: DlMode) -> f64 {
    match mode {
        DlMode::Elementwise => (p * k) as f64 * alpha,
        DlMode::Columnwise => k as f64 * alpha,
    }
}

/// Initial thresholds of gene `j`:
/// `δ_d = Φ⁻¹((#{x ≤ d−1} + ½#{x = d}) / (n+1))`, where level `m+1` stands
/// for the smallest observed value. Unbounded values are replaced from the
/// top down by the next threshold minus one, a gene without zeros starts
/// `δ_1` at least one below its smallest pseudodata value, and gaps are at
/// least `1e-6`.
pub fn init_thresholds(pd: &PseudoData, j: usize) -> Vec<f64> {
    let m = pd.m() as usize;
    let n1 = (pd.n() + 1) as f64;
    let counts = pd.level_counts(j);
    let observed: Vec<f64> = pd
        .gene(j)
        .iter()
        .filter_map(|e| match e {
            Entry::Observed(v) => Some(*v),
            _ => None,
        })
        .collect();
    let min_obs = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let ties_at_min = observed.iter().filter(|&&v| v == min_obs).count();

    let mut below = 0usize;
    let mut delta: Vec<f64> = (0..=m)
        .map(|d| {
            let at = if d < m { counts[d + 1] } else { ties_at_min };
            below += counts[d];
            normal::quantile_unclamped((below as f64 + 0.5 * at as f64) / n1)
        })
        .collect();
    if min_obs.is_finite() {
        delta[m] = delta[m].min(min_obs - INIT_GAP);
        if counts[0] == 0 {
            delta[0] = delta[0].min(min_obs - 1.0);
        }
    }
    for d in (0..m).rev() {
        if delta[d] == f64::NEG_INFINITY {
            delta[d] = delta[d + 1] - 1.0;
        }
        delta[d] = delta[d].min(delta[d + 1] - INIT_GAP);
    }
    delta
}

/// Starting state: `Λ ~ N(0, 0.01)`, `σ² = 1`, `U ~ N(0, 1)`, uniform φ,
/// τ at its prior mean, `ξ = 1`, thresholds from [`init_thresholds`] and
/// latent values at the centre of their intervals (one inside a finite
/// bound when the other side is open).
pub fn init_state(pd: &PseudoData, hp: &Hyperparams, stream: RngStream) -> Result<ModelState> {
    hp.validate()?;
    if pd.m() != hp.m {
        return Err(ScfmError::arg(format!(
            "pseudodata built with m = {}, hyperparameters say m = {}",
            pd.m(),
            hp.m
        )));
    }
    let (n, p, k) = (pd.n(), pd.p(), hp.k_max);
    let mut rng = stream.rng();
    let lambda = DMatrix::from_fn(p, k, |_, _| 0.1 * sample_std_normal(&mut rng));
    let u = DMatrix::from_fn(n, k, |_, _| sample_std_normal(&mut rng));
    let phi = match hp.dl_mode {
        DlMode::Elementwise => DMatrix::from_element(p, k, 1.0 / (p * k) as f64),
        DlMode::Columnwise => DMatrix::from_element(1, k, 1.0 / k as f64),
    };
    let m1 = hp.m as usize + 1;
    let mut delta = DMatrix::zeros(p, m1);
    let mut z = DMatrix::zeros(n, p);
    for j in 0..p {
        let row = init_thresholds(pd, j);
        for (d, v) in row.iter().enumerate() {
            delta[(j, d)] = *v;
        }
        for i in 0..n {
            z[(i, j)] = match pd.get(i, j) {
                Entry::Observed(v) => v,
                Entry::LowCount(d) => {
                    let (lo, hi) = level_interval(&row, d);
                    if lo.is_finite() {
                        0.5 * (lo + hi)
                    } else {
                        hi - 1.0
                    }
                }
            };
        }
    }
    Ok(ModelState {
        lambda,
        sigma2: DVector::from_element(p, 1.0),
        u,
        delta,
        phi,
        tau: 2.0 * tau_prior_shape(p, k, hp.alpha, hp.dl_mode),
        xi: DMatrix::from_element(p, k, 1.0),
        z,
    })
}

/// Acceptance counts per Metropolis-Hastings move.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepTally {
    pub sigma: MhTally,
    pub loadings: MhTally,
    pub rescale: MhTally,
    pub rotation: MhTally,
}

impl SweepTally {
    fn add(&mut self, o: SweepTally) {
        for (a, b) in [
            (&mut self.sigma, o.sigma),
            (&mut self.loadings, o.loadings),
            (&mut self.rescale, o.rescale),
            (&mut self.rotation, o.rotation),
        ] {
            a.accepted += b.accepted;
            a.proposed += b.proposed;
        }
    }

    /// Acceptance rates of the moves that were proposed at least once.
    pub fn rates(&self) -> BTreeMap<String, f64> {
        [
            ("loadings", self.loadings),
            ("sigma2", self.sigma),
            ("rescale", self.rescale),
            ("rotation", self.rotation),
        ]
        .into_iter()
        .filter(|(_, t)| t.proposed > 0)
        .map(|(name, t)| (name.to_string(), t.rate()))
        .collect()
    }
}

fn at_sweep(s: u64) -> impl Fn(ScfmError) -> ScfmError {
    move |e| match e {
        ScfmError::Invariant { msg, .. } => ScfmError::Invariant { sweep: s, msg },
        other => other,
    }
}

/// One full sweep: steps (i)–(v), the rescaling and rotation moves, then
/// step (vi). `s` keys the random streams.
pub fn sweep(
    state: &mut ModelState,
    pd: &PseudoData,
    hp: &Hyperparams,
    support: ThresholdSupport,
    base: &RngStream,
    s: u64,
) -> Result<SweepTally> {
    sweep_steps(state, pd, hp, support, base, s).map_err(at_sweep(s))
}

fn sweep_steps(
    state: &mut ModelState,
    pd: &PseudoData,
    hp: &Hyperparams,
    support: ThresholdSupport,
    base: &RngStream,
    s: u64,
) -> Result<SweepTally> {
    let stream = |step: u64| base.derive_path(&[s, step]);
    let mut t = SweepTally::default();
    step_latent(state, pd, stream(1))?;
    step_thresholds(state, pd, support, stream(2))?;
    t.sigma = step_sigma(state, hp, stream(3))?;
    step_scores(state, stream(4))?;
    t.loadings = step_loadings(state, hp, stream(5))?;
    if hp.scale_update == ScaleUpdate::Exact {
        t.rescale = step_rescale(state, hp, stream(7))?;
    }
    if hp.rotation_moves {
        t.rotation = step_rotate(state, stream(8))?;
    }
    step_dl_hyper(state, hp, stream(6))?;
    check_state(state, pd)?;
    Ok(t)
}

/// Runs one chain for `hp.iterations` sweeps and keeps the thinned
/// post-burn-in draws. `chain_index` selects an independent random stream.
pub fn run_chain(pd: &PseudoData, hp: &Hyperparams, chain_index: usize, gene_names: &[String]) -> Result<Chain> {
    hp.validate()?;
    if gene_names.len() != pd.p() {
        return Err(ScfmError::arg("one gene name per column required"));
    }
    let start = Instant::now();
    let base = RngStream::new(hp.seed, chain_index as u64);
    let mut state = init_state(pd, hp, base.derive(0))?;
    let support = ThresholdSupport::new(hp.threshold_box, pd.n());
    let mut draws = Vec::with_capacity(hp.n_draws());
    let mut khat = Vec::with_capacity(hp.iterations - hp.burn_in);
    let mut scores_sum = DMatrix::zeros(pd.n(), hp.k_max);
    let mut tally = SweepTally::default();

    for s in 1..=hp.iterations {
        tally.add(sweep(&mut state, pd, hp, support, &base, s as u64)?);
        if s > hp.burn_in {
            khat.push(khat_one_iteration(&standardized_loadings(&state.lambda, &state.sigma2)));
        }
        if hp.keeps(s) {
            scores_sum += &state.u;
            draws.push(Draw {
                lambda: state.lambda.clone(),
                sigma2: state.sigma2.clone(),
                delta: state.delta.clone(),
                tau: state.tau,
                scores: hp.save_scores.then(|| state.u.clone()),
            });
        }
        if hp.progress_every > 0 && s % hp.progress_every == 0 {
            log::info!(
                "chain {chain_index}: sweep {s}/{} tau={:.4} khat={}",
                hp.iterations,
                state.tau,
                khat_one_iteration(&standardized_loadings(&state.lambda, &state.sigma2))
            );
        }
    }
    Ok(Chain {
        meta: ChainMeta {
            hyperparams: hp.clone(),
            chain_index,
            n: pd.n(),
            p: pd.p(),
            gene_names: gene_names.to_vec(),
            acceptance: tally.rates(),
        },
        scores_mean: scores_sum / draws.len().max(1) as f64,
        draws,
        khat_per_iter: khat,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
