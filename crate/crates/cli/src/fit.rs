use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;
use rayon::prelude::*;
use scfm_core::postprocess::{mode_smallest, summarize};
use scfm_core::{
    build_pseudodata, run_chain, Chain, DlMode, FitResult, Hyperparams, ScaleUpdate, ScfmError,
    SegmentationScheme,
};
use serde::{Deserialize, Serialize};

use crate::input::InputArgs;
use crate::output::{ensure_dir, factor_header, load_config, write_json, write_labeled};
use crate::Result;

#[derive(Clone, Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config with `chains` and a `model` object; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Independent chains, run in parallel.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Upper bound on the number of factors.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Largest count treated as a latent low-count level.
    #[arg(long)]
    pub m: Option<u32>,
    /// Dirichlet concentration of the shrinkage prior.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Inverse-gamma shape of the noise variances.
    #[arg(long)]
    pub a_sigma: Option<f64>,
    /// Inverse-gamma scale of the noise variances.
    #[arg(long)]
    pub b_sigma: Option<f64>,
    /// Total sweeps per chain, burn-in included.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Keep every this many post-burn-in sweeps.
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `elementwise` or `columnwise` (experimental) shrinkage scales.
    #[arg(long)]
    pub dl_mode: Option<DlMode>,
    /// `exact` (default) or `conjugate` loading and noise updates.
    #[arg(long)]
    pub scale_update: Option<ScaleUpdate>,
    /// Store every retained draw of the scores.
    #[arg(long)]
    pub save_scores: bool,
    /// Leave out the column-rotation move.
    #[arg(long)]
    pub no_rotation: bool,
    /// Confine thresholds to `[-B, B]`.
    #[arg(long)]
    pub threshold_box: Option<f64>,
    /// Log progress every this many sweeps (0 disables).
    #[arg(long)]
    pub progress_every: Option<usize>,
}

impl FitArgs {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            input: InputArgs::csv(input),
            out: out.into(),
            config: None,
            chains: None,
            k_max: None,
            m: None,
            alpha: None,
            a_sigma: None,
            b_sigma: None,
            iterations: None,
            burn_in: None,
            thin: None,
            seed: None,
            dl_mode: None,
            scale_update: None,
            save_scores: false,
            no_rotation: false,
            threshold_box: None,
            progress_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub chains: usize,
    pub model: Hyperparams,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            chains: 1,
            model: Hyperparams::default(),
        }
    }
}

impl FitConfig {
    pub fn resolve(args: &FitArgs) -> Result<Self> {
        let mut c: FitConfig = load_config(args.config.as_deref())?;
        let hp = &mut c.model;
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = args.$f { hp.$f = v; })*};
        }
        set!(k_max, m, alpha, a_sigma, b_sigma, iterations, burn_in, thin, seed, dl_mode, scale_update, progress_every);
        if args.save_scores {
            hp.save_scores = true;
        }
        if args.no_rotation {
            hp.rotation_moves = false;
        }
        if args.threshold_box.is_some() {
            hp.threshold_box = args.threshold_box;
        }
        if let Some(c2) = args.chains {
            c.chains = c2;
        }
        if c.chains == 0 {
            return Err(ScfmError::Argument("at least one chain is required".into()));
        }
        c.model.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct ChainSummary {
    index: usize,
    k_hat: usize,
    draws: usize,
    /// Acceptance rate of each Metropolis move that was proposed.
    acceptance: BTreeMap<String, f64>,
}

fn histogram(values: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h
}

fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|h| h + 1).collect()
}

/// Fits every chain, writes them to `chain_<i>/` and summarizes chain 0:
/// `loadings.csv`, `loadings_std.csv`, `scores.csv`, `noise.csv`,
/// `khat.json`, `summary.json` and `fit_meta.json`.
pub fn cmd_fit(args: &FitArgs) -> Result<FitResult> {
    let cfg = FitConfig::resolve(args)?;
    let hp = &cfg.model;
    let x = args.input.load()?;
    let pd = build_pseudodata(&x, SegmentationScheme::new(hp.m))?;
    let genes = x.gene_names().to_vec();
    log::info!(
        "fitting {} cells × {} genes, k_max = {}, {} chain(s)",
        x.n_cells(),
        x.n_genes(),
        hp.k_max,
        cfg.chains
    );

    let chains: Vec<Chain> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&pd, hp, c, &genes))
        .collect::<Result<_>>()?;

    let out = &args.out;
    ensure_dir(out)?;
    for c in &chains {
        c.write_dir(out.join(format!("chain_{}", c.meta.chain_index)))?;
    }
    let summaries: Vec<ChainSummary> = chains
        .iter()
        .map(|c| {
            Ok(ChainSummary {
                index: c.meta.chain_index,
                k_hat: scfm_core::estimate_k(c)?,
                draws: c.draws.len(),
                acceptance: c.meta.acceptance.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let pooled: Vec<usize> = chains.iter().flat_map(|c| c.khat_per_iter.iter().copied()).collect();
    let pooled_k = mode_smallest(&pooled)
        .ok_or_else(|| ScfmError::Argument("no post-burn-in sweeps".into()))?;

    let fit = summarize(&chains[0])?;
    let header = factor_header(hp.k_max);
    write_labeled(&out.join("loadings.csv"), "gene", &genes, &header, &fit.lambda_mean)?;
    write_labeled(&out.join("loadings_std.csv"), "gene", &genes, &header, &fit.lambda_std_mean)?;
    write_labeled(&out.join("scores.csv"), "cell", x.cell_names(), &header, &fit.scores_mean)?;
    let m1 = fit.delta_mean.ncols();
    let noise = DMatrix::from_fn(x.n_genes(), 2 + m1, |j, c| match c {
        0 => fit.sigma2_mean[j],
        1 => fit.psi_mean[j],
        d => fit.delta_mean[(j, d - 2)],
    });
    let mut noise_header = vec!["sigma2".to_string(), "psi".to_string()];
    noise_header.extend((1..=m1).map(|d| format!("delta_{d}")));
    write_labeled(&out.join("noise.csv"), "gene", &genes, &noise_header, &noise)?;

    if !fit.unstable_columns.is_empty() {
        log::warn!(
            "factors {:?} change sign often between draws; their posterior means may be unreliable",
            one_based(&fit.unstable_columns)
        );
    }
    write_json(
        &out.join("khat.json"),
        &serde_json::json!({
            "k_hat": fit.k_hat,
            "significant_factors": one_based(&fit.significant_factor_indices),
            "unstable_factors": one_based(&fit.unstable_columns),
            "histogram": histogram(&chains[0].khat_per_iter),
        }),
    )?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "pooled_k_hat": pooled_k,
            "pooled_histogram": histogram(&pooled),
            "chains": summaries,
        }),
    )?;
    write_json(
        &out.join("fit_meta.json"),
        &serde_json::json!({
            "config": cfg,
            "input": args.input.file_name(),
            "cells": x.n_cells(),
            "genes": x.n_genes(),
            "summary_chain": 0,
            "files": ["loadings.csv", "loadings_std.csv", "scores.csv", "noise.csv", "khat.json", "summary.json"],
        }),
    )?;
    log::info!("k̂ = {} (pooled over chains: {pooled_k})", fit.k_hat);
    Ok(fit)
}
