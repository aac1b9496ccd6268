use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use scfm_core::ingest::{genes_within_zero_fraction, top_variable_gene_indices, write_csv};
use scfm_core::{ScfmError, VarianceScale};

use crate::input::InputArgs;
use crate::output::{ensure_dir, write_json, write_labeled};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variance {
    Raw,
    Log1p,
}

#[derive(Clone, Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop genes with a larger share of zeros.
    #[arg(long)]
    pub max_zero_frac: Option<f64>,
    /// Keep this many of the most variable remaining genes.
    #[arg(long)]
    pub top_genes: Option<usize>,
    /// Scale on which variances are ranked.
    #[arg(long, value_enum, default_value = "raw")]
    pub variance: Variance,
}

/// Writes `matrix.csv`, `kept_genes.csv` (name and 1-based original column)
/// and `select_meta.json`.
pub fn cmd_select_genes(args: &SelectArgs) -> Result<()> {
    let m = args.input.load()?;
    let mut keep: Vec<usize> = (0..m.n_genes()).collect();
    if let Some(f) = args.max_zero_frac {
        if !(0.0..=1.0).contains(&f) {
            return Err(ScfmError::Argument(format!("max zero fraction {f} is outside [0, 1]")));
        }
        keep = genes_within_zero_fraction(&m, f);
    }
    let scale = match args.variance {
        Variance::Raw => VarianceScale::Raw,
        Variance::Log1p => VarianceScale::Log1p,
    };
    if let Some(top) = args.top_genes {
        let filtered = m.select_genes(&keep);
        let order = top_variable_gene_indices(&filtered, top, scale)?;
        keep = order.into_iter().map(|j| keep[j]).collect();
    }
    if keep.is_empty() {
        return Err(ScfmError::Data("no genes left after filtering".into()));
    }
    let out = m.select_genes(&keep);

    ensure_dir(&args.out)?;
    let path = args.out.join("matrix.csv");
    let file = std::fs::File::create(&path).map_err(|source| ScfmError::Io { path, source })?;
    write_csv(&out, std::io::BufWriter::new(file))?;
    let idx = DMatrix::from_iterator(keep.len(), 1, keep.iter().map(|&j| (j + 1) as f64));
    write_labeled(
        &args.out.join("kept_genes.csv"),
        "gene",
        out.gene_names(),
        &["column".to_string()],
        &idx,
    )?;
    write_json(
        &args.out.join("select_meta.json"),
        &serde_json::json!({
            "input": args.input.file_name(),
            "genes_in": m.n_genes(),
            "genes_out": out.n_genes(),
            "cells": m.n_cells(),
            "max_zero_frac": args.max_zero_frac,
            "top_genes": args.top_genes,
            "variance": scale,
        }),
    )?;
    log::info!("kept {} of {} genes", out.n_genes(), m.n_genes());
    Ok(())
}
