use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::DMatrix;
use scfm_core::ingest::read_labeled_table;
use scfm_core::model::standardized_loadings;
use scfm_core::postprocess::select_columns;
use scfm_core::{distance_spearman, ScfmError};
use serde::{Deserialize, Serialize};

use crate::input::file_name;
use crate::output::{read_json, write_json};
use crate::Result;

#[derive(Clone, Debug, Args)]
pub struct EvaluateArgs {
    /// Simulation output directory; pair each with a `--fit`.
    #[arg(long, required = true)]
    pub truth: Vec<PathBuf>,
    /// Fit output directory.
    #[arg(long, required = true)]
    pub fit: Vec<PathBuf>,
    /// Metrics JSON path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub truth: String,
    pub fit: String,
    pub k_hat: usize,
    pub scores_spearman: f64,
    pub loadings_spearman: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean; absent for a single run.
    pub se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub runs: Vec<RunMetrics>,
    pub scores: Summary,
    pub loadings: Summary,
}

#[derive(Deserialize)]
struct KhatFile {
    k_hat: usize,
    significant_factors: Vec<usize>,
}

fn summary(x: &[f64]) -> Summary {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let se = (x.len() > 1).then(|| {
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Summary { mean, se }
}

fn table(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read_labeled_table(path)?.2)
}

fn evaluate_one(truth: &Path, fit: &Path) -> Result<RunMetrics> {
    let u_true = table(&truth.join("U_true.csv"))?;
    let lambda_true = table(&truth.join("Lambda_true.csv"))?;
    let sigma2_true = table(&truth.join("sigma2_true.csv"))?;
    if sigma2_true.ncols() != 1 || sigma2_true.nrows() != lambda_true.nrows() {
        return Err(ScfmError::Data(format!(
            "{}: noise variances do not match the loadings",
            truth.display()
        )));
    }
    let lambda_true_std = standardized_loadings(&lambda_true, &sigma2_true.column(0).into_owned());

    let khat: KhatFile = read_json(&fit.join("khat.json"))?;
    let scores = table(&fit.join("scores.csv"))?;
    let loadings = table(&fit.join("loadings_std.csv"))?;
    let k = scores.ncols().min(loadings.ncols());
    let idx: Vec<usize> = khat.significant_factors.iter().map(|h| h.wrapping_sub(1)).collect();
    if idx.is_empty() || idx.iter().any(|&h| h >= k) {
        return Err(ScfmError::Data(format!(
            "{}: significant factors {:?} do not fit {k} columns",
            fit.display(),
            khat.significant_factors
        )));
    }
    let check_rows = |what: &str, a: usize, b: usize| {
        if a == b {
            Ok(())
        } else {
            Err(ScfmError::Argument(format!("{what}: truth has {b} rows, fit has {a}")))
        }
    };
    check_rows("scores", scores.nrows(), u_true.nrows())?;
    check_rows("loadings", loadings.nrows(), lambda_true.nrows())?;
    Ok(RunMetrics {
        truth: file_name(truth),
        fit: file_name(fit),
        k_hat: khat.k_hat,
        scores_spearman: distance_spearman(&select_columns(&scores, &idx), &u_true)?,
        loadings_spearman: distance_spearman(&select_columns(&loadings, &idx), &lambda_true_std)?,
    })
}

/// Distance-Spearman of the selected factor scores against the true scores
/// and of the selected correlation-scale loadings against the true ones,
/// per run and averaged.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Metrics> {
    if args.truth.len() != args.fit.len() {
        return Err(ScfmError::Argument(format!(
            "{} truth directories for {} fits",
            args.truth.len(),
            args.fit.len()
        )));
    }
    let runs: Vec<RunMetrics> = args
        .truth
        .iter()
        .zip(&args.fit)
        .map(|(t, f)| evaluate_one(t, f))
        .collect::<Result<_>>()?;
    let s: Vec<f64> = runs.iter().map(|r| r.scores_spearman).collect();
    let l: Vec<f64> = runs.iter().map(|r| r.loadings_spearman).collect();
    let metrics = Metrics {
        scores: summary(&s),
        loadings: summary(&l),
        runs,
    };
    match &args.out {
        Some(path) => write_json(path, &metrics)?,
        None => println!("{}", serde_json::to_string_pretty(&metrics)?),
    }
    Ok(metrics)
}
