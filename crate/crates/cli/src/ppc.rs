use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;
use scfm_core::copula::EmpiricalCdf;
use scfm_core::postprocess::{ks_distance, median, ppc_replicates, qq_table};
use scfm_core::{Chain, RngStream, ScfmError};
use serde::{Deserialize, Serialize};

use crate::input::{file_name, InputArgs};
use crate::output::{ensure_dir, write_json, write_matrix};
use crate::Result;

/// Child stream of a chain reserved for predictive draws.
const PPC_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, Args)]
pub struct PpcArgs {
    /// Chain directory written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    /// The data the chain was fitted to.
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Quantiles per Q-Q table.
    #[arg(long, default_value_t = 99)]
    pub quantiles: usize,
    /// Predictive replicates per stored draw.
    #[arg(long, default_value_t = 1)]
    pub per_draw: usize,
    /// Defaults to the chain's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl PpcArgs {
    pub fn new(chain: impl Into<PathBuf>, input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            chain: chain.into(),
            input: InputArgs::csv(input),
            out: out.into(),
            quantiles: 99,
            per_draw: 1,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneKs {
    pub gene: String,
    pub file: String,
    /// KS distance between the observed and predictive quantile sets.
    pub ks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpcSummary {
    pub chain: String,
    pub input: String,
    pub seed: u64,
    pub draws: usize,
    pub replicates: usize,
    pub quantiles: usize,
    pub genes: Vec<GeneKs>,
    pub median_ks: f64,
}

fn safe_name(gene: &str) -> String {
    gene.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// One predictive replicate per stored draw (times `per_draw`), written as
/// `qq_gene_<name>.csv` per gene plus `ppc_summary.json`.
pub fn cmd_ppc(args: &PpcArgs) -> Result<PpcSummary> {
    if args.per_draw == 0 {
        return Err(ScfmError::Argument("at least one replicate per draw is required".into()));
    }
    let chain = Chain::read_dir(&args.chain)?;
    let x = args.input.load()?;
    if x.n_genes() != chain.meta.p || x.gene_names() != chain.meta.gene_names.as_slice() {
        return Err(ScfmError::Data(format!(
            "data genes do not match the {} genes of the chain",
            chain.meta.p
        )));
    }
    let seed = args.seed.unwrap_or(chain.meta.hyperparams.seed);
    let cdfs: Vec<EmpiricalCdf> = (0..x.n_genes())
        .map(|j| EmpiricalCdf::fit(x.values().column(j).as_slice()))
        .collect::<Result<_>>()?;
    let stream = RngStream::new(seed, chain.meta.chain_index as u64).derive(PPC_STREAM);
    let pred = ppc_replicates(&chain.draws, &cdfs, chain.meta.hyperparams.m, args.per_draw, stream)?;

    ensure_dir(&args.out)?;
    let header = ["observed".to_string(), "predictive".to_string()];
    let mut genes = Vec::with_capacity(x.n_genes());
    for (j, name) in x.gene_names().iter().enumerate() {
        let observed = x.values().column(j);
        let predictive = pred.column(j);
        let qq = qq_table(observed.as_slice(), predictive.as_slice(), args.quantiles)?;
        let (qo, qp): (Vec<f64>, Vec<f64>) = qq.iter().copied().unzip();
        let table = DMatrix::from_fn(qq.len(), 2, |r, c| if c == 0 { qo[r] } else { qp[r] });
        let file = format!("qq_gene_{}.csv", safe_name(name));
        write_matrix(&args.out.join(&file), &header, &table)?;
        genes.push(GeneKs {
            gene: name.clone(),
            file,
            ks: ks_distance(&qo, &qp),
        });
    }
    let ks: Vec<f64> = genes.iter().map(|g| g.ks).collect();
    let summary = PpcSummary {
        chain: file_name(&args.chain),
        input: args.input.file_name(),
        seed,
        draws: chain.draws.len(),
        replicates: pred.nrows(),
        quantiles: args.quantiles,
        median_ks: median(&ks),
        genes,
    };
    write_json(&args.out.join("ppc_summary.json"), &summary)?;
    log::info!("median per-gene KS distance {:.4}", summary.median_ks);
    Ok(summary)
}
