use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;
use scfm_core::copula::EmpiricalCdf;
use scfm_core::ingest::{read_csv, write_csv};
use scfm_core::{gen_data, gen_truth, synthetic_marginals, MarginalSpec, RngStream, ScfmError};
use serde::{Deserialize, Serialize};

use crate::input::file_name;
use crate::output::{ensure_dir, factor_header, load_config, write_json, write_labeled};
use crate::Result;

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of cells.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of genes.
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of true factors.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Range of per-gene zero fractions, as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub zero_frac: Option<Vec<f64>>,
    /// Range of per-gene one fractions, as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub one_frac: Option<Vec<f64>>,
    /// Log-scale spread of the count tail.
    #[arg(long)]
    pub tail_shape: Option<f64>,
    /// Size of each synthetic reference sample.
    #[arg(long)]
    pub marginal_size: Option<usize>,
    /// Count CSV whose first `p` genes supply the marginals instead of the
    /// synthetic ones.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            config: None,
            n: None,
            p: None,
            k: None,
            seed: None,
            zero_frac: None,
            one_frac: None,
            tail_shape: None,
            marginal_size: None,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub seed: u64,
    pub marginals: MarginalSpec,
    pub reference: Option<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p: 25,
            k: 4,
            seed: 0,
            marginals: MarginalSpec::default(),
            reference: None,
        }
    }
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

impl SimulateConfig {
    pub fn resolve(args: &SimulateArgs) -> Result<Self> {
        let mut c: SimulateConfig = load_config(args.config.as_deref())?;
        if let Some(v) = args.n {
            c.n = v;
        }
        if let Some(v) = args.p {
            c.p = v;
        }
        if let Some(v) = args.k {
            c.k = v;
        }
        if let Some(v) = args.seed {
            c.seed = v;
        }
        if let Some(v) = &args.zero_frac {
            c.marginals.zero_frac = pair(v);
        }
        if let Some(v) = &args.one_frac {
            c.marginals.one_frac = pair(v);
        }
        if let Some(v) = args.tail_shape {
            c.marginals.tail_shape = v;
        }
        if let Some(v) = args.marginal_size {
            c.marginals.sample_size = v;
        }
        if let Some(r) = &args.reference {
            c.reference = Some(file_name(r));
        }
        if c.n < 3 || c.p == 0 || c.k == 0 {
            return Err(ScfmError::Argument("need n ≥ 3, p ≥ 1 and k ≥ 1".into()));
        }
        c.marginals.validate()?;
        Ok(c)
    }
}

fn reference_marginals(path: &std::path::Path, p: usize) -> Result<Vec<EmpiricalCdf>> {
    let m = read_csv(path, true)?;
    if m.n_genes() < p {
        return Err(ScfmError::Argument(format!(
            "reference has {} genes, {p} requested",
            m.n_genes()
        )));
    }
    (0..p)
        .map(|j| EmpiricalCdf::fit(m.values().column(j).as_slice()))
        .collect()
}

/// Writes `X.csv`, `U_true.csv`, `Lambda_true.csv`, `sigma2_true.csv` and
/// `truth_meta.json`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = SimulateConfig::resolve(args)?;
    let base = RngStream::new(cfg.seed, 0);
    let marginals = match &args.reference {
        Some(path) => reference_marginals(path, cfg.p)?,
        None => synthetic_marginals(cfg.p, &cfg.marginals, &mut base.derive(0).rng())?,
    };
    let truth = gen_truth(cfg.n, cfg.p, cfg.k, marginals, &mut base.derive(1).rng())?;
    let x = gen_data(&truth, &mut base.derive(2).rng())?;

    let out = &args.out;
    ensure_dir(out)?;
    let file = std::fs::File::create(out.join("X.csv")).map_err(|source| ScfmError::Io {
        path: out.join("X.csv"),
        source,
    })?;
    write_csv(&x, std::io::BufWriter::new(file))?;
    let header = factor_header(cfg.k);
    write_labeled(&out.join("U_true.csv"), "cell", x.cell_names(), &header, &truth.u)?;
    write_labeled(&out.join("Lambda_true.csv"), "gene", x.gene_names(), &header, &truth.lambda)?;
    let sigma2 = DMatrix::from_column_slice(cfg.p, 1, truth.sigma2.as_slice());
    write_labeled(
        &out.join("sigma2_true.csv"),
        "gene",
        x.gene_names(),
        &["sigma2".to_string()],
        &sigma2,
    )?;
    write_json(
        &out.join("truth_meta.json"),
        &serde_json::json!({
            "config": cfg,
            "files": ["X.csv", "U_true.csv", "Lambda_true.csv", "sigma2_true.csv"],
        }),
    )?;
    log::info!("simulated {} cells × {} genes with {} factors", cfg.n, cfg.p, cfg.k);
    Ok(())
}
