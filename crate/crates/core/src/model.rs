//! Parameter containers, the Ψ/Ω algebra and stored chains.
//!
//! The factor model lives on the working scale `W = Ψ^{1/2} z`, where
//! `W_i = Λu_i + ε_i`, `ε_i ~ N(0, Σ)` and `Ψ = diag(ΛΛᵀ + Σ)`. The copula
//! sees `z` with correlation `Ω = Ψ^{-1/2}(ΛΛᵀ + Σ)Ψ^{-1/2}`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfmError};
use crate::ingest::{read_table, write_table};

/// Largest supported number of latent factors.
pub const MAX_FACTORS: usize = 64;

/// How the Dirichlet-Laplace local scales are shared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DlMode {
    /// One `φ_jh` per loading.
    #[default]
    Elementwise,
    /// One `φ_h` per factor column (experimental).
    Columnwise,
}

impl FromStr for DlMode {
    type Err = ScfmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elementwise" => Ok(DlMode::Elementwise),
            "columnwise" => Ok(DlMode::Columnwise),
            _ => Err(ScfmError::arg(format!(
                "dl mode must be `elementwise` or `columnwise`, got `{s}`"
            ))),
        }
    }
}

/// How loadings and noise variances are updated given the latent `z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleUpdate {
    /// Conjugate draws proposed at the current Ψ, corrected by a
    /// Metropolis-Hastings step, plus a per-gene rescaling move. Leaves the
    /// posterior exactly invariant.
    #[default]
    Exact,
    /// Plain conjugate draws treating `W = Ψ^{1/2}z` as fixed data.
    Conjugate,
}

impl FromStr for ScaleUpdate {
    type Err = ScfmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ScaleUpdate::Exact),
            "conjugate" => Ok(ScaleUpdate::Conjugate),
            _ => Err(ScfmError::arg(format!(
                "scale update must be `exact` or `conjugate`, got `{s}`"
            ))),
        }
    }
}

/// Prior and run settings for one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub k_max: usize,
    pub m: u32,
    pub alpha: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub dl_mode: DlMode,
    pub scale_update: ScaleUpdate,
    /// Store every retained score matrix, not just their running mean.
    pub save_scores: bool,
    /// Add the column-rotation move to every sweep.
    pub rotation_moves: bool,
    /// Restricts thresholds to `[-B, B]` under an ordered-uniform prior.
    /// Without it the threshold prior is flat.
    pub threshold_box: Option<f64>,
    /// Log progress every this many sweeps; 0 disables.
    pub progress_every: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k_max: 8,
            m: 1,
            alpha: 0.5,
            a_sigma: 0.1,
            b_sigma: 0.1,
            iterations: 10_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            dl_mode: DlMode::Elementwise,
            scale_update: ScaleUpdate::Exact,
            save_scores: false,
            rotation_moves: true,
            threshold_box: None,
            progress_every: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ScfmError::arg(format!("{name} must be positive, got {v}")))
            }
        };
        if self.k_max == 0 || self.k_max > MAX_FACTORS {
            return Err(ScfmError::arg(format!(
                "k_max must lie in 1..={MAX_FACTORS}, got {}",
                self.k_max
            )));
        }
        positive("alpha", self.alpha)?;
        positive("a_sigma", self.a_sigma)?;
        positive("b_sigma", self.b_sigma)?;
        if let Some(b) = self.threshold_box {
            positive("threshold_box", b)?;
        }
        if self.iterations == 0 {
            return Err(ScfmError::arg("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(ScfmError::arg(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(ScfmError::arg("thin must be at least 1"));
        }
        Ok(())
    }

    /// Number of stored draws, `⌊(iterations − burn_in)/thin⌋`.
    pub fn n_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether sweep `s` (1-based) is stored.
    pub fn keeps(&self, s: usize) -> bool {
        s > self.burn_in && (s - self.burn_in) % self.thin == 0
    }
}

/// One state of the Gibbs chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// p × k loadings on the working scale.
    pub lambda: DMatrix<f64>,
    pub sigma2: DVector<f64>,
    /// n × k factor scores.
    pub u: DMatrix<f64>,
    /// p × (m+1) thresholds `δ_1..δ_{m+1}` on the copula scale.
    pub delta: DMatrix<f64>,
    /// Local scales: p × k (elementwise) or 1 × k (columnwise).
    pub phi: DMatrix<f64>,
    pub tau: f64,
    /// p × k auxiliary exponential scales.
    pub xi: DMatrix<f64>,
    /// n × p latent values on the copula scale. Entries for observed
    /// counts hold their pseudodata.
    pub z: DMatrix<f64>,
}

impl ModelState {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn k(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn psi(&self) -> DVector<f64> {
        compute_psi(&self.lambda, &self.sigma2)
    }

    /// Local scale for loading `(j, h)` under either sharing mode.
    pub fn phi_at(&self, j: usize, h: usize) -> f64 {
        if self.phi.nrows() == 1 {
            self.phi[(0, h)]
        } else {
            self.phi[(j, h)]
        }
    }

    /// Working-scale latent matrix `W = z Ψ^{1/2}` (n × p).
    pub fn working(&self) -> DMatrix<f64> {
        let mut w = self.z.clone();
        for (j, psi) in self.psi().iter().enumerate() {
            w.column_mut(j).scale_mut(psi.sqrt());
        }
        w
    }

    /// Prior variance of `λ_jh` given the shrinkage scales.
    pub fn loading_prior_var(&self, j: usize, h: usize) -> f64 {
        let phi = self.phi_at(j, h);
        (self.xi[(j, h)] * self.tau * self.tau * phi * phi).max(LOADING_VAR_FLOOR)
    }
}

/// Floor on `ξτ²φ²`, keeping the prior precision finite.
pub const LOADING_VAR_FLOOR: f64 = 1e-300;

/// `ψ_j = Σ_h λ_jh² + σ_j²`.
pub fn compute_psi(lambda: &DMatrix<f64>, sigma2: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        lambda.nrows(),
        lambda
            .row_iter()
            .zip(sigma2.iter())
            .map(|(row, s)| row.norm_squared() + s),
    )
}

/// `Ω = Ψ^{-1/2}(ΛΛᵀ + Σ)Ψ^{-1/2}` with the diagonal set to exactly one.
pub fn compute_correlation(lambda: &DMatrix<f64>, sigma2: &DVector<f64>) -> DMatrix<f64> {
    let psi = compute_psi(lambda, sigma2);
    let scale = psi.map(|v| 1.0 / v.sqrt());
    let mut omega = lambda * lambda.transpose();
    let p = omega.nrows();
    for a in 0..p {
        for b in 0..p {
            omega[(a, b)] *= scale[a] * scale[b];
        }
        omega[(a, a)] = 1.0;
    }
    omega
}

/// Loadings on the correlation scale, `Ψ^{-1/2}Λ`.
pub fn standardized_loadings(lambda: &DMatrix<f64>, sigma2: &DVector<f64>) -> DMatrix<f64> {
    let psi = compute_psi(lambda, sigma2);
    let mut out = lambda.clone();
    for (j, v) in psi.iter().enumerate() {
        out.row_mut(j).scale_mut(1.0 / v.sqrt());
    }
    out
}

/// One retained snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub lambda: DMatrix<f64>,
    pub sigma2: DVector<f64>,
    pub delta: DMatrix<f64>,
    pub tau: f64,
    pub scores: Option<DMatrix<f64>>,
}

/// Run description stored next to the draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub hyperparams: Hyperparams,
    pub chain_index: usize,
    pub n: usize,
    pub p: usize,
    pub gene_names: Vec<String>,
    /// Fraction of accepted Metropolis-Hastings proposals per move type.
    #[serde(default)]
    pub acceptance: BTreeMap<String, f64>,
}

/// Retained draws of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub meta: ChainMeta,
    pub draws: Vec<Draw>,
    /// k̂ for every post-burn-in sweep.
    pub khat_per_iter: Vec<usize>,
    /// Running mean of the scores over retained draws (n × k).
    pub scores_mean: DMatrix<f64>,
    pub elapsed_secs: f64,
}

fn header(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| format!("{prefix}_{}_{}", r + 1, c + 1)))
        .collect()
}

fn write_csv_file(path: &Path, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| ScfmError::io(path, e))?;
    write_table(BufWriter::new(file), header, values)
}

/// Stacks row-major flattenings of equally shaped matrices, one per row.
fn stack<'a>(mats: impl ExactSizeIterator<Item = &'a DMatrix<f64>>, r: usize, c: usize) -> DMatrix<f64> {
    let n = mats.len();
    let mut out = DMatrix::zeros(n, r * c);
    for (d, m) in mats.enumerate() {
        for a in 0..r {
            for b in 0..c {
                out[(d, a * c + b)] = m[(a, b)];
            }
        }
    }
    out
}

fn unstack(row: nalgebra::DMatrixView<f64>, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |a, b| row[(0, a * c + b)])
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(ScfmError::data(format!(
            "{name}: expected {rows}×{cols}, found {}×{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

impl Chain {
    /// Writes `meta.json`, one CSV per stored quantity (rows are draws) and
    /// `timing.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| ScfmError::io(dir, e))?;
        let hp = &self.meta.hyperparams;
        let (n, p, k, m1) = (self.meta.n, self.meta.p, hp.k_max, hp.m as usize + 1);

        write_json(&dir.join("meta.json"), &self.meta)?;
        write_json(
            &dir.join("timing.json"),
            &serde_json::json!({ "elapsed_secs": self.elapsed_secs }),
        )?;
        write_csv_file(
            &dir.join("lambda.csv"),
            &header("lambda", p, k),
            &stack(self.draws.iter().map(|d| &d.lambda), p, k),
        )?;
        let sig: Vec<DMatrix<f64>> = self
            .draws
            .iter()
            .map(|d| DMatrix::from_row_slice(1, p, d.sigma2.as_slice()))
            .collect();
        write_csv_file(&dir.join("sigma2.csv"), &header("sigma2", 1, p), &stack(sig.iter(), 1, p))?;
        write_csv_file(
            &dir.join("delta.csv"),
            &header("delta", p, m1),
            &stack(self.draws.iter().map(|d| &d.delta), p, m1),
        )?;
        let tau = DMatrix::from_iterator(self.draws.len(), 1, self.draws.iter().map(|d| d.tau));
        write_csv_file(&dir.join("tau.csv"), &["tau".to_string()], &tau)?;
        let khat = DMatrix::from_iterator(
            self.khat_per_iter.len(),
            1,
            self.khat_per_iter.iter().map(|&v| v as f64),
        );
        write_csv_file(&dir.join("khat.csv"), &["khat".to_string()], &khat)?;
        write_csv_file(&dir.join("scores_mean.csv"), &header("u", 1, k), &self.scores_mean)?;
        if self.draws.first().is_some_and(|d| d.scores.is_some()) {
            let scores: Vec<&DMatrix<f64>> =
                self.draws.iter().filter_map(|d| d.scores.as_ref()).collect();
            write_csv_file(&dir.join("scores.csv"), &header("u", n, k), &stack(scores.into_iter(), n, k))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Chain> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(ScfmError::data(format!(
                "chain directory {} does not exist",
                dir.display()
            )));
        }
        let meta: ChainMeta = read_json(&dir.join("meta.json"))?;
        let hp = &meta.hyperparams;
        let (n, p, k, m1) = (meta.n, meta.p, hp.k_max, hp.m as usize + 1);
        let (_, lambda) = read_table(dir.join("lambda.csv"))?;
        let draws_n = lambda.nrows();
        check_shape("lambda.csv", &lambda, draws_n, p * k)?;
        let (_, sigma2) = read_table(dir.join("sigma2.csv"))?;
        check_shape("sigma2.csv", &sigma2, draws_n, p)?;
        let (_, delta) = read_table(dir.join("delta.csv"))?;
        check_shape("delta.csv", &delta, draws_n, p * m1)?;
        let (_, tau) = read_table(dir.join("tau.csv"))?;
        check_shape("tau.csv", &tau, draws_n, 1)?;
        let (_, khat) = read_table(dir.join("khat.csv"))?;
        let (_, scores_mean) = read_table(dir.join("scores_mean.csv"))?;
        check_shape("scores_mean.csv", &scores_mean, n, k)?;
        let scores_path = dir.join("scores.csv");
        let scores = if scores_path.exists() {
            let (_, s) = read_table(&scores_path)?;
            check_shape("scores.csv", &s, draws_n, n * k)?;
            Some(s)
        } else {
            None
        };
        let elapsed_secs = read_json::<serde_json::Value>(&dir.join("timing.json"))
            .ok()
            .and_then(|v| v["elapsed_secs"].as_f64())
            .unwrap_or(0.0);

        let draws = (0..draws_n)
            .map(|d| Draw {
                lambda: unstack(lambda.rows(d, 1), p, k),
                sigma2: DVector::from_iterator(p, sigma2.row(d).iter().copied()),
                delta: unstack(delta.rows(d, 1), p, m1),
                tau: tau[(d, 0)],
                scores: scores.as_ref().map(|s| unstack(s.rows(d, 1), n, k)),
            })
            .collect();
        Ok(Chain {
            meta,
            draws,
            khat_per_iter: khat.iter().map(|&v| v as usize).collect(),
            scores_mean,
            elapsed_secs,
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| ScfmError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| ScfmError::io(path, e))?;
    w.flush().map_err(|e| ScfmError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ScfmError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
