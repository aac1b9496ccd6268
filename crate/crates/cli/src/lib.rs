//! Command-line front end: simulate, select genes, fit, evaluate and run
//! posterior predictive checks.
//!
//! Every `cmd_*` function takes its parsed arguments and writes its outputs
//! to disk, so tests can drive the pipeline without spawning processes.

use clap::{Parser, Subcommand};
use scfm_core::ScfmError;

mod evaluate;
mod fit;
mod input;
mod output;
mod ppc;
mod select;
mod simulate;

pub use evaluate::{cmd_evaluate, EvaluateArgs, Metrics, RunMetrics, Summary};
pub use fit::{cmd_fit, FitArgs, FitConfig};
pub use input::{InputArgs, InputFormat};
pub use ppc::{cmd_ppc, PpcArgs, PpcSummary};
pub use select::{cmd_select_genes, SelectArgs, Variance};
pub use simulate::{cmd_simulate, SimulateArgs, SimulateConfig};

pub type Result<T> = scfm_core::Result<T>;

#[derive(Debug, Parser)]
#[command(name = "scfm", version, about = "Segmented Gaussian copula factor model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset with a known factor structure.
    Simulate(SimulateArgs),
    /// Drop sparse genes and keep the most variable ones.
    SelectGenes(SelectArgs),
    /// Fit the model by Gibbs sampling.
    Fit(FitArgs),
    /// Compare fits against simulation truth.
    Evaluate(EvaluateArgs),
    /// Posterior predictive Q-Q tables for a fitted chain.
    Ppc(PpcArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::SelectGenes(a) => cmd_select_genes(&a),
        Command::Fit(a) => cmd_fit(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Ppc(a) => cmd_ppc(&a).map(|_| ()),
    }
}

/// 2 for bad arguments, 3 for unreadable or unsuitable data, 4 for
/// numerical failures.
pub fn exit_code(e: &ScfmError) -> i32 {
    match e {
        ScfmError::Argument(_) => 2,
        ScfmError::Parse { .. } | ScfmError::Data(_) | ScfmError::Io { .. } | ScfmError::Json(_) => 3,
        ScfmError::Invariant { .. } | ScfmError::Undefined(_) => 4,
    }
}
