use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use scfm_core::ingest::{read_csv, read_matrix_market};
use scfm_core::{CountMatrix, GeneAxis};

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Mtx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Rows,
    Cols,
}

/// Where a count matrix comes from and how it is laid out.
#[derive(Clone, Debug, Args)]
pub struct InputArgs {
    /// Count matrix (CSV with cells as rows, or MatrixMarket).
    #[arg(long)]
    pub input: PathBuf,
    /// File format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Whether genes run along the file's rows or columns.
    #[arg(long, value_enum, default_value = "cols")]
    pub genes_are: Axis,
    /// The CSV has no header row of gene names.
    #[arg(long)]
    pub no_header: bool,
}

impl InputArgs {
    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self {
            input: path.into(),
            format: None,
            genes_are: Axis::Cols,
            no_header: false,
        }
    }

    pub fn load(&self) -> Result<CountMatrix> {
        let format = self.format.unwrap_or_else(|| {
            match self.input.extension().and_then(|e| e.to_str()) {
                Some("mtx") => InputFormat::Mtx,
                _ => InputFormat::Csv,
            }
        });
        let axis = match self.genes_are {
            Axis::Rows => GeneAxis::Rows,
            Axis::Cols => GeneAxis::Cols,
        };
        match format {
            InputFormat::Mtx => read_matrix_market(&self.input, axis),
            InputFormat::Csv => {
                let m = read_csv(&self.input, !self.no_header)?;
                match axis {
                    GeneAxis::Cols => Ok(m),
                    GeneAxis::Rows => m.transposed(),
                }
            }
        }
    }

    pub fn file_name(&self) -> String {
        file_name(&self.input)
    }
}

/// Last path component, used when echoing inputs into metadata so that
/// outputs do not depend on where a run happens.
pub fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}
