use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use scfm_core::ingest::{write_labeled_table, write_table};
use scfm_core::ScfmError;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::Result;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScfmError + '_ {
    move |source| ScfmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// A config file, or the type's defaults when none is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p).map_err(|e| match e {
            ScfmError::Json(j) => ScfmError::Argument(format!("config {}: {j}", p.display())),
            other => other,
        }),
        None => Ok(T::default()),
    }
}

pub fn write_matrix(path: &Path, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    write_table(create(path)?, header, values)
}

pub fn write_labeled(
    path: &Path,
    label: &str,
    labels: &[String],
    header: &[String],
    values: &DMatrix<f64>,
) -> Result<()> {
    write_labeled_table(create(path)?, label, labels, header, values)
}

/// `f1..fk`
pub fn factor_header(k: usize) -> Vec<String> {
    (1..=k).map(|h| format!("f{h}")).collect()
}
