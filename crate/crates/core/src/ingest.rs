//! Count-matrix loading and gene selection.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScfmError};

/// A dense cells × genes matrix of nonnegative values.
///
/// Rows are cells (observations), columns are genes (variables).
#[derive(Clone, Debug, PartialEq)]
pub struct CountMatrix {
    values: DMatrix<f64>,
    gene_names: Vec<String>,
    cell_names: Vec<String>,
}

impl CountMatrix {
    /// Builds a matrix, checking that every entry is finite and nonnegative
    /// and that there are at least two cells.
    pub fn new(
        values: DMatrix<f64>,
        gene_names: Vec<String>,
        cell_names: Vec<String>,
    ) -> Result<Self> {
        if gene_names.len() != values.ncols() {
            return Err(ScfmError::arg(format!(
                "{} gene names for {} columns",
                gene_names.len(),
                values.ncols()
            )));
        }
        if cell_names.len() != values.nrows() {
            return Err(ScfmError::arg(format!(
                "{} cell names for {} rows",
                cell_names.len(),
                values.nrows()
            )));
        }
        if values.nrows() < 2 {
            return Err(ScfmError::data(format!(
                "need at least 2 cells, got {}",
                values.nrows()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(ScfmError::data(format!(
                "entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self {
            values,
            gene_names,
            cell_names,
        })
    }

    /// Builds a matrix with generated names `c1..cn` and `g1..gp`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let genes = default_names("g", values.ncols());
        let cells = default_names("c", values.nrows());
        Self::new(values, genes, cells)
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn cell_names(&self) -> &[String] {
        &self.cell_names
    }

    /// Keeps the given gene columns, in the given order.
    pub fn select_genes(&self, indices: &[usize]) -> CountMatrix {
        let values = self.values.select_columns(indices);
        let gene_names = indices.iter().map(|&j| self.gene_names[j].clone()).collect();
        CountMatrix {
            values,
            gene_names,
            cell_names: self.cell_names.clone(),
        }
    }

    /// Swaps the roles of rows and columns (genes become cells).
    pub fn transposed(&self) -> Result<CountMatrix> {
        CountMatrix::new(
            self.values.transpose(),
            self.cell_names.clone(),
            self.gene_names.clone(),
        )
    }
}

fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Orientation of a MatrixMarket file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneAxis {
    /// File rows are genes, columns are cells (the 10x Genomics layout).
    Rows,
    /// File rows are cells, columns are genes.
    #[default]
    Cols,
}

impl std::str::FromStr for GeneAxis {
    type Err = ScfmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(GeneAxis::Rows),
            "cols" => Ok(GeneAxis::Cols),
            other => Err(ScfmError::arg(format!(
                "gene axis must be `rows` or `cols`, got `{other}`"
            ))),
        }
    }
}

/// Reads a MatrixMarket `coordinate integer|real general` file.
pub fn read_matrix_market(path: impl AsRef<Path>, genes: GeneAxis) -> Result<CountMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ScfmError::io(path, e))?;
    parse_matrix_market(BufReader::new(file), &path.display().to_string(), genes)
}

/// Parses MatrixMarket text. Unlisted coordinates are zero; repeated
/// coordinates are summed.
pub fn parse_matrix_market<R: BufRead>(
    reader: R,
    source: &str,
    genes: GeneAxis,
) -> Result<CountMatrix> {
    let perr = |line: usize, msg: String| ScfmError::Parse {
        path: source.to_string(),
        line,
        msg,
    };

    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| perr(1, "empty file".into()))?;
    let header = header.map_err(|e| perr(1, e.to_string()))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(perr(1, "malformed header, expected `%%MatrixMarket matrix ...`".into()));
    }
    if tokens[2] != "coordinate" {
        return Err(perr(1, format!("unsupported format `{}`", tokens[2])));
    }
    if tokens[3] != "integer" && tokens[3] != "real" {
        return Err(perr(1, format!("unsupported field `{}`", tokens[3])));
    }
    if tokens[4] != "general" {
        return Err(perr(1, format!("unsupported symmetry `{}`", tokens[4])));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut values = DMatrix::<f64>::zeros(0, 0);
    let mut seen = 0usize;
    let mut last_line = 1;
    for (lineno, line) in lines {
        last_line = lineno;
        let line = line.map_err(|e| perr(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(perr(lineno, "size line must hold `rows cols entries`".into()));
                }
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| perr(lineno, format!("invalid size `{s}`")))
                };
                let d = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                values = DMatrix::zeros(d.0, d.1);
                dims = Some(d);
            }
            Some((rows, cols, nnz)) => {
                if fields.len() != 3 {
                    return Err(perr(lineno, "entry must hold `row col value`".into()));
                }
                if seen == nnz {
                    return Err(perr(lineno, format!("more than the {nnz} declared entries")));
                }
                let index = |s: &str, bound: usize, what: &str| -> Result<usize> {
                    let v = s
                        .parse::<usize>()
                        .map_err(|_| perr(lineno, format!("invalid {what} index `{s}`")))?;
                    if v == 0 || v > bound {
                        return Err(perr(lineno, format!("{what} index out of range: {v}")));
                    }
                    Ok(v - 1)
                };
                let i = index(fields[0], rows, "row")?;
                let j = index(fields[1], cols, "column")?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| perr(lineno, format!("invalid value `{}`", fields[2])))?;
                if !v.is_finite() {
                    return Err(perr(lineno, format!("non-finite entry {v}")));
                }
                if v < 0.0 {
                    return Err(perr(lineno, format!("negative entry {v}")));
                }
                values[(i, j)] += v;
                seen += 1;
            }
        }
    }
    let (_, _, nnz) = dims.ok_or_else(|| perr(last_line, "missing size line".into()))?;
    if seen != nnz {
        return Err(perr(
            last_line,
            format!("header declares {nnz} entries, found {seen}"),
        ));
    }
    let values = match genes {
        GeneAxis::Cols => values,
        GeneAxis::Rows => values.transpose(),
    };
    CountMatrix::from_values(values).map_err(|e| perr(last_line, e.to_string()))
}

/// Reads a numeric CSV table; rows are cells, columns are genes.
pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<CountMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ScfmError::io(path, e))?;
    parse_csv(file, &path.display().to_string(), has_header)
}

/// Parses CSV text. With `has_header`, the first row supplies gene names.
pub fn parse_csv<R: Read>(reader: R, source: &str, has_header: bool) -> Result<CountMatrix> {
    let perr = |line: usize, msg: String| ScfmError::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut names: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if let Some(w) = width {
            if rec.len() != w {
                return Err(perr(line, format!("ragged row at line {line}: {} fields, expected {w}", rec.len())));
            }
        } else {
            width = Some(rec.len());
        }
        if has_header && names.is_none() {
            names = Some(rec.iter().map(|s| s.trim().to_string()).collect());
            continue;
        }
        for (col, field) in rec.iter().enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| {
                perr(line, format!("non-numeric value `{field}` in column {}", col + 1))
            })?;
            if !v.is_finite() {
                return Err(perr(line, format!("non-finite entry in column {}", col + 1)));
            }
            if v < 0.0 {
                return Err(perr(line, format!("negative entry {v} in column {}", col + 1)));
            }
            data.push(v);
        }
        n_rows += 1;
    }
    let p = width.ok_or_else(|| perr(1, "empty table".into()))?;
    let values = DMatrix::from_row_slice(n_rows, p, &data);
    let genes = names.unwrap_or_else(|| default_names("g", p));
    CountMatrix::new(values, genes, default_names("c", n_rows))
}

/// Writes a matrix as CSV with a gene-name header. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_csv<W: Write>(m: &CountMatrix, writer: W) -> Result<()> {
    write_table(writer, m.gene_names(), m.values())
}

/// Writes any real matrix with a header row.
pub fn write_table<W: Write>(writer: W, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| ScfmError::data(format!("csv write failed: {e}"));
    wtr.write_record(header).map_err(to_err)?;
    let mut row = Vec::with_capacity(values.ncols());
    for i in 0..values.nrows() {
        row.clear();
        row.extend((0..values.ncols()).map(|j| format!("{}", values[(i, j)])));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| ScfmError::data(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Reads a headed real-valued table written by [`write_table`].
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ScfmError::io(path, e))?;
    parse_table(file, &path.display().to_string())
}

pub fn parse_table<R: Read>(reader: R, source: &str) -> Result<(Vec<String>, DMatrix<f64>)> {
    let perr = |line: usize, msg: String| ScfmError::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| perr(line, format!("non-numeric value `{field}`")))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((header.clone(), DMatrix::from_row_slice(rows, header.len(), &data)))
}

/// Writes a matrix whose rows carry a leading text label.
pub fn write_labeled_table<W: Write>(
    writer: W,
    label_header: &str,
    labels: &[String],
    header: &[String],
    values: &DMatrix<f64>,
) -> Result<()> {
    if labels.len() != values.nrows() {
        return Err(ScfmError::arg(format!(
            "{} labels for {} rows",
            labels.len(),
            values.nrows()
        )));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| ScfmError::data(format!("csv write failed: {e}"));
    let mut row: Vec<String> = Vec::with_capacity(values.ncols() + 1);
    row.push(label_header.to_string());
    row.extend(header.iter().cloned());
    wtr.write_record(&row).map_err(to_err)?;
    for (i, label) in labels.iter().enumerate() {
        row.clear();
        row.push(label.clone());
        row.extend((0..values.ncols()).map(|j| format!("{}", values[(i, j)])));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| ScfmError::data(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Reads a table written by [`write_labeled_table`]: row labels, the
/// numeric column names and the values.
pub fn read_labeled_table(
    path: impl AsRef<Path>,
) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let file = File::open(path).map_err(|e| ScfmError::io(path, e))?;
    let perr = |line: usize, msg: String| ScfmError::Parse {
        path: source.clone(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let (mut labels, mut data) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut fields = rec.iter();
        labels.push(fields.next().unwrap_or_default().to_string());
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| perr(line, format!("non-numeric value `{field}`")))?;
            data.push(v);
        }
    }
    let values = DMatrix::from_row_slice(labels.len(), header.len(), &data);
    Ok((labels, header, values))
}

/// Indices of genes whose zero fraction is at most `max_zero_frac`.
pub fn genes_within_zero_fraction(m: &CountMatrix, max_zero_frac: f64) -> Vec<usize> {
    let n = m.n_cells() as f64;
    (0..m.n_genes())
        .filter(|&j| {
            let zeros = m.values.column(j).iter().filter(|&&v| v == 0.0).count();
            zeros as f64 / n <= max_zero_frac
        })
        .collect()
}

/// Drops genes with more than `max_zero_frac` zeros. Order is preserved and
/// the result may have no genes.
pub fn filter_genes_by_zero_fraction(m: &CountMatrix, max_zero_frac: f64) -> CountMatrix {
    m.select_genes(&genes_within_zero_fraction(m, max_zero_frac))
}

/// Scale on which gene variances are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceScale {
    #[default]
    Raw,
    Log1p,
}

impl std::str::FromStr for VarianceScale {
    type Err = ScfmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(VarianceScale::Raw),
            "log1p" => Ok(VarianceScale::Log1p),
            other => Err(ScfmError::arg(format!(
                "variance scale must be `raw` or `log1p`, got `{other}`"
            ))),
        }
    }
}

/// Unbiased sample variance of every gene.
pub fn gene_variances(m: &CountMatrix, scale: VarianceScale) -> Vec<f64> {
    let n = m.n_cells() as f64;
    m.values
        .column_iter()
        .map(|col| {
            let xs: Vec<f64> = match scale {
                VarianceScale::Raw => col.iter().copied().collect(),
                VarianceScale::Log1p => col.iter().map(|v| v.ln_1p()).collect(),
            };
            let mean = xs.iter().sum::<f64>() / n;
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Indices of the `p_keep` most variable genes, by descending variance; equal
/// variances keep the earlier column first.
pub fn top_variable_gene_indices(
    m: &CountMatrix,
    p_keep: usize,
    scale: VarianceScale,
) -> Result<Vec<usize>> {
    if p_keep > m.n_genes() {
        return Err(ScfmError::arg(format!(
            "cannot keep {p_keep} genes out of {}",
            m.n_genes()
        )));
    }
    let var = gene_variances(m, scale);
    let mut order: Vec<usize> = (0..m.n_genes()).collect();
    // sort_by is stable, so ties stay in column order
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]));
    order.truncate(p_keep);
    Ok(order)
}

/// Keeps the `p_keep` most variable genes, ordered by descending variance.
pub fn select_top_variable_genes(
    m: &CountMatrix,
    p_keep: usize,
    scale: VarianceScale,
) -> Result<CountMatrix> {
    Ok(m.select_genes(&top_variable_gene_indices(m, p_keep, scale)?))
}
