//! CSV ingestion into a [`GroupedDataset`].

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::design::FactorialLayout;
use crate::error::{Error, Result};
use crate::inference::{Group, GroupedDataset};
use crate::linalg::Matrix;

use super::config::{AnalysisConfig, ResolvedConfig};

/// Tokens treated as missing values.
const MISSING: [&str; 5] = ["", "na", "nan", ".", "null"];

#[derive(Clone, Debug)]
pub struct LoadedData {
    pub dataset: GroupedDataset,
    pub layout: FactorialLayout,
    pub resolved: ResolvedConfig,
    /// Hex SHA-256 of the raw file contents.
    pub digest: String,
    /// Columns that were standardized with sample moments.
    pub zscored: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_csv(path: &Path, config: &AnalysisConfig) -> Result<LoadedData> {
    let bytes = std::fs::read(path)?;
    load_csv_bytes(&bytes, config)
}

/// As [`load_csv`], reading from memory.
///
/// Rows are grouped by their between-subjects levels in layout order. Within
/// a cell the rows are sorted by their response values, so every downstream
/// result is independent of the row order of the file.
pub fn load_csv_bytes(bytes: &[u8], config: &AnalysisConfig) -> Result<LoadedData> {
    let resolved = config.resolve()?;
    let layout = resolved.layout.clone();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(Some(1), format!("cannot read header row: {e}")))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::spec(format!("column '{name}' not found in header")))
    };
    let between: Vec<_> = config
        .factors
        .iter()
        .filter(|f| f.role == crate::design::Role::Between)
        .collect();
    let factor_cols = between
        .iter()
        .map(|f| column(f.source_column()))
        .collect::<Result<Vec<_>>>()?;
    let response_cols = resolved
        .responses
        .iter()
        .map(|r| column(&r.column))
        .collect::<Result<Vec<_>>>()?;

    let p = layout.p();
    let mut cells: Vec<usize> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); p];
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::data(Some(line), e.to_string()))?;
        let labels = factor_cols
            .iter()
            .zip(&between)
            .map(|(&c, f)| {
                let v = record.get(c).unwrap_or("");
                if f.levels.iter().any(|l| l == v) {
                    Ok(v)
                } else {
                    Err(Error::spec(format!(
                        "line {line}: unknown level '{v}' of factor '{}' (declared: {})",
                        f.name,
                        f.levels.join(", ")
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(layout.cell_index(&labels)?);
        for (j, &c) in response_cols.iter().enumerate() {
            let raw = record.get(c).unwrap_or("");
            if MISSING.contains(&raw.to_ascii_lowercase().as_str()) {
                return Err(Error::data(
                    Some(line),
                    format!("missing value in column '{}'", resolved.responses[j].column),
                ));
            }
            let v: f64 = raw.parse().map_err(|_| {
                Error::data(
                    Some(line),
                    format!("column '{}': '{raw}' is not a number", resolved.responses[j].column),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::data(
                    Some(line),
                    format!("column '{}': non-finite value '{raw}'", resolved.responses[j].column),
                ));
            }
            values[j].push(v);
        }
    }
    if cells.is_empty() {
        return Err(Error::data(None, "no data rows"));
    }

    let mut zscored = Vec::new();
    for (j, r) in resolved.responses.iter().enumerate() {
        if r.negate {
            values[j].iter_mut().for_each(|v| *v = -*v);
        }
        if r.zscore {
            standardize(&mut values[j]).map_err(|e| e.context(format!("column '{}'", r.column)))?;
            zscored.push(r.column.clone());
        }
    }

    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); layout.d()];
    for (i, &cell) in cells.iter().enumerate() {
        rows[cell].push(values.iter().map(|col| col[i]).collect());
    }
    let groups = rows
        .into_iter()
        .enumerate()
        .map(|(cell, mut r)| {
            let name = layout.cell_name(cell);
            if r.len() < 2 {
                return Err(Error::InsufficientData { cell: name, n: r.len() });
            }
            r.sort_by(|a, b| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            Ok(Group::new(name, Matrix::new(r.len(), p, r.concat())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedData {
        dataset: GroupedDataset::new(groups)?,
        layout,
        resolved,
        digest: sha256_hex(bytes),
        zscored,
    })
}

/// In-place `(x − mean) / sd` with the `n − 1` standard deviation.
pub fn standardize(values: &mut [f64]) -> Result<()> {
    let n = values.len();
    if n < 2 {
        return Err(Error::data(None, "z-score needs at least two values"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(Error::data(None, "cannot standardize a constant column"));
    }
    let sd = var.sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    Ok(())
}
