//! Tabular inputs: CSV datasets, domain inference and bounds files.

use std::path::Path;

use gleams_core::{GeometryError, HyperRectangle};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column:?}: {value:?} is not a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("target column {0:?} not found")]
    MissingTarget(String),
    #[error("dataset needs at least one feature column")]
    NoFeatures,
    #[error("need at least 2 rows to infer a domain, got {0}")]
    TooFewRows(usize),
    #[error("column {0:?} has zero range")]
    ZeroRange(String),
    #[error("padding must be finite and non-negative, got {0}")]
    BadPadding(f64),
    #[error("invalid bounds file: {0}")]
    Bounds(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A numeric table with named feature columns and an optional target.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub names: Vec<String>,
    /// One row per record, one entry per feature column.
    pub rows: Vec<Vec<f64>>,
    pub target: Option<(String, Vec<f64>)>,
}

impl DatasetTable {
    /// Reads a UTF-8 CSV with a header row. The `target` column, when
    /// named, is set aside from the features.
    pub fn from_csv_path(path: &Path, target: Option<&str>) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::from_csv_str(&text, target)
    }

    pub fn from_csv_str(text: &str, target: Option<&str>) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let target_idx = match target {
            Some(t) => Some(
                header
                    .iter()
                    .position(|h| h == t)
                    .ok_or_else(|| DatasetError::MissingTarget(t.to_string()))?,
            ),
            None => None,
        };
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        if names.is_empty() {
            return Err(DatasetError::NoFeatures);
        }
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(names.len());
            for (c, cell) in record.iter().enumerate() {
                let value = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::BadCell {
                        row: r + 1,
                        column: header[c].clone(),
                        value: cell.to_string(),
                    })?;
                if Some(c) == target_idx {
                    targets.push(value);
                } else {
                    row.push(value);
                }
            }
            rows.push(row);
        }
        Ok(Self {
            names,
            rows,
            target: target.map(|t| (t.to_string(), targets)),
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }
}

/// Per-column `[min - padding * range, max + padding * range]`.
pub fn infer_domain(data: &DatasetTable, padding: f64) -> Result<HyperRectangle, DatasetError> {
    if !(padding.is_finite() && padding >= 0.0) {
        return Err(DatasetError::BadPadding(padding));
    }
    if data.rows.len() < 2 {
        return Err(DatasetError::TooFewRows(data.rows.len()));
    }
    let mut lower = Vec::with_capacity(data.dim());
    let mut upper = Vec::with_capacity(data.dim());
    for (j, name) in data.names.iter().enumerate() {
        let (min, max) = data
            .rows
            .iter()
            .map(|r| r[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
        let range = max - min;
        if range <= 0.0 {
            return Err(DatasetError::ZeroRange(name.clone()));
        }
        lower.push(min - padding * range);
        upper.push(max + padding * range);
    }
    Ok(HyperRectangle::new(lower, upper)?)
}

/// The bounds file `{"lower": [...], "upper": [...], "names": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl BoundsFile {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let bounds: BoundsFile =
            serde_json::from_str(&text).map_err(|e| DatasetError::Bounds(e.to_string()))?;
        if let Some(names) = &bounds.names {
            if names.len() != bounds.lower.len() {
                return Err(DatasetError::Bounds(format!(
                    "{} names for {} bounds",
                    names.len(),
                    bounds.lower.len()
                )));
            }
        }
        Ok(bounds)
    }

    pub fn domain(&self) -> Result<HyperRectangle, DatasetError> {
        Ok(HyperRectangle::new(self.lower.clone(), self.upper.clone())?)
    }
}
