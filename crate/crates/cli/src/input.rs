//! Point and feature arguments.

use std::path::Path;

use serde::Deserialize;

use crate::dataset::DatasetTable;
use crate::error::CliError;
use crate::model::parse_floats;

#[derive(Deserialize)]
#[serde(untagged)]
enum PointFile {
    Bare(Vec<f64>),
    Wrapped { point: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PointsFile {
    Bare(Vec<Vec<f64>>),
    Wrapped { points: Vec<Vec<f64>> },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

/// `0.3,0.7` or `@point.json` holding `[0.3, 0.7]` or `{"point": [...]}`.
pub fn parse_point(arg: &str, d: usize) -> Result<Vec<f64>, CliError> {
    let point = match arg.strip_prefix('@') {
        Some(path) => {
            let parsed: PointFile = serde_json::from_str(&read(Path::new(path))?)
                .map_err(|e| CliError::Schema(format!("invalid point file {path}: {e}")))?;
            match parsed {
                PointFile::Bare(p) | PointFile::Wrapped { point: p } => p,
            }
        }
        None => parse_floats(arg)?,
    };
    check_point(&point, d)?;
    Ok(point)
}

fn check_point(point: &[f64], d: usize) -> Result<(), CliError> {
    if point.len() != d {
        return Err(CliError::Usage(format!(
            "point has {} coordinates, the surrogate has {d} features",
            point.len()
        )));
    }
    if point.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage("point has a non-finite coordinate".into()));
    }
    Ok(())
}

/// Test points from a CSV (header row; columns matched by `names` when
/// given, otherwise taken in order) or from JSON (`[[...], ...]` or
/// `{"points": [...]}`), chosen by extension.
pub fn load_points(
    path: &Path,
    d: usize,
    names: Option<&[String]>,
) -> Result<Vec<Vec<f64>>, CliError> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let points = if is_json {
        let parsed: PointsFile = serde_json::from_str(&read(path)?).map_err(|e| {
            CliError::Schema(format!("invalid points file {}: {e}", path.display()))
        })?;
        match parsed {
            PointsFile::Bare(p) | PointsFile::Wrapped { points: p } => p,
        }
    } else {
        let table = DatasetTable::from_csv_path(path, None)?;
        match names {
            Some(names) if names.iter().all(|n| table.names.contains(n)) => {
                let idx: Vec<usize> = names
                    .iter()
                    .map(|n| {
                        table
                            .names
                            .iter()
                            .position(|t| t == n)
                            .expect("checked above")
                    })
                    .collect();
                table
                    .rows
                    .iter()
                    .map(|r| idx.iter().map(|&i| r[i]).collect())
                    .collect()
            }
            _ => table.rows,
        }
    };
    for p in &points {
        check_point(p, d)?;
    }
    Ok(points)
}

/// A feature given by index or by name.
pub fn parse_feature(arg: &str, d: usize, names: Option<&[String]>) -> Result<usize, CliError> {
    let index = match arg.parse::<usize>() {
        Ok(i) => i,
        Err(_) => names
            .and_then(|n| n.iter().position(|x| x == arg))
            .ok_or_else(|| CliError::Usage(format!("unknown feature {arg:?}")))?,
    };
    if index >= d {
        return Err(CliError::Usage(format!(
            "feature {index} out of range for {d} features"
        )));
    }
    Ok(index)
}

/// Comma-separated feature indices or names.
pub fn parse_features(
    arg: &str,
    d: usize,
    names: Option<&[String]>,
) -> Result<Vec<usize>, CliError> {
    arg.split(',')
        .map(|f| parse_feature(f.trim(), d, names))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_points() {
        assert_eq!(parse_point("0.3, 0.7", 2).unwrap(), vec![0.3, 0.7]);
        assert!(matches!(parse_point("0.3", 2), Err(CliError::Usage(_))));
        assert!(matches!(parse_point("0.3,x", 2), Err(CliError::Usage(_))));
        assert!(matches!(
            parse_point("@/nonexistent.json", 2),
            Err(CliError::Io(_))
        ));
    }

    #[test]
    fn features_by_index_or_name() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(parse_feature("1", 2, None).unwrap(), 1);
        assert_eq!(parse_feature("b", 2, Some(&names)).unwrap(), 1);
        assert!(parse_feature("2", 2, Some(&names)).is_err());
        assert!(parse_feature("c", 2, Some(&names)).is_err());
        assert_eq!(parse_features("b,0", 2, Some(&names)).unwrap(), vec![1, 0]);
    }
}
