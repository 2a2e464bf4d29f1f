//! CSV ingestion for real data: one-hot categoricals (first level dropped),
//! min-max numerics to [-1, 1], rows with missing fields dropped, then rows
//! clipped to unit norm.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::glm::{scale_features, Dataset, LossFamily};

/// Largest tolerated fraction of unparseable rows.
pub const MAX_UNPARSEABLE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub numeric: Vec<String>,
    /// Outcome labels mapped to `y = 1`; when empty the outcome is parsed as a number.
    #[serde(default)]
    pub positive_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub n: usize,
    pub p: usize,
    pub feature_names: Vec<String>,
    /// Outcome value (as text) to count.
    pub class_counts: BTreeMap<String, usize>,
    pub dropped_missing: usize,
    pub unparseable: usize,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "?" || field.eq_ignore_ascii_case("na")
}

fn normalize_label(s: &str) -> &str {
    s.trim().trim_end_matches('.')
}

struct RawRow {
    outcome: f64,
    categorical: Vec<String>,
    numeric: Vec<f64>,
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &Schema,
    family: LossFamily,
) -> Result<(Dataset, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| NappError::Data(format!("column `{name}` not in header")))
    };
    let y_col = col(&schema.outcome)?;
    let cat_cols: Vec<usize> = schema
        .categorical
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let num_cols: Vec<usize> = schema
        .numeric
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let positive: BTreeSet<&str> = schema
        .positive_labels
        .iter()
        .map(|s| normalize_label(s))
        .collect();

    let mut rows = Vec::new();
    let mut total = 0usize;
    let mut dropped_missing = 0usize;
    let mut unparseable = 0usize;
    for record in reader.records() {
        total += 1;
        let Ok(record) = record else {
            unparseable += 1;
            continue;
        };
        if record.len() != headers.len() {
            unparseable += 1;
            continue;
        }
        let needed = std::iter::once(y_col)
            .chain(cat_cols.iter().copied())
            .chain(num_cols.iter().copied());
        if needed.clone().any(|c| is_missing(&record[c])) {
            dropped_missing += 1;
            continue;
        }
        let outcome = if positive.is_empty() {
            record[y_col].parse::<f64>().ok()
        } else {
            Some(if positive.contains(normalize_label(&record[y_col])) {
                1.0
            } else {
                0.0
            })
        };
        let numeric: Option<Vec<f64>> = num_cols
            .iter()
            .map(|&c| record[c].parse::<f64>().ok())
            .collect();
        match (outcome, numeric) {
            (Some(outcome), Some(numeric)) => rows.push(RawRow {
                outcome,
                categorical: cat_cols.iter().map(|&c| record[c].to_string()).collect(),
                numeric,
            }),
            _ => unparseable += 1,
        }
    }
    if total > 0 && unparseable as f64 > MAX_UNPARSEABLE * total as f64 {
        return Err(NappError::Data(format!(
            "{unparseable} of {total} rows unparseable"
        )));
    }
    if rows.is_empty() {
        return Err(NappError::Data("no usable rows".into()));
    }

    let levels: Vec<Vec<String>> = (0..cat_cols.len())
        .map(|k| {
            let set: BTreeSet<&str> = rows.iter().map(|r| r.categorical[k].as_str()).collect();
            set.into_iter().skip(1).map(String::from).collect()
        })
        .collect();
    let ranges: Vec<(f64, f64)> = (0..num_cols.len())
        .map(|k| {
            rows.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r.numeric[k]), hi.max(r.numeric[k]))
                })
        })
        .collect();

    let mut names = schema.numeric.clone();
    for (k, name) in schema.categorical.iter().enumerate() {
        names.extend(levels[k].iter().map(|l| format!("{name}={l}")));
    }
    let p = names.len();
    if p == 0 {
        return Err(NappError::Data("schema selects no features".into()));
    }
    let n = rows.len();
    let mut x = DMatrix::zeros(n, p);
    for (i, row) in rows.iter().enumerate() {
        let mut j = 0;
        for (k, (lo, hi)) in ranges.iter().enumerate() {
            x[(i, j)] = if hi > lo {
                2.0 * (row.numeric[k] - lo) / (hi - lo) - 1.0
            } else {
                0.0
            };
            j += 1;
        }
        for (k, lv) in levels.iter().enumerate() {
            for l in lv {
                x[(i, j)] = if row.categorical[k] == *l { 1.0 } else { 0.0 };
                j += 1;
            }
        }
    }
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.outcome));
    let mut class_counts = BTreeMap::new();
    for v in y.iter() {
        *class_counts.entry(v.to_string()).or_insert(0) += 1;
    }
    let raw = Dataset::new(x, y, family)?;
    let (data, _) = scale_features(&raw, 1.0)?;
    Ok((
        data,
        IngestReport {
            n,
            p,
            feature_names: names,
            class_counts,
            dropped_missing,
            unparseable,
        },
    ))
}
