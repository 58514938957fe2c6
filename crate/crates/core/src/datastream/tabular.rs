//! CSV files replayed as instance streams.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureValue, Instance, InstanceStream, Schema, TargetKind};
use crate::error::{Error, Result};

/// Columns whose kind should not be auto-detected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaHints {
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
}

/// Stream over a CSV file with a header row.
///
/// The file is read once up front to infer the schema; categorical symbols
/// get indices in first-seen order so replays are stable.
#[derive(Debug, Clone)]
pub struct CsvStream {
    schema: Schema,
    rows: std::vec::IntoIter<Instance>,
}

impl CsvStream {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.len() == 0
    }
}

impl InstanceStream for CsvStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_instance(&mut self) -> Option<Result<Instance>> {
        self.rows.next().map(Ok)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum ColumnKind {
    Numeric,
    Categorical,
}

struct Column {
    kind: ColumnKind,
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Column {
    fn symbol(&mut self, value: &str) -> u32 {
        if let Some(&i) = self.index.get(value) {
            return i;
        }
        let i = self.symbols.len() as u32;
        self.symbols.push(value.to_string());
        self.index.insert(value.to_string(), i);
        i
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Open `path` as a stream. The target defaults to the last column.
pub fn csv_stream(
    path: impl AsRef<Path>,
    target_column: Option<&str>,
    hints: &SchemaHints,
) -> Result<CsvStream> {
    let path = path.as_ref();
    let row_error = |row: u64, message: String| Error::Csv {
        path: PathBuf::from(path),
        row,
        message,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(row_error(1, "need at least one feature column and a target".into()));
    }
    let target = match target_column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?,
        None => header.len() - 1,
    };
    for name in hints.categorical.iter().chain(&hints.numeric) {
        if !header.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }

    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            row_error(row, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, record));
    }

    let mut columns: Vec<Column> = header
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let kind = if hints.categorical.contains(name) {
                ColumnKind::Categorical
            } else if hints.numeric.contains(name) || records.iter().all(|(_, r)| parse_number(&r[c]).is_some()) {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            };
            Column {
                kind,
                symbols: Vec::new(),
                index: HashMap::new(),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(records.len());
    for (t, (line, record)) in records.iter().enumerate() {
        let mut features = Vec::with_capacity(header.len() - 1);
        let mut y = 0.0;
        for (c, column) in columns.iter_mut().enumerate() {
            let raw = &record[c];
            let value = match column.kind {
                ColumnKind::Numeric => FeatureValue::Numeric(parse_number(raw).ok_or_else(|| {
                    row_error(*line, format!("column `{}`: cannot parse `{raw}` as a number", header[c]))
                })?),
                ColumnKind::Categorical => FeatureValue::Categorical(column.symbol(raw.trim())),
            };
            if c == target {
                y = match value {
                    FeatureValue::Numeric(v) => v,
                    FeatureValue::Categorical(s) => f64::from(s),
                };
            } else {
                features.push(value);
            }
        }
        rows.push(Instance::new(features, y, t as u64));
    }

    let target_kind = match columns[target].kind {
        ColumnKind::Categorical => TargetKind::Classification {
            classes: columns[target].symbols.len().max(1) as u32,
        },
        ColumnKind::Numeric => {
            if !rows.is_empty() && rows.iter().all(|r| r.target == 0.0 || r.target == 1.0) {
                TargetKind::Classification { classes: 2 }
            } else {
                TargetKind::Regression
            }
        }
    };

    let mut feature_defs = Vec::new();
    let mut labels = Vec::new();
    for (c, column) in columns.iter().enumerate() {
        if c == target {
            continue;
        }
        let kind = match column.kind {
            ColumnKind::Numeric => {
                let values = rows.iter().map(|r| r.features[feature_defs.len()].as_f64().unwrap_or(0.0));
                let range = values.fold(None, |acc: Option<(f64, f64)>, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
                });
                FeatureKind::Numeric { range }
            }
            ColumnKind::Categorical => FeatureKind::Categorical {
                cardinality: column.symbols.len().max(1) as u32,
            },
        };
        labels.push(column.symbols.clone());
        feature_defs.push((header[c].clone(), kind));
    }
    let mut schema = Schema::new(feature_defs, target_kind)?;
    for (j, l) in labels.into_iter().enumerate() {
        if !l.is_empty() {
            schema = schema.with_labels(j, l);
        }
    }

    Ok(CsvStream {
        schema,
        rows: rows.into_iter(),
    })
}
