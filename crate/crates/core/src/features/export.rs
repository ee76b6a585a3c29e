use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::{to_feature_vector, DiffMode, Observation};
use crate::error::{Error, Result};

/// Labeled feature matrix, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub labels: Vec<u8>,
    pub severities: Vec<Option<u8>>,
    pub rows: Array2<f64>,
}

impl FeatureTable {
    pub fn from_observations<'a>(
        observations: impl IntoIterator<Item = &'a Observation>,
        diff: DiffMode,
    ) -> Self {
        let mut labels = Vec::new();
        let mut severities = Vec::new();
        let mut flat = Vec::new();
        let mut width = 0;
        for obs in observations {
            let v = to_feature_vector(obs, diff);
            width = v.len();
            flat.extend(v.0);
            labels.push(obs.label);
            severities.push(obs.severity);
        }
        let rows = Array2::from_shape_vec((labels.len(), width), flat)
            .expect("every observation has the same window count");
        FeatureTable {
            labels,
            severities,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    /// Row subset in the given order.
    pub fn select(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            severities: idx.iter().map(|&i| self.severities[i]).collect(),
            rows: self.rows.select(ndarray::Axis(0), idx),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &FeatureTable) -> Result<FeatureTable> {
        if self.width() != other.width() && !self.is_empty() && !other.is_empty() {
            return Err(Error::Shape {
                expected: format!("width {}", self.width()),
                found: format!("width {}", other.width()),
            });
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        Ok(FeatureTable {
            labels: [self.labels.clone(), other.labels.clone()].concat(),
            severities: [self.severities.clone(), other.severities.clone()].concat(),
            rows: ndarray::concatenate(ndarray::Axis(0), &[self.rows.view(), other.rows.view()])
                .expect("matching widths"),
        })
    }
}

/// Writes `label,severity,f0..fN`; severity is empty for negatives.
pub fn write_feature_csv(path: impl AsRef<Path>, table: &FeatureTable) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "label,severity").map_err(io)?;
    for j in 0..table.width() {
        write!(out, ",f{j}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (i, row) in table.rows.outer_iter().enumerate() {
        write!(out, "{}", table.labels[i]).map_err(io)?;
        match table.severities[i] {
            Some(s) => write!(out, ",{s}").map_err(io)?,
            None => write!(out, ",").map_err(io)?,
        }
        for v in row {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "label" || &headers[1] != "severity" {
        return Err(Error::Header {
            file: path.display().to_string(),
            found: headers.iter().collect::<Vec<_>>().join(","),
            expected: "label,severity,f0,...".into(),
        });
    }
    let width = headers.len() - 2;
    let mut labels = Vec::new();
    let mut severities = Vec::new();
    let mut flat = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::MalformedRow {
            file: path.display().to_string(),
            line,
            reason,
        };
        let label = match &record[0] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label {other:?} is not 0/1"))),
        };
        let severity = match &record[1] {
            "" => None,
            s => Some(
                s.parse::<u8>()
                    .map_err(|_| bad(format!("severity {s:?}")))?,
            ),
        };
        for field in record.iter().skip(2) {
            let v: f64 = field.parse().map_err(|_| bad(format!("value {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { line });
            }
            flat.push(v);
        }
        labels.push(label);
        severities.push(severity);
    }
    let rows = Array2::from_shape_vec((labels.len(), width), flat).map_err(|e| Error::Shape {
        expected: format!("{width} columns per row"),
        found: e.to_string(),
    })?;
    Ok(FeatureTable {
        labels,
        severities,
        rows,
    })
}
