//! Columnar ASCII scattering data.
//!
//! Files are content-sniffed, so `.txt`, `.dat`, `.csv` and `.abs` are all
//! read the same way. Columns are `q I [dI [dq]]`; the resolution column is
//! read and dropped.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, DatasetSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataIoError {
    #[error("no numeric data rows found")]
    NoNumericRows,
    #[error("line {line}: expected {expected} columns, found {found}")]
    InconsistentColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {found} columns; expected 2 to 4 (q, I, dI, dq)")]
    UnsupportedColumnCount { line: usize, found: usize },
    #[error("no row has a positive q value")]
    NonPositiveQ,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl DataIoError {
    /// Stable variant name for error documents.
    pub fn code(&self) -> &'static str {
        match self {
            DataIoError::NoNumericRows => "NoNumericRows",
            DataIoError::InconsistentColumnCount { .. } => "InconsistentColumnCount",
            DataIoError::UnsupportedColumnCount { .. } => "UnsupportedColumnCount",
            DataIoError::NonPositiveQ => "NonPositiveQ",
            DataIoError::Dataset(_) => "InvalidDataset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Whitespace,
    Comma,
    Semicolon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFile {
    pub dataset: Dataset,
    /// Header, comment, blank and dropped rows.
    pub skipped_lines: usize,
    /// Rows that contributed data, before duplicate-q averaging.
    pub data_rows: usize,
    pub delimiter: Delimiter,
    pub column_count: usize,
    pub warnings: Vec<String>,
}

fn looks_numeric(token: &str) -> bool {
    token.parse::<f64>().is_ok()
}

fn split(line: &str, delimiter: Delimiter) -> Vec<&str> {
    match delimiter {
        Delimiter::Whitespace => line.split_whitespace().collect(),
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        Delimiter::Semicolon => line.split(';').map(str::trim).collect(),
    }
}

fn detect_delimiter(line: &str) -> Delimiter {
    if line.contains(',') {
        Delimiter::Comma
    } else if line.contains(';') {
        Delimiter::Semicolon
    } else {
        Delimiter::Whitespace
    }
}

fn first_token(line: &str) -> &str {
    line.split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .next()
        .unwrap_or("")
}

/// Parses file contents into a dataset.
///
/// Comment lines (`#`, `%`) and lines without a leading number are skipped.
/// Rows with non-finite values or `q <= 0` are dropped and counted as
/// skipped. Rows are sorted by q and rows sharing a q are averaged.
pub fn load_ascii(text: &str) -> Result<ParsedFile, DataIoError> {
    load_ascii_named(text, None)
}

pub fn load_ascii_named(text: &str, name: Option<&str>) -> Result<ParsedFile, DataIoError> {
    let lines: Vec<&str> = text.lines().collect();
    let is_data = |l: &str| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#') && !t.starts_with('%') && looks_numeric(first_token(t))
    };

    let Some(first) = lines.iter().find(|l| is_data(l)) else {
        return Err(DataIoError::NoNumericRows);
    };
    let delimiter = detect_delimiter(first.trim());

    let mut rows: Vec<(f64, f64, Option<f64>)> = Vec::new();
    let mut column_count = 0;
    let mut skipped = 0;
    let mut any_q_positive = false;

    for (idx, raw) in lines.iter().enumerate() {
        if !is_data(raw) {
            skipped += 1;
            continue;
        }
        let tokens = split(raw.trim(), delimiter);
        let found = tokens.len();
        if column_count == 0 {
            if !(2..=4).contains(&found) {
                return Err(DataIoError::UnsupportedColumnCount {
                    line: idx + 1,
                    found,
                });
            }
            column_count = found;
        } else if found != column_count {
            return Err(DataIoError::InconsistentColumnCount {
                line: idx + 1,
                expected: column_count,
                found,
            });
        }
        let values: Option<Vec<f64>> = tokens
            .iter()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let Some(values) = values else {
            skipped += 1;
            continue;
        };
        let q = values[0];
        if q > 0.0 {
            any_q_positive = true;
        } else {
            skipped += 1;
            continue;
        }
        let d_intensity = values.get(2).copied();
        if d_intensity.is_some_and(|d| d <= 0.0) {
            skipped += 1;
            continue;
        }
        rows.push((q, values[1], d_intensity));
    }

    if rows.is_empty() {
        return Err(if any_q_positive || column_count == 0 {
            DataIoError::NoNumericRows
        } else {
            DataIoError::NonPositiveQ
        });
    }

    let data_rows = rows.len();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut q = Vec::with_capacity(rows.len());
    let mut intensity = Vec::with_capacity(rows.len());
    let mut sigma = Vec::with_capacity(rows.len());
    let mut duplicates = 0;
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && rows[end].0 == rows[start].0 {
            end += 1;
        }
        let group = &rows[start..end];
        let n = group.len() as f64;
        duplicates += group.len() - 1;
        q.push(group[0].0);
        intensity.push(group.iter().map(|r| r.1).sum::<f64>() / n);
        if column_count >= 3 {
            let sum_sq: f64 = group.iter().map(|r| r.2.unwrap_or(0.0).powi(2)).sum();
            sigma.push(sum_sq.sqrt() / n);
        }
        start = end;
    }

    let mut warnings = Vec::new();
    if column_count == 4 {
        warnings
            .push("dq (resolution) column ignored; resolution smearing is not supported".into());
    }
    if duplicates > 0 {
        warnings.push(format!("{duplicates} duplicate q rows averaged"));
    }

    let source = match name {
        Some(n) => DatasetSource::File {
            name: n.to_string(),
        },
        None => DatasetSource::Unspecified,
    };
    let d_intensity = (column_count >= 3).then_some(sigma);
    let dataset = Dataset::new(q, intensity, d_intensity, source)?;
    Ok(ParsedFile {
        dataset,
        skipped_lines: skipped,
        data_rows,
        delimiter,
        column_count,
        warnings,
    })
}

/// Whitespace-delimited text with a `# q I [dI]` header and 9 significant
/// digits per value.
pub fn save_ascii(d: &Dataset) -> String {
    let mut out = String::with_capacity(d.len() * 48 + 16);
    match d.d_intensity() {
        Some(sigma) => {
            out.push_str("# q I dI\n");
            for ((q, i), s) in d.q().iter().zip(d.intensity()).zip(sigma) {
                let _ = writeln!(out, "{q:.8e} {i:.8e} {s:.8e}");
            }
        }
        None => {
            out.push_str("# q I\n");
            for (q, i) in d.q().iter().zip(d.intensity()) {
                let _ = writeln!(out, "{q:.8e} {i:.8e}");
            }
        }
    }
    out
}
