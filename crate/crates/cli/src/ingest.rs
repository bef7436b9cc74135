//! CSV ingestion: comma-separated, first row headers, UTF-8, '.' decimal.
//! Predictors must be numeric except a single binary text column, which is
//! auto-encoded 0/1 by first-seen order.

use std::collections::BTreeMap;
use std::path::Path;

use envkit::{Dataset, Family};
use nalgebra::{DMatrix, DVector};

#[derive(Debug)]
pub enum IngestError {
    Csv(csv::Error),
    /// Numeric parse failure; row is the 1-based data row index.
    Parse { row: usize, column: String, value: String },
    MissingColumn(String),
    MultipleTextColumns(Vec<String>),
    TextColumnNotBinary { column: String, levels: usize },
    Empty,
    Dataset(envkit::EnvError),
}

impl std::fmt::Display for IngestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestError::Csv(e) => write!(f, "csv error: {e}"),
            IngestError::Parse { row, column, value } => {
                write!(f, "row {row}: cannot parse '{value}' in column '{column}' as a number")
            }
            IngestError::MissingColumn(c) => write!(f, "response column '{c}' not found"),
            IngestError::MultipleTextColumns(cols) => {
                write!(f, "more than one non-numeric column: {}", cols.join(", "))
            }
            IngestError::TextColumnNotBinary { column, levels } => {
                write!(f, "text column '{column}' has {levels} levels; only binary is auto-encoded")
            }
            IngestError::Empty => write!(f, "no data rows"),
            IngestError::Dataset(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for IngestError {}

pub struct LoadedData {
    pub dataset: Dataset,
    pub predictor_names: Vec<String>,
}

/// Reads a CSV file into a Dataset. The response column is pulled out by
/// name; remaining columns become predictors in file order.
pub fn load_csv(
    path: &Path,
    response: &str,
    family: Family,
    intercept: bool,
) -> Result<LoadedData, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(IngestError::Csv)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(IngestError::Csv)?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let resp_idx = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| IngestError::MissingColumn(response.to_string()))?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(IngestError::Csv)?;
        cells.push(rec.iter().map(|c| c.to_string()).collect());
    }
    if cells.is_empty() {
        return Err(IngestError::Empty);
    }

    // a column is text only if no cell parses; a column with a stray bad
    // cell among numbers is a malformed numeric column and errors below
    let ncols = headers.len();
    let mut text_cols: Vec<usize> = Vec::new();
    for j in 0..ncols {
        if cells.iter().all(|row| row[j].parse::<f64>().is_err()) {
            text_cols.push(j);
        }
    }
    if text_cols.len() > 1 {
        return Err(IngestError::MultipleTextColumns(
            text_cols.iter().map(|&j| headers[j].clone()).collect(),
        ));
    }
    let mut encodings: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    if let Some(&j) = text_cols.first() {
        let mut map = BTreeMap::new();
        let mut order = 0usize;
        for row in &cells {
            if !map.contains_key(&row[j]) {
                map.insert(row[j].clone(), order as f64);
                order += 1;
            }
        }
        if map.len() != 2 {
            return Err(IngestError::TextColumnNotBinary {
                column: headers[j].clone(),
                levels: map.len(),
            });
        }
        encodings.insert(j, map);
    }

    let n = cells.len();
    let parse_cell = |i: usize, j: usize| -> Result<f64, IngestError> {
        let raw = &cells[i][j];
        if let Some(map) = encodings.get(&j) {
            Ok(map[raw])
        } else {
            raw.parse::<f64>().map_err(|_| IngestError::Parse {
                row: i + 1,
                column: headers[j].clone(),
                value: raw.clone(),
            })
        }
    };

    let pred_cols: Vec<usize> = (0..ncols).filter(|&j| j != resp_idx).collect();
    let mut x = DMatrix::zeros(n, pred_cols.len());
    let mut y = DVector::zeros(n);
    for i in 0..n {
        if cells[i].len() != ncols {
            return Err(IngestError::Parse {
                row: i + 1,
                column: "<record>".into(),
                value: format!("{} fields, expected {ncols}", cells[i].len()),
            });
        }
        y[i] = parse_cell(i, resp_idx)?;
        for (jj, &j) in pred_cols.iter().enumerate() {
            x[(i, jj)] = parse_cell(i, j)?;
        }
    }

    let dataset = Dataset::new(x, y, family, intercept).map_err(IngestError::Dataset)?;
    Ok(LoadedData {
        dataset,
        predictor_names: pred_cols.iter().map(|&j| headers[j].clone()).collect(),
    })
}
