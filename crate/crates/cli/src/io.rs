//! CSV ingestion and output.
//!
//! Input tables are UTF-8, comma separated, with a header `date,<label>...`
//! and one ISO-8601 date per row in strictly ascending order. Floats are
//! written with Rust's shortest round-trip formatting, so a returns table
//! survives a write/read cycle bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use clap::ValueEnum;
use mpp_core::posterior::ReturnsWindow;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Prices,
    Returns,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },

    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error("dates not strictly ascending at row {row} ({date})")]
    NonMonotoneDates { row: usize, date: String },

    #[error("row {row} has {actual} fields, header has {expected}")]
    RaggedRow { row: usize, expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("risk-free series does not match the data: {0}")]
    RfMismatch(String),
}

impl IoError {
    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Read { .. } => "ReadError",
            IoError::Write { .. } => "WriteError",
            IoError::Parse { .. } => "ParseError",
            IoError::NonMonotoneDates { .. } => "NonMonotoneDates",
            IoError::RaggedRow { .. } => "RaggedRow",
            IoError::InsufficientData(_) => "InsufficientData",
            IoError::RfMismatch(_) => "RfMismatch",
        }
    }
}

/// A parsed table: labels, dates and a row-major body.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub labels: Vec<String>,
    pub dates: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| IoError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(s)
}

/// Parses a dated table. Rows and columns in errors are 1-based and count
/// the header as row 1.
pub fn parse_table(text: &str) -> Result<Table, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| IoError::Parse {
        row: 1,
        col: 1,
        message: e.to_string(),
    })?;
    if header.len() < 2 {
        return Err(IoError::Parse {
            row: 1,
            col: header.len().max(1),
            message: "header needs a date column and at least one label".into(),
        });
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let width = header.len();
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| IoError::Parse {
            row,
            col: 1,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(IoError::RaggedRow {
                row,
                expected: width,
                actual: record.len(),
            });
        }
        let date_text = &record[0];
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|e| IoError::Parse {
            row,
            col: 1,
            message: format!("bad date {date_text:?}: {e}"),
        })?;
        if prev.is_some_and(|p| date <= p) {
            return Err(IoError::NonMonotoneDates {
                row,
                date: date_text.to_owned(),
            });
        }
        prev = Some(date);
        let values = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::Parse {
                        row,
                        col: col + 1,
                        message: format!("not a finite number: {field:?}"),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        dates.push(date_text.to_owned());
        rows.push(values);
    }
    Ok(Table { labels, dates, rows })
}

/// Turns a parsed table into a returns window. Prices become net returns
/// `p_t/p_{t−1} − 1` and lose their first row.
pub fn table_to_window(table: Table, kind: TableKind) -> Result<ReturnsWindow, IoError> {
    let k = table.labels.len();
    let (dates, rows) = match kind {
        TableKind::Returns => (table.dates, table.rows),
        TableKind::Prices => {
            if table.rows.len() < 2 {
                return Err(IoError::InsufficientData(format!(
                    "{} price row(s) give no returns",
                    table.rows.len()
                )));
            }
            for (i, r) in table.rows.iter().enumerate() {
                if let Some(j) = r.iter().position(|p| *p <= 0.0) {
                    return Err(IoError::Parse {
                        row: i + 2,
                        col: j + 2,
                        message: "prices must be positive".into(),
                    });
                }
            }
            let rows = table
                .rows
                .windows(2)
                .map(|w| w[1].iter().zip(&w[0]).map(|(p1, p0)| p1 / p0 - 1.0).collect())
                .collect();
            (table.dates[1..].to_vec(), rows)
        }
    };
    if rows.len() < 2 {
        return Err(IoError::InsufficientData(format!(
            "need at least 2 return rows, got {}",
            rows.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let m = DMatrix::from_row_slice(rows.len(), k, &flat);
    ReturnsWindow::new(table.labels, dates, m).map_err(|e| IoError::InsufficientData(e.to_string()))
}

pub fn ingest(path: &Path, kind: TableKind) -> Result<ReturnsWindow, IoError> {
    table_to_window(parse_table(&read_to_string(path)?)?, kind)
}

/// Risk-free rates from a `date,<rate>` file, which must list exactly the
/// dates of `window`.
pub fn read_rf_file(path: &Path, window: &ReturnsWindow) -> Result<Vec<f64>, IoError> {
    let table = parse_table(&read_to_string(path)?)?;
    if table.labels.len() != 1 {
        return Err(IoError::RfMismatch(format!(
            "expected one rate column, found {}",
            table.labels.len()
        )));
    }
    if table.dates != window.dates() {
        let first_bad = table
            .dates
            .iter()
            .zip(window.dates())
            .position(|(a, b)| a != b)
            .unwrap_or(table.dates.len().min(window.n()));
        return Err(IoError::RfMismatch(format!(
            "{} rates for {} return rows; first mismatch at position {}",
            table.dates.len(),
            window.n(),
            first_bad + 1
        )));
    }
    Ok(table.rows.into_iter().map(|r| r[0]).collect())
}

/// Writes a dated table with the given labels.
pub fn write_table<W: Write>(out: W, labels: &[String], dates: &[String], rows: &DMatrix<f64>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_owned()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (i, date) in dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(rows.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_window<W: Write>(out: W, window: &ReturnsWindow) -> csv::Result<()> {
    write_table(out, window.assets(), window.dates(), window.returns())
}

/// Writes an undated matrix with a header row of labels.
pub fn write_matrix<W: Write>(out: W, labels: &[String], rows: &DMatrix<f64>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(labels)?;
    for row in rows.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// The synthetic weekly panel from `mpp_core::synthetic` with Friday dates
/// starting 2010-01-08, as shipped in `data/weekly_12.csv`.
pub fn bundled_weekly() -> mpp_core::Result<ReturnsWindow> {
    let panel = mpp_core::synthetic::bundled_panel()?;
    let start = NaiveDate::from_ymd_opt(2010, 1, 8).expect("valid date");
    let dates = (0..panel.n())
        .map(|i| (start + chrono::Days::new(7 * i as u64)).format("%Y-%m-%d").to_string())
        .collect();
    ReturnsWindow::new(panel.assets().to_vec(), dates, panel.returns().clone())
}

pub fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|e| IoError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prices_to_returns() {
        let t = parse_table("date,A\n2020-01-03,100\n2020-01-10,101\n2020-01-17,102.01\n").unwrap();
        let w = table_to_window(t, TableKind::Prices).unwrap();
        assert_eq!(w.dates(), ["2020-01-10", "2020-01-17"]);
        assert!((w.returns()[(0, 0)] - 0.01).abs() < 1e-15);
        assert!((w.returns()[(1, 0)] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn single_price_row_is_insufficient() {
        let t = parse_table("date,A,B\n2020-01-03,100,50\n").unwrap();
        assert!(matches!(table_to_window(t, TableKind::Prices), Err(IoError::InsufficientData(_))));
    }

    #[test]
    fn duplicate_date_rejected() {
        let e = parse_table("date,A\n2020-01-03,0.1\n2020-01-03,0.2\n").unwrap_err();
        assert!(matches!(e, IoError::NonMonotoneDates { row: 3, .. }));
    }

    #[test]
    fn ragged_and_bad_fields() {
        assert!(matches!(
            parse_table("date,A,B\n2020-01-03,0.1\n").unwrap_err(),
            IoError::RaggedRow { row: 2, expected: 3, actual: 2 }
        ));
        assert!(matches!(
            parse_table("date,A,B\n2020-01-03,0.1,x\n").unwrap_err(),
            IoError::Parse { row: 2, col: 3, .. }
        ));
        assert!(matches!(
            parse_table("date,A\n03/01/2020,0.1\n").unwrap_err(),
            IoError::Parse { row: 2, col: 1, .. }
        ));
        assert!(matches!(
            parse_table("date,A\n2020-01-03,NaN\n").unwrap_err(),
            IoError::Parse { row: 2, col: 2, .. }
        ));
    }

    #[test]
    fn returns_round_trip_bit_exact() {
        let text = "date,X,Y\n2021-01-01,0.1,-0.30000000000000004\n2021-01-08,1e-300,0.123456789012345678\n2021-01-15,5e-324,-0.0\n";
        let w = table_to_window(parse_table(text).unwrap(), TableKind::Returns).unwrap();
        let mut buf = Vec::new();
        write_window(&mut buf, &w).unwrap();
        let back = table_to_window(parse_table(std::str::from_utf8(&buf).unwrap()).unwrap(), TableKind::Returns).unwrap();
        assert_eq!(w.dates(), back.dates());
        for (a, b) in w.returns().iter().zip(back.returns().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
