//! CSV dialect: a header row, comma separated, decimal point. Missing cells
//! are read from an empty field, `NA` or `NaN` and written as empty fields.

use std::io::{Read, Write};

use hdcpd::DataMatrix;

use crate::{CliError, Result};

/// Parsed data with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub data: DataMatrix,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
}

pub fn read_csv<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Parse(format!("header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let p = header.len();
    if p == 0 || header.iter().all(String::is_empty) {
        return Err(CliError::Parse("line 1: empty header".into()));
    }
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            CliError::Parse(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |pos| pos.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                if is_missing(field) {
                    return Ok(None);
                }
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(CliError::Parse(format!(
                        "line {line}, column {}: '{field}' is not a finite number",
                        j + 1
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse("no data rows".into()));
    }
    let data = DataMatrix::from_rows(&rows).map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(Table { header, data })
}

/// Column names `x1, …, xp`.
pub fn default_header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Values are written in shortest round-trip form, so reading the output
/// back reproduces the matrix exactly.
pub fn write_csv<W: Write>(writer: W, table: &Table) -> Result<()> {
    let io = |e: csv::Error| CliError::Io {
        context: "writing csv".into(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.header).map_err(io)?;
    let d = &table.data;
    let mut fields = vec![String::new(); d.p()];
    for i in 0..d.n() {
        for (j, f) in fields.iter_mut().enumerate() {
            *f = d.get(i, j).map(|v| v.to_string()).unwrap_or_default();
        }
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io("writing csv", e))
}
