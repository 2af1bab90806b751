//! CSV input and output for data sets.
//!
//! Layout: one header row, `y` in the first column, predictors after it.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use tshrink_core::Dataset;

use crate::CliError;

pub struct Table {
    pub columns: Vec<String>,
    pub data: Dataset,
}

pub fn read_dataset(path: &Path) -> Result<Table, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(file, &path.display().to_string())
}

pub fn parse_dataset<R: Read>(reader: R, name: &str) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::input(format!("{name}: cannot read header: {e}")))?
        .clone();
    if header.len() < 2 {
        return Err(CliError::input(format!(
            "{name}: need a `y` column and at least one predictor"
        )));
    }
    if &header[0] != "y" {
        return Err(CliError::input(format!(
            "{name}: first column must be `y`, found `{}`",
            &header[0]
        )));
    }
    let width = header.len();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| CliError::input(format!("{name}: line {line}: {e}")))?;
        if record.len() != width {
            return Err(CliError::input(format!(
                "{name}: line {line} has {} fields, header has {width}",
                record.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::input(format!(
                    "{name}: line {line}, column `{}`: `{field}` is not a number",
                    &header[col]
                ))
            })?;
            if col == 0 {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::input(format!("{name}: no data rows")));
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, width - 1, &x);
    let data = Dataset::new(x, DVector::from_vec(y))
        .map_err(|e| CliError::input(format!("{name}: {e}")))?;
    Ok(Table {
        columns: header.iter().skip(1).map(str::to_owned).collect(),
        data,
    })
}

/// Writes `y, x1, …, xp`; values use the shortest round-trip representation.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CliError::input(format!("cannot write csv: {e}"));
    let mut header = vec!["y".to_owned()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let mut row = vec![data.y()[i].to_string()];
        row.extend(data.x().row(i).iter().map(f64::to_string));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::input(format!("cannot write csv: {e}")))
}
