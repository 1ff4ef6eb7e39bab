//! Time-series CSV files: a header row of variable names, then one row per
//! time step. In memory a series is `n × T` (variables by time).

use std::io::{Read, Write};
use std::path::Path;

use lfoica_core::Matrix;

use crate::error::DataError;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub names: Vec<String>,
    /// `n × T`.
    pub data: Matrix,
}

pub fn load_timeseries_csv(path: &Path) -> Result<TimeSeries, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_timeseries(file, path)
}

/// Parse from any reader; `path` only labels errors.
pub fn read_timeseries<R: Read>(reader: R, path: &Path) -> Result<TimeSeries, DataError> {
    let malformed = |line: u64, message: String| DataError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => return Err(malformed(1, e.to_string())),
    };
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    let n = names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n {
            return Err(malformed(line, format!("expected {n} fields, found {}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(malformed(line, format!("missing value in column `{}`", names[j])));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| malformed(line, format!("non-numeric value {cell:?} in column `{}`", names[j])))?;
            if !v.is_finite() {
                return Err(malformed(line, format!("non-finite value {cell:?} in column `{}`", names[j])));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    // values are row-major T × n, which is column-major n × T
    Ok(TimeSeries {
        names,
        data: Matrix::from_vec(n, rows, values),
    })
}

/// Default header: `x1, x2, …`.
pub fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

pub fn write_timeseries<W: Write>(writer: W, series: &TimeSeries) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(&series.names)?;
    let mut row: Vec<String> = Vec::with_capacity(series.data.nrows());
    for t in 0..series.data.ncols() {
        row.clear();
        // `Display` for f64 prints the shortest string that parses back exactly
        row.extend(series.data.column(t).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_timeseries_csv(path: &Path, series: &TimeSeries) -> Result<(), DataError> {
    let io = |e: std::io::Error| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_timeseries(std::io::BufWriter::new(file), series).map_err(|e| io(e.into()))
}
