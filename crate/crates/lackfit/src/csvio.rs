//! CSV files with a `time,x1,...,xd` header, 17 significant digits and LF
//! line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lackfit_core::dynsys::{TimeSeries, Trajectory};

use crate::error::AppError;

/// Formats a float with 17 significant digits (round-trips exactly).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// A header plus rows of floats; non-finite entries are written empty.
pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<(), AppError> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    let err = |e: csv::Error| AppError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))
            .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| AppError::Io {
            path: path.to_path_buf(),
            source: e.into_error(),
        })?
        .flush()
        .map_err(AppError::io(path))
}

/// `prefix1,...,prefixd`.
pub fn numbered(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

fn write_sampled(path: &Path, times: &[f64], dim: usize, values: &[f64]) -> Result<(), AppError> {
    let mut header = vec!["time".to_string()];
    header.extend(numbered("x", dim));
    let rows = times.iter().enumerate().map(|(i, &t)| {
        let mut r = Vec::with_capacity(dim + 1);
        r.push(t);
        r.extend_from_slice(&values[i * dim..(i + 1) * dim]);
        r
    });
    write_table(path, &header, rows)
}

pub fn write_series(path: &Path, ts: &TimeSeries) -> Result<(), AppError> {
    write_sampled(path, ts.times(), ts.dim(), ts.values())
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), AppError> {
    write_sampled(path, traj.times(), traj.dim(), traj.states())
}

/// Reads observations: a header row whose first column is `time`, then one
/// row per strictly increasing time with no missing values.
pub fn read_series(path: &Path) -> Result<TimeSeries, AppError> {
    let file = File::open(path).map_err(|e| AppError::data(path, e.to_string()))?;
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = r
        .headers()
        .map_err(|e| AppError::data(path, e.to_string()))?
        .clone();
    if header.get(0) != Some("time") || header.len() < 2 {
        return Err(AppError::data(path, "header must be `time,x1,...,xd`"));
    }
    let dim = header.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| AppError::data(path, format!("line {line}: {e}")))?;
        if rec.len() != dim + 1 {
            return Err(AppError::data(
                path,
                format!("line {line}: expected {} fields", dim + 1),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                AppError::data(path, format!("line {line}: `{field}` is not a number"))
            })?;
            if j == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    TimeSeries::new(times, dim, values).map_err(|e| AppError::data(path, e.to_string()))
}
