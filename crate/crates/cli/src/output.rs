//! Diagnostics CSV.
//!
//! One row per recorded step. Reals use `{:.16e}`, which round-trips every
//! `f64` exactly. Per-chromosome quantities get one column each, numbered
//! from 1.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nar_core::diagnostics::DiagnosticsRow;

use crate::error::{CliError, CliResult};

pub fn header(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["step", "t", "e_total", "e0", "e1", "e2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["V", "v", "rho"] {
        cols.extend((1..=n).map(|m| format!("{prefix}_{m}")));
    }
    cols.push("mean_V".into());
    cols.push("mean_v".into());
    for prefix in ["lambda", "eta"] {
        cols.extend((1..=n).map(|m| format!("{prefix}_{m}")));
    }
    cols.extend(
        [
            "R",
            "constraint_residual_inf",
            "energy_decrement",
            "nucleus_volume",
            "sum_V_minus_nucleus",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    cols
}

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn record(step: usize, row: &DiagnosticsRow<f64>) -> Vec<String> {
    let mut out = vec![step.to_string()];
    let mut push = |v: f64| out.push(format_real(v));
    for v in [row.t, row.e_total, row.e0, row.e1, row.e2] {
        push(v);
    }
    for v in row.volumes.iter().chain(&row.hetero_volumes).chain(&row.rho) {
        push(*v);
    }
    push(row.mean_volume);
    push(row.mean_hetero);
    for v in row.lambda.iter().chain(&row.eta) {
        push(*v);
    }
    for v in [
        row.r,
        row.constraint_residual_inf,
        row.energy_decrement,
        row.nucleus_volume,
        row.sum_volumes_minus_nucleus,
    ] {
        push(v);
    }
    out
}

/// Streams rows to a file, flushing after each one so a crashed run keeps
/// everything written so far.
pub struct DiagnosticsWriter {
    inner: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
    n: usize,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, n: usize) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner
            .write_record(header(n))
            .and_then(|_| Ok(inner.flush()?))
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            n,
        })
    }

    pub fn write(&mut self, step: usize, row: &DiagnosticsRow<f64>) -> CliResult<()> {
        if row.volumes.len() != self.n {
            return Err(CliError::Run(format!(
                "diagnostics row has {} chromosomes, CSV has {}",
                row.volumes.len(),
                self.n
            )));
        }
        self.inner
            .write_record(record(step, row))
            .and_then(|_| Ok(self.inner.flush()?))
            .map_err(|e| CliError::io(&self.path, e))
    }
}

/// A parsed diagnostics CSV: column names and numeric rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DiagnosticsTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_table(path: &Path) -> CliResult<DiagnosticsTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::io(path, format!("not a number: {s:?}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(DiagnosticsTable { header, rows })
}
