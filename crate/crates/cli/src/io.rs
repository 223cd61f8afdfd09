//! CSV tables, atomic file writes and experiment-file loading.

use std::io::Write;
use std::path::{Path, PathBuf};

use emucal::calibration::{Domain, ExperimentData};

use crate::{CliError, CliResult};

/// Round-trip formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn data_err(path: &Path, message: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {message}", path.display()))
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| data_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| data_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| data_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| data_err(path, e))?;
    tmp.persist(path).map_err(|e| data_err(path, e.error))?;
    Ok(())
}

/// Renders a header and rows as comma-separated text with LF line endings.
pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Data(format!("cannot render CSV: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Data(format!("cannot render CSV: {e}")))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    write_atomic(path, &csv_bytes(header, rows)?)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| data_err(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| data_err(path, e))
}

/// A CSV file with a mandatory header row, kept as text until a column is
/// requested.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| data_err(path, e))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| data_err(path, e))?
            .iter()
            .map(String::from)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(data_err(path, "missing header row"));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| data_err(path, format!("row {}: {e}", i + 1)))?;
            rows.push(record.iter().map(String::from).collect());
        }
        if rows.is_empty() {
            return Err(data_err(path, "no data rows"));
        }
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn index(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(&self.path, format!("missing column `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    /// Parses one column; errors name the 1-based data row and the column.
    pub fn numeric(&self, name: &str) -> CliResult<Vec<f64>> {
        let c = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = &r[c];
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    data_err(
                        &self.path,
                        format!("row {}, column `{name}`: cannot parse {cell:?} as a number", i + 1),
                    )
                })
            })
            .collect()
    }

    /// Row-major numeric block of the named columns.
    pub fn matrix(&self, names: &[String]) -> CliResult<Vec<Vec<f64>>> {
        let cols = names.iter().map(|n| self.numeric(n)).collect::<CliResult<Vec<_>>>()?;
        Ok((0..self.rows.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect())
    }
}

/// Loads measurements: one column per design variable and QoI, a noise column
/// `<qoi>_sd` or `<qoi>_var` per QoI, and an optional `domain` column of
/// `IUQ`/`VAL` tags.
pub fn read_experiments(path: &Path, x_names: &[String], qoi_names: &[String]) -> CliResult<ExperimentData> {
    let table = Table::read(path)?;
    let x = table.matrix(x_names)?;
    let y = table.matrix(qoi_names)?;
    let mut variance = vec![Vec::with_capacity(qoi_names.len()); table.rows.len()];
    for q in qoi_names {
        let sd_col = format!("{q}_sd");
        let var_col = format!("{q}_var");
        let var: Vec<f64> = if table.has(&sd_col) {
            table.numeric(&sd_col)?.iter().map(|s| s * s).collect()
        } else if table.has(&var_col) {
            table.numeric(&var_col)?
        } else {
            return Err(data_err(
                path,
                format!("missing noise column `{sd_col}` or `{var_col}`"),
            ));
        };
        for (row, v) in variance.iter_mut().zip(var) {
            row.push(v);
        }
    }
    let mut data =
        ExperimentData::new(x_names.to_vec(), qoi_names.to_vec(), x, y, variance).map_err(|e| data_err(path, e))?;
    if table.has("domain") {
        let c = table.index("domain")?;
        let domains = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<Domain>()
                    .map_err(|e| data_err(path, format!("row {}, column `domain`: {e}", i + 1)))
            })
            .collect::<CliResult<Vec<_>>>()?;
        data = data.with_domains(domains).map_err(|e| data_err(path, e))?;
    }
    Ok(data)
}
