//! CSV ingestion and deterministic CSV/JSON output with atomic writes.

use std::fs;
use std::path::{Path, PathBuf};

use edglm_core::modelspec::Covariates;

use crate::error::{CliError, CliResult};

/// Observed series plus covariates; covariate columns may extend past the
/// last observation (future values for forecasting).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub covariates: Covariates,
}

/// Reads `target` and `columns` from a headed CSV file. Trailing rows may
/// leave the target empty; covariates stop at their first empty cell after
/// the observed rows.
pub fn read_dataset(path: &Path, target: &str, columns: &[String]) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let index = |name: &str| -> CliResult<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!("column `{name}` not found in {} (columns: {})", path.display(), headers.iter().collect::<Vec<_>>().join(", ")))
        })
    };
    let yi = index(target)?;
    let ci: Vec<usize> = columns.iter().map(|c| index(c)).collect::<CliResult<_>>()?;

    let mut y = Vec::new();
    let mut y_ended = false;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut cols_ended = vec![false; columns.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| CliError::Data(format!("{}: row {row}: {e}", path.display())))?;
        let cell = |i: usize, name: &str| -> CliResult<Option<f64>> {
            let raw = record.get(i).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| CliError::Data(format!("row {row}, column `{name}`: {raw:?} is not a finite number")))
        };
        match cell(yi, target)? {
            Some(v) if y_ended => {
                return Err(CliError::Data(format!(
                    "row {row}, column `{target}`: value {v} follows an empty target cell"
                )))
            }
            Some(v) => y.push(v),
            None => y_ended = true,
        }
        for (k, (&i, name)) in ci.iter().zip(columns).enumerate() {
            match cell(i, name)? {
                Some(v) if !cols_ended[k] => cols[k].push(v),
                Some(_) => {}
                None if !y_ended => {
                    return Err(CliError::Data(format!("row {row}, column `{name}`: missing value")))
                }
                None => cols_ended[k] = true,
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::Data(format!("{}: no observations in column `{target}`", path.display())));
    }
    let mut covariates = Covariates::new();
    for (name, values) in columns.iter().zip(cols) {
        covariates.push(name, values);
    }
    Ok(Dataset { y, covariates })
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// In-memory CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV of UTF-8 fields")
    }
}

/// Numbered column names `prefix_1 … prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Writes every file to a temporary name in `dir` and then renames them
/// into place, so a failure never leaves a half-written file behind.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> CliResult<Vec<PathBuf>> {
    let io = |path: &Path, source| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut staged = Vec::new();
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
        if let Err(e) = fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(io(&tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::new();
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).map_err(|e| io(&dest, e))?;
        written.push(dest);
    }
    Ok(written)
}
