//! Trace files: a commented metadata header followed by plain CSV.
//!
//! Every value is printed in shortest round-trip form; `NaN` cells mark
//! columns that are undefined for the run (for example the a-priori bound
//! of an unregularized run). The `wall_time_ms` column is informational
//! only and excluded from all determinism guarantees.

use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const TRACE_MAGIC: &str = "# qre-trace v1";

/// Serializes one trace. `meta` keys keep their given order.
pub fn write_csv(
    path: &Path,
    meta: &[(String, String)],
    columns: &[&str],
    rows: &[Vec<f64>],
) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(TRACE_MAGIC);
    out.push('\n');
    for (key, value) in meta {
        out.push_str(&format!("# {key} = {value}\n"));
    }
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != columns.len() {
            return Err(CliError::Usage(format!(
                "row with {} cells against {} columns",
                row.len(),
                columns.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// A parsed trace file.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ParsedTrace {
    /// Returns the named column, erroring if absent.
    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Usage(format!("trace has no `{name}` column")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Reads a trace file written by [`write_csv`].
pub fn read_csv(path: &Path) -> CliResult<ParsedTrace> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == TRACE_MAGIC => {}
        other => {
            return Err(CliError::Usage(format!(
                "{}: not a trace file (first line {:?})",
                path.display(),
                other
            )))
        }
    }
    let mut meta = Vec::new();
    let mut columns = Vec::new();
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("# ") {
            match rest.split_once(" = ") {
                Some((k, v)) => meta.push((k.to_string(), v.to_string())),
                None => {
                    return Err(CliError::Usage(format!(
                        "{}: bad metadata line `{line}`",
                        path.display()
                    )))
                }
            }
        } else {
            columns = line.split(',').map(str::to_string).collect();
            break;
        }
    }
    if columns.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: missing column header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("{}: bad cell `{cell}`", path.display()))
                })
            })
            .collect::<CliResult<_>>()?;
        if row.len() != columns.len() {
            return Err(CliError::Usage(format!(
                "{}: row with {} cells against {} columns",
                path.display(),
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok(ParsedTrace {
        meta,
        columns,
        rows,
    })
}
