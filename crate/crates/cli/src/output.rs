use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::{Failure, Format, Output};

/// Read a whole input file; errors name the file.
pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Write `bytes` to `path` through a temporary in the same directory, so the
/// destination either keeps its old content or holds the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::invalid(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

/// Emit a report as pretty JSON or as the rendered table.
pub fn emit<T: Serialize>(output: &Output, report: &T, table: impl FnOnce(&T) -> String) -> Result<(), Failure> {
    let text = match output.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Table => table(report),
    };
    match &output.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::invalid(format!("standard output: {e}")))
        }
    }
}
