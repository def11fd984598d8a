//! On-disk layout of one project directory:
//!
//! ```text
//! <project_id>/
//!   project.json     metadata, written once
//!   taxonomy.toml    the project's taxonomy, written once
//!   segments.jsonl   segment records, written once
//!   snapshot.jsonl   compacted entries, replaced atomically
//!   log.jsonl        entries appended since the last compaction
//! ```
//!
//! Every entry carries the absolute version it establishes, so recovery
//! replays snapshot then log and skips anything not newer than what it
//! already holds. A crash between publishing a snapshot and truncating the
//! log therefore replays harmlessly. A final log line without its newline is
//! a torn write that was never acknowledged and is cut off on open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use lqm_core::corpus::write_segments;
use lqm_core::taxonomy::load_taxonomy;
use lqm_core::{Corpus, TaxonomySchema};

use crate::model::{Entry, ProjectMeta, ProjectState};

pub const META: &str = "project.json";
pub const TAXONOMY: &str = "taxonomy.toml";
pub const SEGMENTS: &str = "segments.jsonl";
pub const SNAPSHOT: &str = "snapshot.jsonl";
pub const LOG: &str = "log.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

/// Replace `dir/name` with `bytes` via a synced temporary and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))?;
    sync_dir(dir)
}

fn entry_lines<'a>(entries: impl Iterator<Item = &'a Entry>) -> Vec<u8> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).expect("entry serializes");
        out.push(b'\n');
    }
    out
}

/// Materialize a new project directory. The directory appears under `root`
/// only once every file in it is durable.
pub fn create_project(
    root: &Path,
    meta: &ProjectMeta,
    schema: &TaxonomySchema,
    corpus: &Corpus,
    entries: &[Entry],
) -> Result<PathBuf, StoreError> {
    let tmp = root.join(format!(".tmp-{}", meta.project_id));
    let dest = root.join(&meta.project_id);
    let build = || -> io::Result<()> {
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        let meta_json = serde_json::to_vec_pretty(meta).expect("meta serializes");
        write_synced(&tmp.join(META), &meta_json)?;
        write_synced(&tmp.join(TAXONOMY), schema.to_taxonomy_string().as_bytes())?;
        write_synced(&tmp.join(SEGMENTS), write_segments(corpus.segments()).as_bytes())?;
        write_synced(&tmp.join(SNAPSHOT), &entry_lines(entries.iter()))?;
        write_synced(&tmp.join(LOG), b"")?;
        sync_dir(&tmp)?;
        fs::rename(&tmp, &dest)?;
        sync_dir(root)
    };
    build().map_err(io_at(&dest))?;
    Ok(dest)
}

/// Appends entries to `log.jsonl` and periodically folds them into
/// `snapshot.jsonl`.
#[derive(Debug)]
pub struct LogWriter {
    dir: PathBuf,
    file: File,
    appended: usize,
    compact_every: usize,
}

impl LogWriter {
    /// Append one entry and fsync. On failure the file is cut back to its
    /// previous length so no half record is left behind.
    pub fn append(&mut self, entry: &Entry) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).expect("entry serializes");
        line.push(b'\n');
        let before = self.file.metadata()?.len();
        let written = self.file.write_all(&line).and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            let _ = self.file.set_len(before);
            let _ = self.file.sync_data();
            return Err(e);
        }
        self.appended += 1;
        Ok(())
    }

    /// Entries appended since the last compaction.
    pub fn pending(&self) -> usize {
        self.appended
    }

    pub fn compact_if_due(&mut self, state: &ProjectState) -> io::Result<bool> {
        if self.compact_every == 0 || self.appended < self.compact_every {
            return Ok(false);
        }
        self.compact(state)?;
        Ok(true)
    }

    pub fn compact(&mut self, state: &ProjectState) -> io::Result<()> {
        let bytes = entry_lines(state.entries.values().map(|e| e.as_ref()));
        write_atomic(&self.dir, SNAPSHOT, &bytes)?;
        self.file.set_len(0)?;
        self.file.sync_all()?;
        self.appended = 0;
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(io_at(path))
}

fn replay(state: &mut ProjectState, path: &Path, text: &str) -> Result<usize, StoreError> {
    let mut applied = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if state.apply(entry) {
            applied += 1;
        }
    }
    Ok(applied)
}

/// Load a project directory, cutting off a torn log tail.
pub fn open_project(dir: &Path, compact_every: usize) -> Result<(ProjectState, LogWriter), StoreError> {
    let meta_path = dir.join(META);
    let meta: ProjectMeta =
        serde_json::from_str(&read_file(&meta_path)?).map_err(|e| StoreError::Corrupt {
            path: meta_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
    let tax_path = dir.join(TAXONOMY);
    let schema = load_taxonomy(&read_file(&tax_path)?).map_err(|e| StoreError::Corrupt {
        path: tax_path.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let seg_path = dir.join(SEGMENTS);
    let corpus = Corpus::parse(&read_file(&seg_path)?).map_err(|e| StoreError::Corrupt {
        path: seg_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut state = ProjectState::new(meta, schema, corpus);

    let snap_path = dir.join(SNAPSHOT);
    if snap_path.exists() {
        replay(&mut state, &snap_path, &read_file(&snap_path)?)?;
    }

    let log_path = dir.join(LOG);
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(&log_path)
        .map_err(io_at(&log_path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_at(&log_path))?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if complete < bytes.len() {
        file.set_len(complete as u64).map_err(io_at(&log_path))?;
        file.sync_all().map_err(io_at(&log_path))?;
    }
    let text = String::from_utf8_lossy(&bytes[..complete]);
    let pending = replay(&mut state, &log_path, &text)?;

    let writer = LogWriter {
        dir: dir.to_path_buf(),
        file,
        appended: pending,
        compact_every,
    };
    Ok((state, writer))
}
