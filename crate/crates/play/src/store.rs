//! Append-only session logs: `sessions/<id>.jsonl` holds one event per
//! line, and `index.jsonl` lists every session ever started.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use metaqa_core::candidates::Condition;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::Event;

pub const INDEX_FILE: &str = "index.jsonl";
pub const SESSION_DIR: &str = "sessions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub user_id: String,
    pub condition: Condition,
    pub created_ms: u64,
    /// Relative to the store root.
    pub file: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    index: Mutex<File>,
}

fn append_line(file: &mut File, line: &str, sync: bool) -> io::Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    file.write_all(&buf)?;
    if sync {
        file.sync_data()?;
    }
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(SESSION_DIR))?;
        let index = OpenOptions::new().create(true).append(true).open(root.join(INDEX_FILE))?;
        Ok(Store { root, index: Mutex::new(index) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_path(&self, session_id: &str) -> PathBuf {
        self.root.join(SESSION_DIR).join(format!("{session_id}.jsonl"))
    }

    /// Creates the session file with its start event, then records it in
    /// the index. Both writes are synced.
    pub fn create(&self, entry: &IndexEntry, start: &Event) -> io::Result<SessionFile> {
        let path = self.root.join(&entry.file);
        let mut file = OpenOptions::new().create_new(true).append(true).open(&path)?;
        append_line(&mut file, &serde_json::to_string(start).expect("event serializes"), true)?;
        append_line(&mut self.index.lock(), &serde_json::to_string(entry).expect("entry serializes"), true)?;
        Ok(SessionFile { file })
    }

    pub fn reopen(&self, entry: &IndexEntry) -> io::Result<SessionFile> {
        let file = OpenOptions::new().append(true).open(self.root.join(&entry.file))?;
        Ok(SessionFile { file })
    }

    pub fn entries(&self) -> Result<Vec<IndexEntry>, LogError> {
        read_jsonl(&self.root.join(INDEX_FILE))
    }
}

/// An open session log.
#[derive(Debug)]
pub struct SessionFile {
    file: File,
}

impl SessionFile {
    pub fn append(&mut self, event: &Event, sync: bool) -> io::Result<()> {
        append_line(&mut self.file, &serde_json::to_string(event).expect("event serializes"), sync)
    }
}

/// Reads a JSONL file. A final line without a newline that fails to parse
/// is a torn write and is dropped; any other bad line is an error.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, LogError> {
    let io_err = |source| LogError::Io { path: path.to_path_buf(), source };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut no = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io_err)? == 0 {
            return Ok(out);
        }
        no += 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line.trim_end()) {
            Ok(v) => out.push(v),
            Err(_) if !complete => return Ok(out),
            Err(e) => return Err(LogError::Parse { path: path.to_path_buf(), line: no, message: e.to_string() }),
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<Event>, LogError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_final_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"a\":1}\n{\"a\":2}\n{\"a\":").unwrap();
        let v: Vec<serde_json::Value> = read_jsonl(&p).unwrap();
        assert_eq!(v.len(), 2);
        fs::write(&p, "{\"a\":1}\nnope\n{\"a\":2}\n").unwrap();
        let err = read_jsonl::<serde_json::Value>(&p).unwrap_err();
        assert!(matches!(err, LogError::Parse { line: 2, .. }));
    }
}
