//! Append-only JSONL run store.
//!
//! One JSON object per line. A final line without its newline is the trace
//! of an interrupted write and is dropped on open; any other unreadable line
//! is corruption.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt store {path}: record {index}: {message}")]
    Corrupt {
        path: PathBuf,
        index: usize,
        message: String,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every complete record of a JSONL file. A missing file is empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(path)(e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .map(|(index, line)| {
            serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Serialized appender. Each record is written as one line and flushed
/// before `append` returns.
pub struct JsonlWriter {
    path: PathBuf,
    file: Mutex<BufWriter<File>>,
}

impl JsonlWriter {
    /// Opens for appending, first cutting off a torn final line.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io(parent))?;
        }
        if let Ok(text) = std::fs::read(path) {
            let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if keep != text.len() {
                let f = OpenOptions::new().write(true).open(path).map_err(io(path))?;
                f.set_len(keep as u64).map_err(io(path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(BufWriter::new(file)),
        })
    }

    /// Truncates (or creates) the file.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io(parent))?;
        }
        File::create(path).map_err(io(path))?;
        Self::open(path)
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        let mut f = self.file.lock().expect("store writer poisoned");
        f.write_all(line.as_bytes()).map_err(io(&self.path))?;
        f.flush().map_err(io(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Writes `value` as pretty JSON through a temporary file and rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(&tmp, text).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_dropped_and_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.jsonl");
        let w = JsonlWriter::create(&p).unwrap();
        w.append(&1u32).unwrap();
        w.append(&2u32).unwrap();
        drop(w);
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"{\"partial").unwrap();
        drop(f);
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), vec![1, 2]);
        let w = JsonlWriter::open(&p).unwrap();
        w.append(&3u32).unwrap();
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn bad_middle_line_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.jsonl");
        std::fs::write(&p, "1\nnope\n3\n").unwrap();
        match read_jsonl::<u32>(&p) {
            Err(StoreError::Corrupt { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }
}
