//! Line-delimited JSON metrics.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Appends records to a `.jsonl` file. Each record is written as one line
/// under an exclusive lock, so concurrent writers never interleave.
#[derive(Debug, Clone)]
pub struct MetricsLog {
    path: PathBuf,
}

impl MetricsLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record).map_err(|e| Error::Data(e.to_string()))?;
        line.push(b'\n');
        let io = |e| Error::io(&self.path, e);
        let mut file = File::options().append(true).create(true).open(&self.path).map_err(io)?;
        file.lock().map_err(io)?;
        file.write_all(&line).map_err(io)?;
        file.unlock().map_err(io)
    }

    pub fn append_all<'a, T: Serialize + 'a>(&self, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
        records.into_iter().try_for_each(|r| self.append(r))
    }

    pub fn read<T: for<'de> Deserialize<'de>>(&self) -> Result<Vec<T>> {
        read_jsonl(&self.path)
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let io = |e| Error::io(path, e);
    let file = File::open(path).map_err(io)?;
    file.lock_shared().map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(&file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    file.unlock().map_err(io)?;
    Ok(out)
}
