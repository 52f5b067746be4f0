//! Offline prediction files and the append-only prediction cache.
//!
//! Both share one JSONL schema:
//! `{"premise_hash": str, "hypothesis_hash": str, "model": str, "logits": [e, n, c]}`.
//! Cache writers take an exclusive advisory lock on the file; readers take a
//! shared one, so concurrent evaluation runs can share a cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ContentKey, Logits3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrediction {
    pub premise_hash: String,
    pub hypothesis_hash: String,
    pub model: String,
    pub logits: Logits3,
}

impl StoredPrediction {
    pub fn new(key: &ContentKey, logits: Logits3) -> Self {
        Self {
            premise_hash: key.premise_hash.clone(),
            hypothesis_hash: key.hypothesis_hash.clone(),
            model: key.model.clone(),
            logits,
        }
    }

    pub fn key(&self) -> ContentKey {
        ContentKey {
            model: self.model.clone(),
            premise_hash: self.premise_hash.clone(),
            hypothesis_hash: self.hypothesis_hash.clone(),
        }
    }
}

#[derive(Debug)]
pub struct PredictionStore {
    path: PathBuf,
    writable: bool,
    entries: Mutex<HashMap<ContentKey, Logits3>>,
}

fn parse_into(path: &Path, reader: impl BufRead, map: &mut HashMap<ContentKey, Logits3>) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line from an interrupted writer is ignored.
        let rec: StoredPrediction = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) if e.is_eof() => continue,
            Err(e) => {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        };
        map.insert(rec.key(), rec.logits);
    }
    Ok(())
}

impl PredictionStore {
    /// Loads an offline prediction file, which must exist.
    pub fn open_read_only(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        file.lock_shared().map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        let res = parse_into(path, BufReader::new(&file), &mut map);
        let _ = file.unlock();
        res?;
        Ok(Self {
            path: path.to_path_buf(),
            writable: false,
            entries: Mutex::new(map),
        })
    }

    /// Opens (creating if needed) an append-only cache.
    pub fn open_append(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let store = Self {
            path: path.to_path_buf(),
            writable: true,
            entries: Mutex::new(HashMap::new()),
        };
        store.refresh()?;
        Ok(store)
    }

    /// Re-reads the file to pick up entries written by other processes.
    pub fn refresh(&self) -> Result<()> {
        let file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        file.lock_shared().map_err(|e| Error::io(&self.path, e))?;
        let mut map = HashMap::new();
        let res = parse_into(&self.path, BufReader::new(&file), &mut map);
        let _ = file.unlock();
        res?;
        self.entries.lock().expect("store mutex").extend(map);
        Ok(())
    }

    pub fn get(&self, key: &ContentKey) -> Option<Logits3> {
        self.entries.lock().expect("store mutex").get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("store mutex").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, records: &[StoredPrediction]) -> Result<()> {
        if !self.writable {
            return Err(Error::config("cache", "store is read-only"));
        }
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        let mut file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.lock().map_err(|e| Error::io(&self.path, e))?;
        let res = file.write_all(&buf).and_then(|_| file.flush());
        let _ = file.unlock();
        res.map_err(|e| Error::io(&self.path, e))?;
        let mut map = self.entries.lock().expect("store mutex");
        for r in records {
            map.insert(r.key(), r.logits);
        }
        Ok(())
    }
}

/// Writes an offline prediction file (overwriting) with the given entries.
pub fn write_offline(path: &Path, records: &[StoredPrediction]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
