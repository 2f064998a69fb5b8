use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datastore::append_record;
use crate::{Error, Result};

/// Append-only per-stage log of finished units. A run killed mid-write can
/// leave a torn last line; it is ignored on load and the unit re-runs.
pub struct Ledger {
    dir: PathBuf,
}

impl Ledger {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Ledger { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.jsonl"))
    }

    pub fn exists(&self) -> bool {
        self.dir.join("config.json").exists()
    }

    pub fn append<T: Serialize>(&self, stage: &str, entry: &T) -> Result<()> {
        append_record(self.path(stage), entry)
    }

    /// Finished units of `stage` keyed by `key`; a later duplicate wins.
    pub fn load<T: DeserializeOwned>(&self, stage: &str, key: impl Fn(&T) -> String) -> Result<BTreeMap<String, T>> {
        let path = self.path(stage);
        let mut out = BTreeMap::new();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<T>(line) {
                Ok(entry) => {
                    out.insert(key(&entry), entry);
                }
                Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                    log::warn!("{}: dropping torn last entry ({e})", path.display());
                }
                Err(e) => {
                    return Err(Error::Dataset {
                        path: path.clone(),
                        message: format!("line {}: {e}", i + 1),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn write_config(&self, config: &serde_json::Value) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.dir.join("config.json");
        let text = serde_json::to_string_pretty(config)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read_config(&self) -> Result<serde_json::Value> {
        let path = self.dir.join("config.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let l = Ledger::new(dir.path());
        l.write_config(&serde_json::json!({"a": 1})).unwrap();
        l.append("s", &serde_json::json!({"k": "x", "v": 1})).unwrap();
        l.append("s", &serde_json::json!({"k": "y", "v": 2})).unwrap();
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join("s.jsonl"))
            .unwrap();
        f.write_all(b"{\"k\": \"z\", \"v").unwrap();
        let got: BTreeMap<String, serde_json::Value> = l
            .load("s", |v: &serde_json::Value| v["k"].as_str().unwrap().to_string())
            .unwrap();
        assert_eq!(got.keys().collect::<Vec<_>>(), vec!["x", "y"]);
        assert!(l.exists());
        assert_eq!(l.read_config().unwrap()["a"], 1);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("s.jsonl"), "nope\n{\"k\":\"x\"}\n").unwrap();
        let l = Ledger::new(dir.path());
        let r = l.load("s", |v: &serde_json::Value| v["k"].to_string());
        assert!(r.is_err());
        assert!(l
            .load("missing", |v: &serde_json::Value| v.to_string())
            .unwrap()
            .is_empty());
    }
}
