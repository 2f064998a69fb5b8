use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{EvalInstance, Judgment, SynthRecord, SCORE_LEVELS};
use crate::error::{Error, Result};

/// A line-delimited record kind.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: &'static str;

    /// Uniqueness key within one file, if the kind has one.
    fn key(&self) -> Option<String> {
        None
    }

    fn validate(&self) -> Result<(), String>;
}

/// Loads and validates every record in a line-delimited JSON file.
///
/// Blank lines are ignored. Errors carry the 1-based line number.
pub fn load_dataset<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let fail = |message: String| Error::Dataset {
        path: path.to_path_buf(),
        message,
    };

    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| fail(format!("line {lineno}: {e}")))?;
        record.validate().map_err(|e| fail(format!("line {lineno}: {e}")))?;
        if let Some(key) = record.key() {
            if let Some(first) = seen.insert(key.clone(), lineno) {
                return Err(fail(format!(
                    "duplicate {} id '{key}' on lines {first} and {lineno}",
                    T::KIND
                )));
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes `records` to `path`, replacing it atomically.
pub fn save_dataset<T: Record>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        for record in records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Appends one record as a single line and flushes it.
pub fn append_record<T: Serialize>(path: impl AsRef<Path>, record: &T) -> Result<()> {
    let path = path.as_ref();
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(&line).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Every judgment must point at a loaded instance.
pub fn check_references(instances: &[EvalInstance], judgments: &[Judgment]) -> Result<()> {
    let ids: BTreeSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let dangling: BTreeSet<&str> = judgments
        .iter()
        .map(|j| j.instance_id.as_str())
        .filter(|id| !ids.contains(id))
        .collect();
    if dangling.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "judgments reference unknown instances: {}",
            dangling.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

/// Per-level counts of a synthesized dataset. The spread between the most
/// and least frequent level may not exceed `n % 5`.
pub fn check_score_balance(records: &[SynthRecord]) -> Result<[usize; 5]> {
    let mut counts = [0usize; 5];
    for r in records {
        if !SCORE_LEVELS.contains(&r.target_score) {
            return Err(Error::Invalid(format!(
                "record {} has target_score {}",
                r.id, r.target_score
            )));
        }
        counts[usize::from(r.target_score) - 1] += 1;
    }
    let max = counts.iter().max().copied().unwrap_or(0);
    let min = counts.iter().min().copied().unwrap_or(0);
    if max - min > records.len() % 5 {
        return Err(Error::Invalid(format!("score levels unbalanced: counts {counts:?}")));
    }
    Ok(counts)
}
