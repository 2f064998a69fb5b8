pub mod analyze;
pub mod corr;
pub mod ingest;
pub mod judge;
pub mod synth;
pub mod validate;
pub mod winrate;

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;
use visjudge_core::datastore::{load_dataset, EvalInstance, ScoreRubric};

/// Exit 2 for bad input or configuration, 1 for failures while running.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

pub type CmdResult = Result<(), Failure>;

pub trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn usage_err(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).runtime()?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

/// Loads rubrics from any line-delimited file that carries them: bare
/// rubrics, or records with a `rubric` field (instances, synthesized
/// records, rubric records).
pub fn load_rubrics(path: &Path) -> anyhow::Result<Vec<ScoreRubric>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        let v = match v.get("rubric") {
            Some(r) if r.is_object() => r.clone(),
            _ => v,
        };
        let r: ScoreRubric =
            serde_json::from_value(v).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        r.validate()
            .map_err(|e| anyhow!("{}: line {}: {e}", path.display(), i + 1))?;
        out.push(r);
    }
    Ok(out)
}

/// Instance id to benchmark tag.
pub fn benchmark_map(path: Option<&Path>) -> anyhow::Result<BTreeMap<String, String>> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let instances: Vec<EvalInstance> = load_dataset(path)?;
    Ok(instances.into_iter().map(|i| (i.id, i.benchmark_tag)).collect())
}
