//! Ingestion of human annotation exports.
//!
//! Two inputs are accepted: the JSON task export of Label Studio, and a
//! plain CSV with header `instance_id,annotator_id,score`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{HumanScore, PairwiseChoice, Verdict, SCORE_LEVELS};
use crate::error::{Error, Result};

/// Annotation task id → instance id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdMap(pub BTreeMap<String, String>);

impl IdMap {
    /// Reads a JSON object (`{"task": "instance"}`) or a two-column CSV
    /// with header `task_id,instance_id`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            let raw: BTreeMap<String, Value> = serde_json::from_str(&text)?;
            return Ok(IdMap(raw.into_iter().map(|(k, v)| (k, value_to_id(&v))).collect()));
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut map = BTreeMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Dataset {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            if let (Some(task), Some(instance)) = (row.get(0), row.get(1)) {
                map.insert(task.trim().to_string(), instance.trim().to_string());
            }
        }
        Ok(IdMap(map))
    }

    pub fn get(&self, task_id: &str) -> Option<&str> {
        self.0.get(task_id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub human_scores: Vec<HumanScore>,
    pub choices: Vec<PairwiseChoice>,
    /// Tasks that could not be related to an instance, or had no usable annotation.
    pub skipped: Vec<SkippedTask>,
    /// Record-level invariant violations (e.g. a score of 7).
    pub errors: Vec<SkippedTask>,
}

/// Ingests an annotation export. `id_map` is only consulted for the JSON
/// export; CSV rows already carry instance ids.
pub fn ingest_annotations(export: impl AsRef<Path>, id_map: &IdMap) -> Result<IngestReport> {
    let path = export.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let trimmed = text.trim_start();
    if is_csv || !(trimmed.is_empty() || trimmed.starts_with('[') || trimmed.starts_with('{')) {
        ingest_csv(path, &text)
    } else {
        ingest_json(&text, id_map)
    }
}

fn ingest_csv(path: &Path, text: &str) -> Result<IngestReport> {
    #[derive(Deserialize)]
    struct Row {
        instance_id: String,
        annotator_id: String,
        score: i64,
    }
    let mut report = IngestReport::default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for (idx, row) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::Dataset {
            path: path.to_path_buf(),
            message: format!("line {line}: {e}"),
        })?;
        match checked_score(row.score) {
            Ok(score) => report.human_scores.push(HumanScore {
                instance_id: row.instance_id,
                annotator_id: row.annotator_id,
                score,
            }),
            Err(reason) => report.errors.push(SkippedTask {
                task_id: format!("line {line}"),
                reason,
            }),
        }
    }
    Ok(report)
}

fn ingest_json(text: &str, id_map: &IdMap) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    if text.trim().is_empty() {
        return Ok(report);
    }
    let tasks = match serde_json::from_str::<Value>(text)? {
        Value::Array(tasks) => tasks,
        single @ Value::Object(_) => vec![single],
        _ => return Err(Error::Invalid("annotation export is not a list of tasks".into())),
    };

    for task in &tasks {
        let task_id = task.get("id").map(value_to_id).unwrap_or_default();
        let Some(instance_id) = id_map.get(&task_id) else {
            report.skipped.push(SkippedTask {
                task_id,
                reason: "task id not in id map".into(),
            });
            continue;
        };
        let data = task.get("data").cloned().unwrap_or(Value::Null);
        let annotations = task
            .get("annotations")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
            .unwrap_or(&[]);

        let mut used = 0usize;
        for ann in annotations {
            if ann.get("was_cancelled").and_then(Value::as_bool) == Some(true) {
                continue;
            }
            let annotator = ann
                .get("completed_by")
                .map(|c| match c {
                    Value::Object(o) => o
                        .get("email")
                        .or_else(|| o.get("id"))
                        .map(value_to_id)
                        .unwrap_or_default(),
                    other => value_to_id(other),
                })
                .unwrap_or_default();
            let results = ann
                .get("result")
                .and_then(Value::as_array)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            for item in results {
                match classify(item) {
                    Some(Answer::Score(raw)) => match checked_score(raw) {
                        Ok(score) => {
                            used += 1;
                            report.human_scores.push(HumanScore {
                                instance_id: instance_id.to_string(),
                                annotator_id: annotator.clone(),
                                score,
                            });
                        }
                        Err(reason) => {
                            used += 1;
                            report.errors.push(SkippedTask {
                                task_id: task_id.clone(),
                                reason,
                            });
                        }
                    },
                    Some(Answer::Verdict(verdict)) => {
                        used += 1;
                        match pair_sources(&data) {
                            Ok((left, right)) => report.choices.push(PairwiseChoice {
                                instance_id: instance_id.to_string(),
                                left_source: left,
                                right_source: right,
                                verdict,
                            }),
                            Err(reason) => report.errors.push(SkippedTask {
                                task_id: task_id.clone(),
                                reason,
                            }),
                        }
                    }
                    None => {}
                }
            }
        }
        if used == 0 {
            report.skipped.push(SkippedTask {
                task_id,
                reason: "no completed annotation".into(),
            });
        }
    }
    Ok(report)
}

enum Answer {
    Score(i64),
    Verdict(Verdict),
}

fn classify(item: &Value) -> Option<Answer> {
    let value = item.get("value")?;
    if let Some(n) = value.get("rating").or_else(|| value.get("number")) {
        return n.as_f64().map(|f| Answer::Score(f.round() as i64));
    }
    let choice = value.get("choices")?.as_array()?.first()?.as_str()?.trim();
    let from = item
        .get("from_name")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_ascii_lowercase();
    if let Ok(n) = choice.parse::<i64>() {
        if !is_preference_control(&from) {
            return Some(Answer::Score(n));
        }
    }
    parse_verdict(choice).map(Answer::Verdict)
}

fn is_preference_control(name: &str) -> bool {
    ["pref", "compar", "better", "winner", "pair"]
        .iter()
        .any(|k| name.contains(k))
}

fn parse_verdict(choice: &str) -> Option<Verdict> {
    let c = choice.to_ascii_lowercase();
    if c.contains("tie") || c.contains("equal") || c.contains("same") {
        Some(Verdict::Tie)
    } else if c.contains("left") || c == "a" || c.ends_with(" a") {
        Some(Verdict::Left)
    } else if c.contains("right") || c == "b" || c.ends_with(" b") {
        Some(Verdict::Right)
    } else {
        None
    }
}

fn pair_sources(data: &Value) -> Result<(String, String), String> {
    let get = |k: &str| data.get(k).and_then(Value::as_str).map(str::to_string);
    match (get("left_source"), get("right_source")) {
        (Some(l), Some(r)) if l != r => Ok((l, r)),
        (Some(l), Some(_)) => Err(format!("left and right source are both '{l}'")),
        _ => Err("task data lacks left_source/right_source".into()),
    }
}

fn checked_score(raw: i64) -> Result<u8, String> {
    u8::try_from(raw)
        .ok()
        .filter(|s| SCORE_LEVELS.contains(s))
        .ok_or_else(|| format!("score {raw} outside 1..5"))
}

fn value_to_id(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
