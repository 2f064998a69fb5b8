//! Record types, line-delimited persistence, annotation ingestion and
//! train/test overlap checks.

mod annotations;
mod image;
mod io;
mod split;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use annotations::{ingest_annotations, IdMap, IngestReport, SkippedTask};
pub use image::{media_type_for_path, ImageBytes, ImageRef, ALLOWED_MEDIA_TYPES};
pub use io::{append_record, check_references, check_score_balance, load_dataset, save_dataset, Record};
pub use split::{split_check, OverlapSummary};

use crate::backend::GenParams;

/// Phrase that separates a feedback rationale from its integer score.
pub const OVERALL_SCORE_PHRASE: &str = "So the overall score is";

pub const SCORE_LEVELS: [u8; 5] = [1, 2, 3, 4, 5];

/// Opaque fields carried through load/save untouched.
pub type Extra = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricKind {
    #[default]
    GeneralPurpose,
    DomainSpecific,
}

impl fmt::Display for RubricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RubricKind::GeneralPurpose => f.write_str("general_purpose"),
            RubricKind::DomainSpecific => f.write_str("domain_specific"),
        }
    }
}

/// An evaluation criterion plus one description per score level 1..=5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRubric {
    pub criteria: String,
    #[serde(with = "level_map")]
    pub score_descriptions: BTreeMap<u8, String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub kind: RubricKind,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ScoreRubric {
    pub fn new(criteria: impl Into<String>, levels: [&str; 5], kind: RubricKind) -> Self {
        ScoreRubric {
            criteria: criteria.into(),
            score_descriptions: SCORE_LEVELS
                .iter()
                .zip(levels)
                .map(|(k, v)| (*k, v.to_string()))
                .collect(),
            keywords: Vec::new(),
            kind,
            extra: Extra::new(),
        }
    }

    /// Description for `level`, or an empty string when absent.
    pub fn level(&self, level: u8) -> &str {
        self.score_descriptions.get(&level).map(String::as_str).unwrap_or("")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.criteria.trim().is_empty() {
            return Err("criteria is empty".into());
        }
        for level in SCORE_LEVELS {
            match self.score_descriptions.get(&level) {
                None => return Err(format!("score_descriptions missing level {level}")),
                Some(text) if text.trim().is_empty() => {
                    return Err(format!("score_descriptions level {level} is empty"))
                }
                Some(_) => {}
            }
        }
        if let Some(bad) = self.score_descriptions.keys().find(|k| !SCORE_LEVELS.contains(k)) {
            return Err(format!("score_descriptions has unexpected level {bad}"));
        }
        Ok(())
    }
}

/// JSON object keys are strings; levels are stored as integers in memory.
mod level_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u8, String>, s: S) -> Result<S::Ok, S::Error> {
        let as_strings: BTreeMap<String, &String> = map.iter().map(|(k, v)| (k.to_string(), v)).collect();
        as_strings.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u8, String>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<u8>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("score_descriptions: invalid level '{k}'")))
            })
            .collect()
    }
}

/// One benchmark row (or one synthesized instance): everything a judge
/// needs except the response under evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub id: String,
    pub image: ImageRef,
    pub instruction: String,
    pub reference_answer: String,
    pub rubric: ScoreRubric,
    pub benchmark_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_short_answer: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl EvalInstance {
    /// Captioning benchmarks may leave the instruction empty; the caption
    /// prompt is filled in at sampling time.
    pub fn is_captioning(&self) -> bool {
        self.benchmark_tag.to_ascii_lowercase().contains("caption")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub instance_id: String,
    pub responder_id: String,
    pub text: String,
    #[serde(default)]
    pub gen_params: GenParams,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentStatus {
    Ok,
    ParseFailed,
    BackendFailed,
}

impl fmt::Display for JudgmentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JudgmentStatus::Ok => "ok",
            JudgmentStatus::ParseFailed => "parse_failed",
            JudgmentStatus::BackendFailed => "backend_failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub instance_id: String,
    pub responder_id: String,
    pub judge_id: String,
    pub repeat_index: u32,
    pub feedback: String,
    pub score: Option<u8>,
    pub raw_output: String,
    pub status: JudgmentStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_rule: Option<crate::parser::ExtractionRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Provenance of a synthesized record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub image_index: usize,
    pub rubric_id: String,
    pub instruction_id: String,
    /// Fingerprint of the brainstorm call the rubric came from.
    pub brainstorm_call: String,
    /// Indices into the seed file of the exemplars shown in that call.
    pub seed_indices: Vec<usize>,
    pub refinements: u32,
    pub instruction_retries: u32,
    pub response_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub id: String,
    pub image: ImageRef,
    pub rubric: ScoreRubric,
    pub instruction: String,
    pub reference_answer: String,
    pub target_score: u8,
    pub response: String,
    pub feedback: String,
    pub lineage: Lineage,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanScore {
    pub instance_id: String,
    pub annotator_id: String,
    pub score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Left,
    Right,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseChoice {
    pub instance_id: String,
    pub left_source: String,
    pub right_source: String,
    pub verdict: Verdict,
}

/// Checks that `feedback` closes with the overall-score sentence for `score`.
pub fn feedback_ends_with_score(feedback: &str, score: u8) -> bool {
    let Some(pos) = feedback.rfind(OVERALL_SCORE_PHRASE) else {
        return false;
    };
    let rest = feedback[pos + OVERALL_SCORE_PHRASE.len()..].trim_start();
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.parse::<u8>().ok() != Some(score) {
        return false;
    }
    rest[digits.len()..]
        .chars()
        .all(|c| c.is_whitespace() || matches!(c, '.' | '!' | '"' | '\'' | ')'))
}

fn non_empty(field: &str, value: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("{field} is empty"))
    } else {
        Ok(())
    }
}

fn score_in_range(field: &str, score: u8) -> Result<(), String> {
    if SCORE_LEVELS.contains(&score) {
        Ok(())
    } else {
        Err(format!("{field} {score} outside 1..5"))
    }
}

impl Record for ScoreRubric {
    const KIND: &'static str = "rubric";
    fn validate(&self) -> Result<(), String> {
        ScoreRubric::validate(self)
    }
}

impl Record for EvalInstance {
    const KIND: &'static str = "instance";
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        if !self.is_captioning() {
            non_empty("instruction", &self.instruction)?;
        }
        non_empty("reference_answer", &self.reference_answer)?;
        self.image.validate()?;
        self.rubric.validate().map_err(|e| format!("rubric: {e}"))
    }
}

impl Record for ResponseRecord {
    const KIND: &'static str = "response";
    fn key(&self) -> Option<String> {
        Some(format!("{}/{}", self.instance_id, self.responder_id))
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("instance_id", &self.instance_id)?;
        non_empty("responder_id", &self.responder_id)
    }
}

impl Record for Judgment {
    const KIND: &'static str = "judgment";
    fn key(&self) -> Option<String> {
        Some(format!(
            "{}/{}/{}/{}",
            self.instance_id, self.responder_id, self.judge_id, self.repeat_index
        ))
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("instance_id", &self.instance_id)?;
        match (self.status, self.score) {
            (JudgmentStatus::Ok, Some(s)) => score_in_range("score", s),
            (JudgmentStatus::Ok, None) => Err("status ok requires a score".into()),
            (_, Some(_)) => Err(format!("status {} must not carry a score", self.status)),
            (_, None) => Ok(()),
        }
    }
}

impl Record for SynthRecord {
    const KIND: &'static str = "synth_record";
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("instruction", &self.instruction)?;
        non_empty("reference_answer", &self.reference_answer)?;
        non_empty("response", &self.response)?;
        score_in_range("target_score", self.target_score)?;
        self.rubric.validate().map_err(|e| format!("rubric: {e}"))?;
        if !feedback_ends_with_score(&self.feedback, self.target_score) {
            return Err(format!(
                "feedback does not end with '{OVERALL_SCORE_PHRASE} {}'",
                self.target_score
            ));
        }
        Ok(())
    }
}

impl Record for HumanScore {
    const KIND: &'static str = "human_score";
    fn key(&self) -> Option<String> {
        Some(format!("{}/{}", self.instance_id, self.annotator_id))
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("instance_id", &self.instance_id)?;
        score_in_range("score", self.score)
    }
}

impl Record for PairwiseChoice {
    const KIND: &'static str = "pairwise_choice";
    fn validate(&self) -> Result<(), String> {
        non_empty("instance_id", &self.instance_id)?;
        if self.left_source == self.right_source {
            return Err(format!("left_source and right_source are both '{}'", self.left_source));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rubric() -> ScoreRubric {
        ScoreRubric::new("Counts objects", ["a", "b", "c", "d", "e"], RubricKind::GeneralPurpose)
    }

    #[test]
    fn rubric_serializes_levels_as_string_keys() {
        let json = serde_json::to_value(rubric()).unwrap();
        assert_eq!(json["score_descriptions"]["4"], "d");
        let back: ScoreRubric = serde_json::from_value(json).unwrap();
        assert_eq!(back, rubric());
    }

    #[test]
    fn rubric_missing_level_names_it() {
        let mut r = rubric();
        r.score_descriptions.remove(&4);
        assert_eq!(r.validate().unwrap_err(), "score_descriptions missing level 4");
    }

    #[test]
    fn rubric_keeps_unknown_fields() {
        let raw =
            r#"{"criteria":"c","score_descriptions":{"1":"a","2":"b","3":"c","4":"d","5":"e"},"origin":"seed-7"}"#;
        let r: ScoreRubric = serde_json::from_str(raw).unwrap();
        assert_eq!(r.extra["origin"], "seed-7");
        assert!(serde_json::to_string(&r).unwrap().contains("\"origin\":\"seed-7\""));
    }

    #[test]
    fn judgment_status_score_coupling() {
        let mut j = Judgment {
            instance_id: "i".into(),
            responder_id: "r".into(),
            judge_id: "j".into(),
            repeat_index: 0,
            feedback: String::new(),
            score: Some(3),
            raw_output: String::new(),
            status: JudgmentStatus::Ok,
            extraction_rule: None,
            detail: None,
            extra: Extra::new(),
        };
        assert!(Record::validate(&j).is_ok());
        j.score = Some(6);
        assert!(Record::validate(&j).is_err());
        j.score = None;
        assert!(Record::validate(&j).is_err());
        j.status = JudgmentStatus::ParseFailed;
        assert!(Record::validate(&j).is_ok());
    }

    #[test]
    fn closing_score_sentence() {
        assert!(feedback_ends_with_score("Fine work. So the overall score is 4", 4));
        assert!(feedback_ends_with_score("Fine work. So the overall score is 4.", 4));
        assert!(!feedback_ends_with_score("So the overall score is 4. More text.", 4));
        assert!(!feedback_ends_with_score("So the overall score is 3", 4));
        assert!(!feedback_ends_with_score("no phrase", 4));
    }
}
