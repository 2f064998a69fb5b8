//! Parsers for every structured model output the pipeline consumes.
//!
//! None of these panic on arbitrary input; each failure is a typed error
//! so callers can decide whether to re-generate.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::datastore::{ScoreRubric, OVERALL_SCORE_PHRASE, SCORE_LEVELS};

pub const RESULT_MARKER: &str = "[RESULT]";
pub const NEXT_MARKER: &str = "[NEXT]";
pub const END_MARKER: &str = "[END]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionRule {
    ResultMarker,
    OverallPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedJudgment {
    pub feedback: String,
    pub score: u8,
    pub extraction_rule: ExtractionRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgmentParseError {
    #[error("empty output")]
    EmptyInput,
    #[error("no score marker or phrase found")]
    NoScore,
    #[error("score {0} outside 1..5")]
    OutOfRange(i64),
    #[error("conflicting scores after marker: {0:?}")]
    Ambiguous(Vec<i64>),
    #[error("feedback is empty")]
    EmptyFeedback,
}

fn integer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+").unwrap())
}

fn to_int(s: &str) -> i64 {
    // Saturate absurdly long digit runs; they are out of range either way.
    s.parse::<i64>()
        .unwrap_or(if s.starts_with('-') { i64::MIN } else { i64::MAX })
}

fn in_range(n: i64) -> Option<u8> {
    u8::try_from(n).ok().filter(|s| SCORE_LEVELS.contains(s))
}

fn strip_label<'a>(text: &'a str, label: &str) -> &'a str {
    let t = text.trim().trim_start_matches(['*', '#', ' ']);
    match t.get(..label.len()) {
        Some(head) if head.eq_ignore_ascii_case(label) => t[label.len()..].trim_start_matches(['*', ' ']).trim(),
        _ => text.trim(),
    }
}

/// Extracts feedback and score from a judge's output.
///
/// The last `[RESULT]` marker wins; failing that, the last
/// "So the overall score is" phrase. Models often quote the rubric, so
/// earlier markers are ignored.
pub fn parse_judgment(raw: &str) -> Result<ParsedJudgment, JudgmentParseError> {
    if raw.trim().is_empty() {
        return Err(JudgmentParseError::EmptyInput);
    }

    if let Some(pos) = raw.rfind(RESULT_MARKER) {
        let tail = &raw[pos + RESULT_MARKER.len()..];
        let mut found: Vec<i64> = integer_re().find_iter(tail).map(|m| to_int(m.as_str())).collect();
        found.dedup();
        let mut distinct = found.clone();
        distinct.sort_unstable();
        distinct.dedup();
        match distinct.as_slice() {
            [] => {}
            [n] => {
                let score = in_range(*n).ok_or(JudgmentParseError::OutOfRange(*n))?;
                let feedback = strip_label(&raw[..pos], "Feedback:").to_string();
                if feedback.is_empty() {
                    return Err(JudgmentParseError::EmptyFeedback);
                }
                return Ok(ParsedJudgment {
                    feedback,
                    score,
                    extraction_rule: ExtractionRule::ResultMarker,
                });
            }
            _ => return Err(JudgmentParseError::Ambiguous(found)),
        }
    }

    let pos = raw.rfind(OVERALL_SCORE_PHRASE).ok_or(JudgmentParseError::NoScore)?;
    let tail = raw[pos + OVERALL_SCORE_PHRASE.len()..].trim_start_matches([' ', ':', '\t']);
    let first = integer_re()
        .find(tail)
        .filter(|m| m.start() == 0)
        .ok_or(JudgmentParseError::NoScore)?;
    let n = to_int(first.as_str());
    let score = in_range(n).ok_or(JudgmentParseError::OutOfRange(n))?;
    let feedback = strip_label(&raw[..pos], "Feedback:").to_string();
    if feedback.is_empty() {
        return Err(JudgmentParseError::EmptyFeedback);
    }
    Ok(ParsedJudgment {
        feedback,
        score,
        extraction_rule: ExtractionRule::OverallPhrase,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("empty output")]
    EmptyInput,
    #[error("missing [NEXT] separator")]
    MissingSeparator { raw: String },
    #[error("{section} section is empty")]
    EmptySection { section: &'static str, raw: String },
    #[error("feedback lacks the overall-score phrase")]
    ScorePhraseMissing { raw: String },
    #[error("score phrase says {found}, expected {expected}")]
    ScorePhraseMismatch { found: i64, expected: u8, raw: String },
}

fn split_pair(
    raw: &str,
    first_label: &str,
    second_label: &str,
    first_name: &'static str,
    second_name: &'static str,
) -> Result<(String, String), SplitError> {
    if raw.trim().is_empty() {
        return Err(SplitError::EmptyInput);
    }
    let Some(sep) = raw.find(NEXT_MARKER) else {
        return Err(SplitError::MissingSeparator { raw: raw.to_string() });
    };
    let head = &raw[..sep];
    let mut tail = &raw[sep + NEXT_MARKER.len()..];
    if let Some(end) = tail.find(END_MARKER) {
        tail = &tail[..end];
    }
    let first = strip_label(head, first_label).to_string();
    let second = strip_label(tail, second_label).to_string();
    if first.is_empty() {
        return Err(SplitError::EmptySection {
            section: first_name,
            raw: raw.to_string(),
        });
    }
    if second.is_empty() {
        return Err(SplitError::EmptySection {
            section: second_name,
            raw: raw.to_string(),
        });
    }
    Ok((first, second))
}

/// Splits a "Problem: ... [NEXT] Response: ... [END]" generation.
pub fn parse_problem_response(raw: &str) -> Result<(String, String), SplitError> {
    split_pair(raw, "Problem:", "Response:", "problem", "response")
}

/// Splits a "Response: ... [NEXT] Feedback: ... [END]" generation and checks
/// that the feedback closes with the overall-score phrase for `target_score`.
/// Text after the score sentence is dropped.
pub fn parse_response_feedback(raw: &str, target_score: u8) -> Result<(String, String), SplitError> {
    let (response, feedback) = split_pair(raw, "Response:", "Feedback:", "response", "feedback")?;
    let Some(pos) = feedback.rfind(OVERALL_SCORE_PHRASE) else {
        return Err(SplitError::ScorePhraseMissing { raw: raw.to_string() });
    };
    let after = pos + OVERALL_SCORE_PHRASE.len();
    let tail = &feedback[after..];
    let lead = tail.len() - tail.trim_start_matches([' ', ':', '\t']).len();
    let Some(m) = integer_re().find(&tail[lead..]).filter(|m| m.start() == 0) else {
        return Err(SplitError::ScorePhraseMissing { raw: raw.to_string() });
    };
    let found = to_int(m.as_str());
    if found != i64::from(target_score) {
        return Err(SplitError::ScorePhraseMismatch {
            found,
            expected: target_score,
            raw: raw.to_string(),
        });
    }
    let mut cut = after + lead + m.end();
    if feedback[cut..].starts_with('.') {
        cut += 1;
    }
    Ok((response, feedback[..cut].to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Align,
    Misalign,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("neither 'align' nor 'misalign' found")]
pub struct AlignmentParseError;

/// The first "align" token decides; a preceding "mis" makes it misalign.
pub fn parse_alignment(raw: &str) -> Result<Alignment, AlignmentParseError> {
    let lower = raw.to_lowercase();
    let idx = lower.find("align").ok_or(AlignmentParseError)?;
    if lower[..idx].ends_with("mis") {
        Ok(Alignment::Misalign)
    } else {
        Ok(Alignment::Align)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expected {expected} rubrics, parsed {} ({})", partial.len(), diagnostics.join("; "))]
pub struct RubricParseError {
    pub expected: usize,
    pub partial: Vec<ScoreRubric>,
    pub diagnostics: Vec<String>,
}

/// Finds top-level `{...}` spans, honouring double-quoted strings.
pub fn balanced_objects(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_str = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push(&raw[start..=i]);
                }
            }
            _ => {}
        }
    }
    out
}

/// Extracts `expected_count` rubrics from free-form model output.
///
/// Accepts either the flat `scoreN_description` layout or a nested
/// `score_descriptions` object. Objects that fail to parse are skipped and
/// reported in the error's diagnostics.
pub fn parse_rubric_json(raw: &str, expected_count: usize) -> Result<Vec<ScoreRubric>, RubricParseError> {
    let mut rubrics = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, candidate) in balanced_objects(raw).into_iter().enumerate() {
        match serde_json::from_str::<Value>(candidate) {
            Ok(value) => match rubric_from_value(&value) {
                Ok(r) => rubrics.push(r),
                Err(e) => diagnostics.push(format!("object {}: {e}", i + 1)),
            },
            Err(e) => diagnostics.push(format!("object {}: invalid JSON: {e}", i + 1)),
        }
    }
    if rubrics.len() < expected_count {
        if rubrics.is_empty() && diagnostics.is_empty() {
            diagnostics.push("no JSON objects found".into());
        }
        return Err(RubricParseError {
            expected: expected_count,
            partial: rubrics,
            diagnostics,
        });
    }
    rubrics.truncate(expected_count);
    Ok(rubrics)
}

fn rubric_from_value(value: &Value) -> Result<ScoreRubric, String> {
    let obj = value.as_object().ok_or("not an object")?;
    let text = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
    let criteria = text("criteria")
        .or_else(|| text("description"))
        .ok_or("missing criteria")?;
    let mut rubric = ScoreRubric::new(criteria, ["", "", "", "", ""], Default::default());
    let nested = obj.get("score_descriptions").and_then(Value::as_object);
    for level in SCORE_LEVELS {
        let desc = text(&format!("score{level}_description"))
            .or_else(|| nested.and_then(|n| n.get(&level.to_string())?.as_str().map(str::to_string)))
            .unwrap_or_default();
        rubric.score_descriptions.insert(level, desc);
    }
    if let Some(kw) = obj.get("keywords").and_then(Value::as_array) {
        rubric.keywords = kw.iter().filter_map(Value::as_str).map(str::to_string).collect();
    }
    rubric.validate()?;
    Ok(rubric)
}
