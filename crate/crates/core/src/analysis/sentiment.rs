use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::rouge::tokenize;
use crate::datastore::{ScoreRubric, SCORE_LEVELS};

/// Maps a text to a polarity in [-1, 1].
pub trait SentimentScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, text: &str) -> Result<f64, String>;
}

const POSITIVE: &[&str] = &[
    "accurate",
    "accurately",
    "appropriate",
    "clear",
    "clearly",
    "coherent",
    "complete",
    "completely",
    "comprehensive",
    "consistent",
    "correct",
    "correctly",
    "creative",
    "detailed",
    "effective",
    "effectively",
    "engaging",
    "excellent",
    "exceptional",
    "fully",
    "good",
    "great",
    "helpful",
    "insightful",
    "outstanding",
    "perfect",
    "perfectly",
    "precise",
    "precisely",
    "relevant",
    "rich",
    "strong",
    "successfully",
    "thorough",
    "thoroughly",
    "vivid",
    "well",
];

const NEGATIVE: &[&str] = &[
    "absent",
    "confusing",
    "confused",
    "error",
    "errors",
    "fail",
    "fails",
    "failure",
    "flawed",
    "inaccurate",
    "inadequate",
    "incoherent",
    "incomplete",
    "incorrect",
    "incorrectly",
    "irrelevant",
    "lack",
    "lacking",
    "lacks",
    "limited",
    "misleading",
    "missing",
    "misses",
    "no",
    "none",
    "not",
    "poor",
    "poorly",
    "superficial",
    "unclear",
    "vague",
    "weak",
    "wrong",
];

/// Signed-lexicon average: (positive hits − negative hits) / all hits, 0 when
/// nothing matches.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    weights: HashMap<String, f64>,
}

impl Default for LexiconScorer {
    fn default() -> Self {
        let mut weights = HashMap::new();
        for w in POSITIVE {
            weights.insert(w.to_string(), 1.0);
        }
        for w in NEGATIVE {
            weights.insert(w.to_string(), -1.0);
        }
        LexiconScorer { weights }
    }
}

impl LexiconScorer {
    pub fn from_weights(weights: impl IntoIterator<Item = (String, f64)>) -> Self {
        LexiconScorer {
            weights: weights
                .into_iter()
                .map(|(w, v)| (w.to_lowercase(), v.clamp(-1.0, 1.0)))
                .collect(),
        }
    }
}

impl SentimentScorer for LexiconScorer {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn score(&self, text: &str) -> Result<f64, String> {
        let hits: Vec<f64> = tokenize(text)
            .iter()
            .filter_map(|t| self.weights.get(t).copied())
            .collect();
        if hits.is_empty() {
            return Ok(0.0);
        }
        Ok(hits.iter().sum::<f64>() / hits.len() as f64)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl SentimentScorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _text: &str) -> Result<f64, String> {
        Ok(self.0)
    }
}

/// Adapter for a text-classification service. POSTs `{"text": ...}` and
/// accepts either `{"score": s}` with s in [-1, 1], or
/// `{"label": "POSITIVE"|"NEGATIVE", "score": p}` (also as a one-element list),
/// which maps to ±p.
pub struct RemoteClassifierScorer {
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl RemoteClassifierScorer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, String> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(RemoteClassifierScorer {
            endpoint: endpoint.into(),
            http,
        })
    }
}

pub fn interpret_classifier_reply(v: &serde_json::Value) -> Result<f64, String> {
    let v = match v {
        serde_json::Value::Array(items) => items.first().ok_or("empty classifier reply")?,
        other => other,
    };
    let score = v
        .get("score")
        .and_then(|s| s.as_f64())
        .ok_or("classifier reply has no numeric score")?;
    let signed = match v.get("label").and_then(|l| l.as_str()) {
        None => score,
        Some(l) if l.to_ascii_lowercase().starts_with("pos") => score,
        Some(l) if l.to_ascii_lowercase().starts_with("neg") => -score,
        Some(l) if l.to_ascii_lowercase().starts_with("neu") => 0.0,
        Some(l) => return Err(format!("unknown classifier label '{l}'")),
    };
    if !(-1.0..=1.0).contains(&signed) {
        return Err(format!("classifier score {signed} outside [-1, 1]"));
    }
    Ok(signed)
}

impl SentimentScorer for RemoteClassifierScorer {
    fn name(&self) -> &str {
        "remote"
    }

    fn score(&self, text: &str) -> Result<f64, String> {
        let resp = self
            .http
            .post(&self.endpoint)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("classifier returned {}", resp.status()));
        }
        let v: serde_json::Value = resp.json().map_err(|e| e.to_string())?;
        interpret_classifier_reply(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSentiment {
    pub level: u8,
    pub n: usize,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub scorer: String,
    pub levels: Vec<LevelSentiment>,
    /// Descriptions the scorer failed on.
    pub skipped: usize,
}

/// Mean sentiment of the level-k descriptions for each k.
pub fn sentiment_decisiveness(rubrics: &[ScoreRubric], scorer: &dyn SentimentScorer) -> SentimentReport {
    let mut sums: BTreeMap<u8, (f64, usize)> = SCORE_LEVELS.iter().map(|k| (*k, (0.0, 0))).collect();
    let mut skipped = 0;
    for r in rubrics {
        for (k, text) in &r.score_descriptions {
            match scorer.score(text) {
                Ok(s) if s.is_finite() => {
                    let e = sums.entry(*k).or_insert((0.0, 0));
                    e.0 += s.clamp(-1.0, 1.0);
                    e.1 += 1;
                }
                Ok(_) => skipped += 1,
                Err(e) => {
                    log::debug!("sentiment scorer failed: {e}");
                    skipped += 1;
                }
            }
        }
    }
    SentimentReport {
        scorer: scorer.name().to_string(),
        levels: sums
            .into_iter()
            .map(|(level, (sum, n))| LevelSentiment {
                level,
                n,
                mean: (n > 0).then(|| sum / n as f64),
            })
            .collect(),
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::RubricKind;

    struct Flaky;
    impl SentimentScorer for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn score(&self, text: &str) -> Result<f64, String> {
            if text.contains("boom") {
                Err("boom".into())
            } else {
                Ok(0.5)
            }
        }
    }

    fn graded(i: usize) -> ScoreRubric {
        ScoreRubric::new(
            format!("criterion {i}"),
            [
                "The response fails and is incorrect, vague and irrelevant.",
                "Mostly inaccurate with missing details.",
                "Partly correct but lacks depth.",
                "Accurate and clear with minor gaps.",
                "Excellent, thorough and precise.",
            ],
            RubricKind::GeneralPurpose,
        )
    }

    #[test]
    fn lexicon_polarity() {
        let s = LexiconScorer::default();
        assert_eq!(s.score("wrong, vague, poor").unwrap(), -1.0);
        assert_eq!(s.score("excellent and clear").unwrap(), 1.0);
        assert_eq!(s.score("a cat on a mat").unwrap(), 0.0);
        // one positive, one negative
        assert_eq!(s.score("accurate but incomplete").unwrap(), 0.0);
    }

    #[test]
    fn graded_fixture_is_monotone() {
        let rubrics: Vec<_> = (0..4).map(graded).collect();
        let rep = sentiment_decisiveness(&rubrics, &LexiconScorer::default());
        let means: Vec<f64> = rep.levels.iter().map(|l| l.mean.unwrap()).collect();
        assert_eq!(means[0], -1.0);
        assert_eq!(means[4], 1.0);
        assert!(means[0] < means[4]);
        assert!(rep.levels.iter().all(|l| l.n == 4));
    }

    #[test]
    fn constant_scorer_is_flat() {
        let rep = sentiment_decisiveness(&[graded(0)], &ConstantScorer(0.0));
        assert!(rep.levels.iter().all(|l| l.mean == Some(0.0)));
    }

    #[test]
    fn failures_are_skipped_and_counted() {
        let mut r = graded(0);
        r.score_descriptions.insert(2, "boom".into());
        let rep = sentiment_decisiveness(&[r], &Flaky);
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.levels[1].n, 0);
        assert_eq!(rep.levels[1].mean, None);
        assert_eq!(rep.levels[0].mean, Some(0.5));
    }

    #[test]
    fn classifier_reply_shapes() {
        use serde_json::json;
        assert_eq!(interpret_classifier_reply(&json!({"score": -0.25})).unwrap(), -0.25);
        assert_eq!(
            interpret_classifier_reply(&json!([{"label": "NEGATIVE", "score": 0.9}])).unwrap(),
            -0.9
        );
        assert_eq!(
            interpret_classifier_reply(&json!({"label": "POSITIVE", "score": 0.8})).unwrap(),
            0.8
        );
        assert!(interpret_classifier_reply(&json!({"label": "weird", "score": 0.8})).is_err());
        assert!(interpret_classifier_reply(&json!({"score": 3.0})).is_err());
        assert!(interpret_classifier_reply(&json!([])).is_err());
    }
}
