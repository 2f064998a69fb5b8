//! Dataset and run analytics: rubric diversity, sentiment by score level,
//! response length per score, per-responder score trends.

mod rouge;
mod sentiment;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::{Judgment, JudgmentStatus, ResponseRecord, ScoreRubric, SynthRecord, SCORE_LEVELS};

pub use rouge::{cross_rouge, lcs_len, pairwise_rouge, pairwise_rouge_texts, rouge_l, rubric_text, tokenize};
pub use sentiment::{
    interpret_classifier_reply, sentiment_decisiveness, ConstantScorer, LevelSentiment, LexiconScorer,
    RemoteClassifierScorer, SentimentReport, SentimentScorer,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("{0} set is empty")]
    EmptySide(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl DistributionSummary {
    /// Summary with `bins` equal-width bins spanning [min, max]. `None` for
    /// empty input.
    pub fn from_values(values: &[f64], bins: usize) -> Option<Self> {
        let mut sorted: Vec<f64> = values.to_vec();
        if sorted.is_empty() {
            return None;
        }
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        let edges = if max > min {
            let bins = bins.max(1);
            (0..=bins).map(|i| min + (max - min) * i as f64 / bins as f64).collect()
        } else {
            vec![min, max]
        };
        Some(Self::build(sorted, edges))
    }

    /// Summary for similarity scores: ten bins of width 0.1 over [0, 1].
    pub fn unit_interval(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let edges = (0..=10).map(|i| i as f64 / 10.0).collect();
        Self::build(sorted, edges)
    }

    fn build(sorted: Vec<f64>, edges: Vec<f64>) -> Self {
        let nbins = edges.len() - 1;
        let mut counts = vec![0usize; nbins];
        for v in &sorted {
            let i = edges[1..].iter().position(|e| v < e).unwrap_or(nbins - 1);
            counts[i] += 1;
        }
        let n = sorted.len();
        let (mean, median, q1, q3, min, max) = if n == 0 {
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        } else {
            (
                sorted.iter().sum::<f64>() / n as f64,
                quantile(&sorted, 0.5),
                quantile(&sorted, 0.25),
                quantile(&sorted, 0.75),
                sorted[0],
                sorted[n - 1],
            )
        };
        DistributionSummary {
            n,
            mean,
            median,
            q1,
            q3,
            min,
            max,
            histogram: Histogram { edges, counts },
        }
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLength {
    pub level: u8,
    pub n: usize,
    pub summary: Option<DistributionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub levels: Vec<LevelLength>,
    pub global_mean: Option<f64>,
    /// Ok judgments whose response could not be found.
    pub unresolved: usize,
}

impl LengthReport {
    /// Largest |level mean − global mean| / global mean over populated levels.
    pub fn max_relative_deviation(&self) -> Option<f64> {
        let g = self.global_mean?;
        self.levels
            .iter()
            .filter_map(|l| l.summary.as_ref())
            .map(|s| (s.mean - g).abs() / g)
            .max_by(f64::total_cmp)
    }
}

const LENGTH_BINS: usize = 10;

fn length_report(pairs: impl IntoIterator<Item = (u8, usize)>, unresolved: usize) -> LengthReport {
    let mut by_level: BTreeMap<u8, Vec<f64>> = SCORE_LEVELS.iter().map(|k| (*k, Vec::new())).collect();
    let mut all = Vec::new();
    for (level, words) in pairs {
        by_level.entry(level).or_default().push(words as f64);
        all.push(words as f64);
    }
    LengthReport {
        levels: by_level
            .into_iter()
            .map(|(level, v)| LevelLength {
                level,
                n: v.len(),
                summary: DistributionSummary::from_values(&v, LENGTH_BINS),
            })
            .collect(),
        global_mean: (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64),
        unresolved,
    }
}

/// Word counts of judged responses grouped by awarded score. Only ok
/// judgments count.
pub fn length_by_score(judgments: &[Judgment], responses: &[ResponseRecord]) -> LengthReport {
    let lookup: HashMap<(&str, &str), &ResponseRecord> = responses
        .iter()
        .map(|r| ((r.instance_id.as_str(), r.responder_id.as_str()), r))
        .collect();
    let mut unresolved = 0;
    let mut pairs = Vec::new();
    for j in judgments {
        let (JudgmentStatus::Ok, Some(score)) = (j.status, j.score) else {
            continue;
        };
        match lookup.get(&(j.instance_id.as_str(), j.responder_id.as_str())) {
            Some(r) => pairs.push((score, word_count(&r.text))),
            None => unresolved += 1,
        }
    }
    length_report(pairs, unresolved)
}

/// Word counts of synthesized responses grouped by target score.
pub fn length_by_target(records: &[SynthRecord]) -> LengthReport {
    length_report(records.iter().map(|r| (r.target_score, word_count(&r.response))), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub responder_id: String,
    pub benchmark: String,
    pub n: usize,
    pub mean_score: f64,
}

/// Mean awarded score per responder per benchmark over ok judgments.
/// Instances missing from `benchmark_of` are grouped under "unknown".
pub fn score_trends(judgments: &[Judgment], benchmark_of: &BTreeMap<String, String>) -> Vec<TrendRow> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for j in judgments {
        let (JudgmentStatus::Ok, Some(score)) = (j.status, j.score) else {
            continue;
        };
        let bench = benchmark_of
            .get(&j.instance_id)
            .cloned()
            .unwrap_or_else(|| "unknown".into());
        let e = acc.entry((j.responder_id.clone(), bench)).or_insert((0.0, 0));
        e.0 += f64::from(score);
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((responder_id, benchmark), (sum, n))| TrendRow {
            responder_id,
            benchmark,
            n,
            mean_score: sum / n as f64,
        })
        .collect()
}

/// Keyword counts across rubrics, most frequent first. Rubrics without
/// keywords contribute their criteria tokens instead.
pub fn keyword_frequencies(rubrics: &[ScoreRubric]) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in rubrics {
        if r.keywords.is_empty() {
            for t in tokenize(&r.criteria) {
                *counts.entry(t).or_default() += 1;
            }
        } else {
            for k in &r.keywords {
                *counts.entry(k.trim().to_lowercase()).or_default() += 1;
            }
        }
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Writes a plot-ready CSV table.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::Error::Invalid(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| crate::Error::Invalid(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}
