use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datastore::{HumanScore, Judgment, JudgmentStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationPolicy {
    #[default]
    MeanOverRepeats,
    PerRepeatConcat,
    Median,
    Majority,
}

impl fmt::Display for AggregationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationPolicy::MeanOverRepeats => "mean_over_repeats",
            AggregationPolicy::PerRepeatConcat => "per_repeat_concat",
            AggregationPolicy::Median => "median",
            AggregationPolicy::Majority => "majority",
        })
    }
}

impl FromStr for AggregationPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" | "mean_over_repeats" => Ok(AggregationPolicy::MeanOverRepeats),
            "concat" | "per_repeat_concat" => Ok(AggregationPolicy::PerRepeatConcat),
            "median" => Ok(AggregationPolicy::Median),
            "majority" => Ok(AggregationPolicy::Majority),
            other => Err(format!("unknown aggregation policy '{other}'")),
        }
    }
}

/// Identifies one scored item. Absent dimensions act as wildcards when two
/// score sets are paired.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemKey {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responder_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<u32>,
}

impl fmt::Display for ItemKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.instance_id)?;
        if let Some(r) = &self.responder_id {
            write!(f, "/{r}")?;
        }
        if let Some(k) = self.repeat {
            write!(f, "#{k}")?;
        }
        Ok(())
    }
}

/// One raw score, possibly missing (a failed judgment).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub instance_id: String,
    pub responder_id: Option<String>,
    pub repeat: u32,
    pub score: Option<f64>,
}

pub fn observations_from_judgments(judgments: &[Judgment]) -> Vec<Observation> {
    judgments
        .iter()
        .map(|j| Observation {
            instance_id: j.instance_id.clone(),
            responder_id: Some(j.responder_id.clone()),
            repeat: j.repeat_index,
            score: match j.status {
                JudgmentStatus::Ok => j.score.map(f64::from),
                _ => None,
            },
        })
        .collect()
}

/// Annotators become "repeats", numbered by sorted annotator id within each
/// instance.
pub fn observations_from_human(scores: &[HumanScore]) -> Vec<Observation> {
    let mut by_instance: BTreeMap<&str, Vec<&HumanScore>> = BTreeMap::new();
    for s in scores {
        by_instance.entry(&s.instance_id).or_default().push(s);
    }
    let mut out = Vec::new();
    for (instance, mut group) in by_instance {
        group.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        for (k, s) in group.into_iter().enumerate() {
            out.push(Observation {
                instance_id: instance.to_string(),
                responder_id: None,
                repeat: k as u32,
                score: Some(f64::from(s.score)),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub policy: AggregationPolicy,
    pub scores: BTreeMap<ItemKey, f64>,
    /// Items (or, for per-repeat concatenation, observations) with no usable score.
    pub excluded: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Most frequent value; ties go to the lowest score.
fn majority(sorted: &[f64]) -> f64 {
    let mut best = (sorted[0], 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        if j > best.1 {
            best = (sorted[i], j);
        }
        i += j;
    }
    best.0
}

pub fn aggregate(observations: &[Observation], policy: AggregationPolicy) -> Aggregated {
    let mut scores = BTreeMap::new();
    let mut excluded = 0;
    if policy == AggregationPolicy::PerRepeatConcat {
        for o in observations {
            match o.score {
                Some(s) => {
                    scores.insert(
                        ItemKey {
                            instance_id: o.instance_id.clone(),
                            responder_id: o.responder_id.clone(),
                            repeat: Some(o.repeat),
                        },
                        s,
                    );
                }
                None => excluded += 1,
            }
        }
        return Aggregated {
            policy,
            scores,
            excluded,
        };
    }

    let mut groups: BTreeMap<ItemKey, Vec<f64>> = BTreeMap::new();
    for o in observations {
        let entry = groups
            .entry(ItemKey {
                instance_id: o.instance_id.clone(),
                responder_id: o.responder_id.clone(),
                repeat: None,
            })
            .or_default();
        if let Some(s) = o.score {
            entry.push(s);
        }
    }
    for (key, mut values) in groups {
        if values.is_empty() {
            excluded += 1;
            continue;
        }
        values.sort_by(f64::total_cmp);
        let v = match policy {
            AggregationPolicy::MeanOverRepeats => values.iter().sum::<f64>() / values.len() as f64,
            AggregationPolicy::Median => median(&values),
            AggregationPolicy::Majority => majority(&values),
            AggregationPolicy::PerRepeatConcat => unreachable!(),
        };
        scores.insert(key, v);
    }
    Aggregated {
        policy,
        scores,
        excluded,
    }
}
