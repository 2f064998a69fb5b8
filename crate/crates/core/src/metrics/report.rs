use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::aggregate::{Aggregated, AggregationPolicy, ItemKey};
use super::correlation::{kendall_tau_b, pearson, spearman};
use super::MetricError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pub keys: Vec<ItemKey>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Items present on one side only.
    pub excluded: usize,
}

/// The dimensions both sides carry; anything else is ignored when matching.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct JoinKey {
    instance_id: String,
    responder_id: Option<String>,
    repeat: Option<u32>,
}

fn has_dims(agg: &Aggregated) -> (bool, bool) {
    let responder = agg.scores.keys().any(|k| k.responder_id.is_some());
    let repeat = agg.scores.keys().any(|k| k.repeat.is_some());
    (responder, repeat)
}

fn group(agg: &Aggregated, responder: bool, repeat: bool) -> BTreeMap<JoinKey, Vec<(&ItemKey, f64)>> {
    let mut out: BTreeMap<JoinKey, Vec<(&ItemKey, f64)>> = BTreeMap::new();
    for (k, v) in &agg.scores {
        let jk = JoinKey {
            instance_id: k.instance_id.clone(),
            responder_id: if responder { k.responder_id.clone() } else { None },
            repeat: if repeat { k.repeat } else { None },
        };
        out.entry(jk).or_default().push((k, *v));
    }
    out
}

/// Pairs `left` (x) with `right` (y) on the key dimensions both carry. A side
/// without responder ids (human scores) is broadcast across every responder
/// on the other side. Previously excluded items from both sides are added to
/// the unmatched count.
pub fn pair_scores(left: &Aggregated, right: &Aggregated) -> PairedScores {
    let (lr, lk) = has_dims(left);
    let (rr, rk) = has_dims(right);
    let (resp, rep) = (lr && rr, lk && rk);
    let lg = group(left, resp, rep);
    let rg = group(right, resp, rep);

    let mut out = PairedScores {
        keys: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        excluded: left.excluded + right.excluded,
    };
    for (jk, litems) in &lg {
        let Some(ritems) = rg.get(jk) else {
            out.excluded += litems.len();
            continue;
        };
        for (lkey, lv) in litems {
            for (rkey, rv) in ritems {
                out.keys.push(ItemKey {
                    instance_id: jk.instance_id.clone(),
                    responder_id: lkey.responder_id.clone().or_else(|| rkey.responder_id.clone()),
                    repeat: lkey.repeat.or(rkey.repeat),
                });
                out.x.push(*lv);
                out.y.push(*rv);
            }
        }
    }
    out.excluded += rg
        .iter()
        .filter(|(jk, _)| !lg.contains_key(jk))
        .map(|(_, items)| items.len())
        .sum::<usize>();
    out
}

/// One row of a correlation table. A `None` statistic means undefined
/// (a constant vector), rendered as "n/a".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub label: String,
    pub n: usize,
    pub pearson: Option<f64>,
    pub kendall_tau_b: Option<f64>,
    pub spearman: Option<f64>,
    pub excluded: usize,
    pub policy: AggregationPolicy,
}

pub fn correlate(
    label: &str,
    paired: &PairedScores,
    policy: AggregationPolicy,
) -> Result<CorrelationReport, MetricError> {
    Ok(CorrelationReport {
        label: label.to_string(),
        n: paired.x.len(),
        pearson: pearson(&paired.x, &paired.y)?,
        kendall_tau_b: kendall_tau_b(&paired.x, &paired.y)?,
        spearman: spearman(&paired.x, &paired.y)?,
        excluded: paired.excluded,
        policy,
    })
}

/// One row per benchmark (looked up by instance id) followed by an "All" row.
/// Instances with no benchmark entry go under "unknown".
pub fn correlate_grouped(
    paired: &PairedScores,
    benchmark_of: &BTreeMap<String, String>,
    policy: AggregationPolicy,
) -> Result<Vec<CorrelationReport>, MetricError> {
    let mut groups: BTreeMap<&str, PairedScores> = BTreeMap::new();
    for (i, key) in paired.keys.iter().enumerate() {
        let bench = benchmark_of
            .get(&key.instance_id)
            .map(String::as_str)
            .unwrap_or("unknown");
        let g = groups.entry(bench).or_insert_with(|| PairedScores {
            keys: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            excluded: 0,
        });
        g.keys.push(key.clone());
        g.x.push(paired.x[i]);
        g.y.push(paired.y[i]);
    }
    let mut rows = Vec::new();
    for (bench, g) in &groups {
        rows.push(correlate(bench, g, policy)?);
    }
    rows.push(correlate("All", paired, policy)?);
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
}

/// Fixed-width console table: benchmark rows by Pearson, Kendall-Tau, Spearman.
pub fn render_table(rows: &[CorrelationReport]) -> String {
    let width = rows
        .iter()
        .map(|r| r.label.chars().count())
        .chain(std::iter::once("Benchmark".len()))
        .max()
        .unwrap_or(9);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>8}  {:>11}  {:>8}  {:>5}  {:>8}",
        "Benchmark", "Pearson", "Kendall-Tau", "Spearman", "n", "excluded"
    );
    let _ = writeln!(s, "{}", "-".repeat(width + 2 + 8 + 2 + 11 + 2 + 8 + 2 + 5 + 2 + 8));
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>11}  {:>8}  {:>5}  {:>8}",
            r.label,
            cell(r.pearson),
            cell(r.kendall_tau_b),
            cell(r.spearman),
            r.n,
            r.excluded
        );
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(s, "aggregation: {}", r.policy);
    }
    s
}
