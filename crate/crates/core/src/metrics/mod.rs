//! Meta-evaluation statistics.

mod aggregate;
mod correlation;
mod report;
mod winrate;

use thiserror::Error;

pub use aggregate::{
    aggregate, observations_from_human, observations_from_judgments, Aggregated, AggregationPolicy, ItemKey,
    Observation,
};
pub use correlation::{average_ranks, kendall_tau_b, pearson, spearman};
pub use report::{correlate, correlate_grouped, pair_scores, render_table, CorrelationReport, PairedScores};
pub use winrate::{win_rate, WinRate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least 2 paired values, got {0}")]
    TooFew(usize),
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in score vector")]
    NonFinite,
    #[error("no comparisons between '{a}' and '{b}'")]
    NoComparisons { a: String, b: String },
    #[error("choice on {instance_id} compares '{left}' and '{right}', not '{a}' and '{b}'")]
    ForeignChoice {
        instance_id: String,
        left: String,
        right: String,
        a: String,
        b: String,
    },
}
