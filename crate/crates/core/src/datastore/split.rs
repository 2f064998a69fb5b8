use serde::{Deserialize, Serialize};

use super::ScoreRubric;
use crate::analysis::{rouge_l, rubric_text};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    /// For each test rubric, its highest ROUGE-L against any train rubric.
    pub max_per_test: Vec<f64>,
    pub mean_of_max: f64,
}

/// Measures how close each held-out rubric is to the training rubrics.
pub fn split_check(train: &[ScoreRubric], test: &[ScoreRubric], include_levels: bool) -> Result<OverlapSummary> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid(
            "split_check needs non-empty train and test lists".into(),
        ));
    }
    let train_text: Vec<String> = train.iter().map(|r| rubric_text(r, include_levels)).collect();
    let max_per_test: Vec<f64> = test
        .iter()
        .map(|t| {
            let t = rubric_text(t, include_levels);
            train_text.iter().map(|r| rouge_l(&t, r)).fold(0.0_f64, f64::max)
        })
        .collect();
    let mean_of_max = max_per_test.iter().sum::<f64>() / max_per_test.len() as f64;
    Ok(OverlapSummary {
        max_per_test,
        mean_of_max,
    })
}
