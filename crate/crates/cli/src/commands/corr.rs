use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use visjudge_core::datastore::{load_dataset, HumanScore, Judgment};
use visjudge_core::metrics::{
    aggregate, correlate_grouped, observations_from_human, observations_from_judgments, pair_scores, render_table,
    AggregationPolicy, Observation,
};

use super::{benchmark_map, write_json, Classify, CmdResult};
use crate::config::RunConfig;
use crate::{rundir, GlobalArgs};

#[derive(Debug, Args)]
pub struct CorrArgs {
    /// Judgments or human scores (x).
    #[arg(long)]
    pub left: PathBuf,
    /// Judgments or human scores (y).
    #[arg(long)]
    pub right: PathBuf,
    /// mean_over_repeats, per_repeat_concat, median or majority.
    #[arg(long, default_value = "mean_over_repeats")]
    pub aggregate: AggregationPolicy,
    /// Benchmark file; adds one row per benchmark tag.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Keep only judgments by this judge id.
    #[arg(long)]
    pub left_judge: Option<String>,
    #[arg(long)]
    pub right_judge: Option<String>,
}

/// Reads judgments or human scores, telling them apart by their fields.
fn observations(path: &Path, judge: Option<&str>) -> anyhow::Result<Vec<Observation>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let Some(first) = text.lines().find(|l| !l.trim().is_empty()) else {
        bail!("{} is empty", path.display());
    };
    let v: serde_json::Value = serde_json::from_str(first).with_context(|| format!("{}: line 1", path.display()))?;
    if v.get("annotator_id").is_some() {
        if judge.is_some() {
            bail!("{} holds human scores; a judge filter does not apply", path.display());
        }
        let scores: Vec<HumanScore> = load_dataset(path)?;
        Ok(observations_from_human(&scores))
    } else if v.get("repeat_index").is_some() {
        let mut js: Vec<Judgment> = load_dataset(path)?;
        if let Some(j) = judge {
            js.retain(|x| x.judge_id == j);
        }
        Ok(observations_from_judgments(&js))
    } else {
        bail!("{}: neither judgments nor human scores", path.display())
    }
}

pub fn run(g: &GlobalArgs, a: &CorrArgs) -> CmdResult {
    let cfg = RunConfig::load(g.config.as_deref()).usage()?;
    let left = observations(&a.left, a.left_judge.as_deref()).usage()?;
    let right = observations(&a.right, a.right_judge.as_deref()).usage()?;
    let bench = benchmark_map(a.benchmark.as_deref()).usage()?;
    let paired = pair_scores(&aggregate(&left, a.aggregate), &aggregate(&right, a.aggregate));
    let rows = correlate_grouped(&paired, &bench, a.aggregate).runtime()?;
    let run_dir = rundir::prepare(g, &cfg, "corr").usage()?;
    write_json(&run_dir.join("correlation.json"), &rows)?;
    print!("{}", render_table(&rows));
    println!("output: {}", run_dir.display());
    Ok(())
}
