use std::path::PathBuf;

use clap::Args;
use visjudge_core::datastore::{ingest_annotations, save_dataset, IdMap};

use super::{write_json, Classify, CmdResult};
use crate::config::RunConfig;
use crate::{rundir, GlobalArgs};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Annotation tool JSON export, or CSV with instance_id,annotator_id,score.
    #[arg(long)]
    pub export: PathBuf,
    /// Task id to instance id mapping (JSON object or CSV task_id,instance_id).
    #[arg(long)]
    pub id_map: Option<PathBuf>,
}

pub fn run(g: &GlobalArgs, a: &IngestArgs) -> CmdResult {
    let cfg = RunConfig::load(g.config.as_deref()).usage()?;
    let map = match &a.id_map {
        Some(p) => IdMap::load(p).usage()?,
        None => IdMap::default(),
    };
    let report = ingest_annotations(&a.export, &map).usage()?;
    let run_dir = rundir::prepare(g, &cfg, "ingest").usage()?;
    save_dataset(run_dir.join("human_scores.jsonl"), &report.human_scores).runtime()?;
    save_dataset(run_dir.join("pairwise_choices.jsonl"), &report.choices).runtime()?;
    write_json(
        &run_dir.join("ingest_report.json"),
        &serde_json::json!({ "skipped": report.skipped, "errors": report.errors }),
    )?;
    println!(
        "human scores: {}  pairwise choices: {}  skipped: {}  errors: {}",
        report.human_scores.len(),
        report.choices.len(),
        report.skipped.len(),
        report.errors.len()
    );
    for s in report.skipped.iter().chain(&report.errors) {
        println!("  task {}: {}", s.task_id, s.reason);
    }
    println!("output: {}", run_dir.display());
    Ok(())
}
