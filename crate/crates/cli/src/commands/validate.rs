use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, ValueEnum};
use visjudge_core::datastore::{
    check_references, check_score_balance, load_dataset, EvalInstance, HumanScore, Judgment, PairwiseChoice,
    ResponseRecord, ScoreRubric, SynthRecord,
};

use super::{CmdResult, Failure};
use crate::GlobalArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Instance,
    Response,
    Judgment,
    Synth,
    Human,
    Choice,
    Rubric,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Benchmark to resolve judgment and response instance ids against.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    pub files: Vec<PathBuf>,
}

fn check(a: &ValidateArgs, path: &PathBuf) -> Result<String, visjudge_core::Error> {
    let instances = match &a.benchmark {
        Some(b) => Some(load_dataset::<EvalInstance>(b)?),
        None => None,
    };
    Ok(match a.kind {
        Kind::Instance => format!("{} instances", load_dataset::<EvalInstance>(path)?.len()),
        Kind::Response => {
            let rs: Vec<ResponseRecord> = load_dataset(path)?;
            if let Some(inst) = &instances {
                let ids: std::collections::HashSet<&str> = inst.iter().map(|i| i.id.as_str()).collect();
                if let Some(r) = rs.iter().find(|r| !ids.contains(r.instance_id.as_str())) {
                    return Err(visjudge_core::Error::Invalid(format!(
                        "response references unknown instance '{}'",
                        r.instance_id
                    )));
                }
            }
            format!("{} responses", rs.len())
        }
        Kind::Judgment => {
            let js: Vec<Judgment> = load_dataset(path)?;
            if let Some(inst) = &instances {
                check_references(inst, &js)?;
            }
            format!("{} judgments", js.len())
        }
        Kind::Synth => {
            let rs: Vec<SynthRecord> = load_dataset(path)?;
            let counts = check_score_balance(&rs)?;
            format!("{} records, per level {counts:?}", rs.len())
        }
        Kind::Human => format!("{} human scores", load_dataset::<HumanScore>(path)?.len()),
        Kind::Choice => format!("{} pairwise choices", load_dataset::<PairwiseChoice>(path)?.len()),
        Kind::Rubric => format!("{} rubrics", load_dataset::<ScoreRubric>(path)?.len()),
    })
}

/// Exit 1 when any file fails its checks, 2 when a file cannot be read.
pub fn run(_g: &GlobalArgs, a: &ValidateArgs) -> CmdResult {
    if a.files.is_empty() {
        return Err(Failure::Usage(anyhow!("no files given")));
    }
    let mut bad = 0;
    for f in &a.files {
        match check(a, f) {
            Ok(msg) => println!("ok      {}: {msg}", f.display()),
            Err(e @ visjudge_core::Error::Io { .. }) => return Err(Failure::Usage(e.into())),
            Err(e) => {
                println!("invalid {}: {e}", f.display());
                bad += 1;
            }
        }
    }
    if bad > 0 {
        return Err(Failure::Runtime(anyhow!("{bad} of {} files invalid", a.files.len())));
    }
    Ok(())
}
