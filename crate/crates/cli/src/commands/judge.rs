use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use visjudge_core::datastore::{load_dataset, save_dataset, EvalInstance, ResponseRecord};
use visjudge_core::judge::{run_judging, sample_responses, JudgeRunSpec};
use visjudge_core::prompt_kit::effective_instruction;

use super::{usage_err, write_json, write_text, Classify, CmdResult};
use crate::config::RunConfig;
use crate::{rundir, GlobalArgs};

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Benchmark instances (line-delimited).
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Responses to judge.
    #[arg(long, conflicts_with = "responder")]
    pub responses: Option<PathBuf>,
    /// Backend that produces fresh responses instead of --responses.
    #[arg(long)]
    pub responder: Option<String>,
    /// Judge backend name, or `stub:<script>`.
    #[arg(long)]
    pub judge: Option<String>,
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Re-generations after an unparseable judge output.
    #[arg(long)]
    pub parse_retries: Option<u32>,
}

pub fn run(g: &GlobalArgs, a: &JudgeArgs) -> CmdResult {
    let cfg = RunConfig::load(g.config.as_deref()).usage()?;
    let sec = &cfg.judge;
    let benchmark = a
        .benchmark
        .clone()
        .or_else(|| sec.benchmark.as_ref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| usage_err("no benchmark given"))?;
    let responses_path = a
        .responses
        .clone()
        .or_else(|| sec.responses.as_ref().map(|p| cfg.resolve(p)));
    let responder = a.responder.clone().or_else(|| sec.responder.clone());
    let judge = a
        .judge
        .clone()
        .or_else(|| sec.judge.clone())
        .ok_or_else(|| usage_err("no judge backend given"))?;
    let repeats = a.repeats.or(sec.repeats).unwrap_or(3);
    if repeats == 0 {
        return Err(usage_err("--repeats must be at least 1"));
    }
    let seed = g.seed.or(cfg.seed);
    let parallelism = g.parallelism.or(cfg.parallelism).unwrap_or(4);

    let instances: Vec<EvalInstance> = load_dataset(&benchmark).usage()?;
    let image_base = benchmark.parent().map(PathBuf::from);
    let templates = cfg.templates().usage()?;
    let params = sec.sampling.params();
    params.validate().map_err(usage_err)?;
    let spec = JudgeRunSpec {
        repeats,
        params,
        parse_retries: a.parse_retries.or(sec.parse_retries).unwrap_or(3),
        parallelism,
        seed,
    };
    let judge_client = cfg
        .client(&judge, seed.unwrap_or(0), image_base.clone(), g.dry_run)
        .usage()?;
    let responder_client = match (&responses_path, &responder) {
        (Some(_), _) => None,
        (None, Some(r)) => Some(
            cfg.client(r, seed.unwrap_or(0), image_base.clone(), g.dry_run)
                .usage()?,
        ),
        (None, None) => return Err(usage_err("give --responses or --responder")),
    };
    let run_dir = rundir::prepare(g, &cfg, "judge").usage()?;

    if g.dry_run {
        let dir = run_dir.join("prompts");
        std::fs::create_dir_all(&dir)
            .context("creating prompts dir")
            .runtime()?;
        let mut n = 0;
        match &responses_path {
            Some(p) => {
                let responses: Vec<ResponseRecord> = load_dataset(p).usage()?;
                let by_id: std::collections::HashMap<&str, &EvalInstance> =
                    instances.iter().map(|i| (i.id.as_str(), i)).collect();
                for r in &responses {
                    let inst = by_id
                        .get(r.instance_id.as_str())
                        .ok_or_else(|| usage_err(format!("response for unknown instance '{}'", r.instance_id)))?;
                    let b = templates.render_eval_prompt(inst, r).usage()?;
                    write_text(
                        &dir.join(format!("{}__{}.txt", r.instance_id, r.responder_id)),
                        &b.user_text,
                    )?;
                    n += 1;
                }
            }
            None => {
                for inst in &instances {
                    write_text(
                        &dir.join(format!("{}__respond.txt", inst.id)),
                        effective_instruction(inst),
                    )?;
                    n += 1;
                }
            }
        }
        println!("rendered {n} prompts into {}", dir.display());
        return Ok(());
    }

    let responses: Vec<ResponseRecord> = match (&responses_path, &responder_client) {
        (Some(p), _) => load_dataset(p).usage()?,
        (None, Some(client)) => {
            let mut p = params;
            p.seed = seed;
            let (records, failures) = sample_responses(client, &instances, &client.id().name, &p, parallelism);
            for f in &failures {
                eprintln!("warning: no response for {}: {}", f.instance_id, f.error);
            }
            save_dataset(run_dir.join("responses.jsonl"), &records).runtime()?;
            records
        }
        (None, None) => unreachable!(),
    };

    let (judgments, report) = match run_judging(&judge_client, &templates, &instances, &responses, &spec) {
        Ok(r) => r,
        Err(
            e @ (visjudge_core::Error::Invalid(_) | visjudge_core::Error::Config(_) | visjudge_core::Error::Render(_)),
        ) => return Err(super::Failure::Usage(e.into())),
        Err(e) => return Err(super::Failure::Runtime(e.into())),
    };
    save_dataset(run_dir.join("judgments.jsonl"), &judgments).runtime()?;
    write_json(&run_dir.join("run_report.json"), &report)?;

    println!(
        "judge: {}  responses: {}  repeats: {}",
        report.judge,
        responses.len(),
        report.repeats
    );
    println!("judgments: {}", report.judgments);
    for (status, n) in &report.by_status {
        println!("  {status:<15} {n}");
    }
    for (rule, n) in &report.by_extraction_rule {
        println!("  rule {rule:<10} {n}");
    }
    println!(
        "parse re-generations: {}  tokens: {} prompt, {} completion",
        report.parse_regenerations, report.usage.prompt_tokens, report.usage.completion_tokens
    );
    println!("output: {}", run_dir.display());
    Ok(())
}
