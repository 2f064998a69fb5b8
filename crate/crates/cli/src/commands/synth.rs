use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use visjudge_core::datastore::{load_dataset, RubricKind, ScoreRubric};
use visjudge_core::synthesis::{list_images, render_brainstorm_prompts, run_pipeline, SynthConfig};
use visjudge_core::Error;

use super::{usage_err, write_text, Classify, CmdResult, Failure};
use crate::config::RunConfig;
use crate::{rundir, GlobalArgs};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
    /// General-purpose seed rubrics (line-delimited).
    #[arg(long)]
    pub seeds_general: Option<PathBuf>,
    /// Domain-specific seed rubrics (line-delimited).
    #[arg(long)]
    pub seeds_domain: Option<PathBuf>,
    /// Backend name from the config, or `stub:<script>`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub per_image: Option<usize>,
    #[arg(long)]
    pub per_rubric: Option<usize>,
    #[arg(long)]
    pub max_align_iters: Option<u32>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Stop after this many units and leave the checkpoint (testing aid).
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

fn load_seeds(path: &PathBuf, kind: RubricKind) -> anyhow::Result<Vec<ScoreRubric>> {
    let mut seeds: Vec<ScoreRubric> = load_dataset(path)?;
    for s in &mut seeds {
        s.kind = kind;
    }
    Ok(seeds)
}

pub fn run(g: &GlobalArgs, a: &SynthArgs) -> CmdResult {
    let cfg = RunConfig::load(g.config.as_deref()).usage()?;
    let sec = &cfg.synth;
    let from_cfg = |p: &Option<PathBuf>| p.as_ref().map(|p| cfg.resolve(p));
    let images_dir = a
        .images_dir
        .clone()
        .or_else(|| from_cfg(&sec.images_dir))
        .ok_or_else(|| usage_err("no images_dir given"))?;
    if !images_dir.is_dir() {
        return Err(usage_err(format!(
            "images_dir {} is not a directory",
            images_dir.display()
        )));
    }
    let images = list_images(&images_dir).usage()?;
    let general = a.seeds_general.clone().or_else(|| from_cfg(&sec.seeds_general));
    let domain = a.seeds_domain.clone().or_else(|| from_cfg(&sec.seeds_domain));
    let backend = a
        .backend
        .clone()
        .or_else(|| sec.backend.clone())
        .ok_or_else(|| usage_err("no synthesis backend given"))?;

    let run_dir = rundir::prepare(g, &cfg, "synth").usage()?;
    let mut sc = SynthConfig::new(images, &run_dir);
    if let Some(p) = &general {
        sc.seeds_general = load_seeds(p, RubricKind::GeneralPurpose).usage()?;
    }
    if let Some(p) = &domain {
        sc.seeds_domain = load_seeds(p, RubricKind::DomainSpecific).usage()?;
    }
    sc.per_image = a.per_image.or(sec.per_image).unwrap_or(sc.per_image);
    sc.per_rubric = a.per_rubric.or(sec.per_rubric).unwrap_or(sc.per_rubric);
    sc.max_align_iters = a.max_align_iters.or(sec.max_align_iters).unwrap_or(sc.max_align_iters);
    sc.retries = a.retries.or(sec.retries).unwrap_or(sc.retries);
    sc.parallelism = g.parallelism.or(cfg.parallelism).unwrap_or(sc.parallelism);
    sc.rng_seed = g.seed.or(cfg.seed).unwrap_or(0);
    sc.params = sec.sampling.params();
    sc.resume = g.resume;
    sc.stop_after = a.stop_after;
    sc.validate().usage()?;
    let templates = cfg.templates().usage()?;

    if g.dry_run {
        let dir = run_dir.join("prompts");
        std::fs::create_dir_all(&dir)
            .context("creating prompts dir")
            .runtime()?;
        let prompts = render_brainstorm_prompts(&templates, &sc).usage()?;
        for (key, bundle) in &prompts {
            write_text(&dir.join(format!("{key}-brainstorm.txt")), &bundle.user_text)?;
        }
        println!("rendered {} brainstorm prompts into {}", prompts.len(), dir.display());
        return Ok(());
    }

    let client = cfg
        .client(&backend, sc.rng_seed, Some(images_dir.clone()), false)
        .usage()?;
    match run_pipeline(&client, &templates, &sc) {
        Ok(out) => {
            print!("{}", visjudge_core::synthesis::render_report(&out.manifest));
            println!("output: {}", out.output_dir.display());
            if out.manifest.has_hard_failures() {
                return Err(Failure::Runtime(anyhow!(
                    "{} units failed on backend errors",
                    out.manifest.backend_failures
                )));
            }
            Ok(())
        }
        Err(e @ Error::Interrupted { .. }) => Err(Failure::Runtime(anyhow!(
            "{e}; continue with --resume --run-dir {}",
            run_dir.display()
        ))),
        Err(e @ (Error::Config(_) | Error::Invalid(_) | Error::Dataset { .. })) => Err(Failure::Usage(e.into())),
        Err(e) => Err(Failure::Runtime(e.into())),
    }
}
