//! Synthetic training data construction: rubric brainstorming with an
//! alignment loop, instruction and reference generation, and score-balanced
//! response/feedback generation, checkpointed per unit of work.

mod ledger;
mod stages;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{run_bounded, Client, GenParams, Usage};
use crate::datastore::{media_type_for_path, save_dataset, ImageRef, Record, RubricKind, ScoreRubric, SynthRecord};
use crate::prompt_kit::{PromptBundle, Templates};
use crate::{Error, Result};

pub use ledger::Ledger;
use stages::{image_key, instruction_unit, response_unit, rubric_unit, sample_seeds, Ctx};
pub use stages::{InstructionUnit, ResponseUnit, RubricUnit};

pub const RUBRICS_FILE: &str = "rubrics.jsonl";
pub const INSTRUCTIONS_FILE: &str = "instructions.jsonl";
pub const RECORDS_FILE: &str = "synth_records.jsonl";
pub const QUARANTINE_FILE: &str = "quarantine.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricRecord {
    pub id: String,
    pub image_index: usize,
    pub image: ImageRef,
    pub rubric: ScoreRubric,
    pub brainstorm_call: String,
    pub seed_indices: Vec<usize>,
    pub refinements: u32,
}

impl Record for RubricRecord {
    const KIND: &'static str = "rubric";
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }
    fn validate(&self) -> std::result::Result<(), String> {
        self.rubric.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub rubric_id: String,
    pub image_index: usize,
    pub image: ImageRef,
    pub rubric: ScoreRubric,
    pub instruction: String,
    /// Score-5 anchor generated alongside the instruction.
    pub reference_answer: String,
    /// Sentence count of the reference; responses are asked to match it.
    pub n_sentences: usize,
    pub retries: u32,
}

impl Record for InstructionRecord {
    const KIND: &'static str = "instruction";
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }
    fn validate(&self) -> std::result::Result<(), String> {
        if self.instruction.trim().is_empty() || self.reference_answer.trim().is_empty() {
            return Err(format!("instruction {} has empty text", self.id));
        }
        self.rubric.validate()
    }
}

/// A unit whose score set came back incomplete, with whatever it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub instruction_id: String,
    pub failed_scores: Vec<u8>,
    pub diagnostics: Vec<String>,
    pub records: Vec<SynthRecord>,
}

impl Record for QuarantineRecord {
    const KIND: &'static str = "quarantine";
    fn key(&self) -> Option<String> {
        Some(self.instruction_id.clone())
    }
    fn validate(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub images: Vec<ImageRef>,
    pub seeds_general: Vec<ScoreRubric>,
    pub seeds_domain: Vec<ScoreRubric>,
    pub output_dir: PathBuf,
    pub per_image: usize,
    pub per_rubric: usize,
    pub max_align_iters: u32,
    pub retries: u32,
    pub parallelism: usize,
    pub rng_seed: u64,
    pub params: GenParams,
    pub resume: bool,
    /// Stop after this many units finish in this invocation, leaving the
    /// checkpoint for a later resume.
    pub stop_after: Option<usize>,
}

impl SynthConfig {
    pub fn new(images: Vec<ImageRef>, output_dir: impl Into<PathBuf>) -> Self {
        SynthConfig {
            images,
            seeds_general: Vec::new(),
            seeds_domain: Vec::new(),
            output_dir: output_dir.into(),
            per_image: 3,
            per_rubric: 2,
            max_align_iters: 5,
            retries: 3,
            parallelism: 4,
            rng_seed: 0,
            params: GenParams::default(),
            resume: false,
            stop_after: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::Config("no images to synthesize from".into()));
        }
        if self.per_image == 0 || self.per_rubric == 0 || self.max_align_iters == 0 {
            return Err(Error::Config(
                "per_image, per_rubric and max_align_iters must be positive".into(),
            ));
        }
        self.params.validate().map_err(Error::Config)?;
        if self.seeds_general.is_empty() && self.seeds_domain.is_empty() {
            return Err(Error::Config("no seed rubrics given".into()));
        }
        for (name, pool) in [("general", &self.seeds_general), ("domain", &self.seeds_domain)] {
            if !pool.is_empty() && pool.len() < 4 {
                return Err(Error::Config(format!(
                    "{name} seed set has {} rubrics; brainstorming needs at least 4",
                    pool.len()
                )));
            }
            for (i, r) in pool.iter().enumerate() {
                r.validate()
                    .map_err(|e| Error::Config(format!("{name} seed rubric {}: {e}", i + 1)))?;
            }
        }
        for img in &self.images {
            img.validate().map_err(Error::Config)?;
        }
        Ok(())
    }

    /// Seed pool for image `i`. With both kinds available, even images use
    /// general-purpose seeds and odd images domain-specific ones.
    fn pool_for(&self, i: usize) -> (RubricKind, &[ScoreRubric]) {
        match (self.seeds_general.is_empty(), self.seeds_domain.is_empty()) {
            (false, true) => (RubricKind::GeneralPurpose, &self.seeds_general),
            (true, false) => (RubricKind::DomainSpecific, &self.seeds_domain),
            _ if i.is_multiple_of(2) => (RubricKind::GeneralPurpose, &self.seeds_general),
            _ => (RubricKind::DomainSpecific, &self.seeds_domain),
        }
    }

    /// Everything that determines the output; a resume must match it.
    fn fingerprint(&self, client: &Client) -> serde_json::Value {
        serde_json::json!({
            "backend": client.id().name,
            "model": client.id().model,
            "images": self.images.iter().map(ImageRef::label).collect::<Vec<_>>(),
            "seeds_general": self.seeds_general,
            "seeds_domain": self.seeds_domain,
            "per_image": self.per_image,
            "per_rubric": self.per_rubric,
            "max_align_iters": self.max_align_iters,
            "retries": self.retries,
            "rng_seed": self.rng_seed,
            "params": self.params,
        })
    }
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<ImageRef>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && media_type_for_path(&p).is_some() {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths.into_iter().map(ImageRef::Path).collect())
}

/// Stage-2 brainstorm prompts for every image, for dry runs.
pub fn render_brainstorm_prompts(templates: &Templates, config: &SynthConfig) -> Result<Vec<(String, PromptBundle)>> {
    config.validate()?;
    config
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let (_, pool) = config.pool_for(i);
            let seeds: Vec<ScoreRubric> = sample_seeds(config.rng_seed, i, pool.len())
                .into_iter()
                .map(|k| pool[k].clone())
                .collect();
            Ok((image_key(i), templates.render_rubric_brainstorm(&seeds, img)?))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub images: usize,
    pub rubrics: usize,
    pub instructions: usize,
    pub references: usize,
    pub responses: usize,
    pub feedbacks: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Retries {
    pub align_iterations: u32,
    pub refinements: u32,
    pub instruction_retries: u32,
    pub response_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub unit: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub backend: String,
    pub model: String,
    pub rng_seed: u64,
    pub images_input: usize,
    pub counts: Counts,
    pub score_counts: [usize; 5],
    pub dropped_images: Vec<Diagnostic>,
    pub failed_instructions: Vec<Diagnostic>,
    pub quarantined_units: usize,
    /// Units lost to backend errors rather than model output.
    pub backend_failures: usize,
    pub retries: Retries,
    pub usage: Usage,
    pub started_at: String,
    pub finished_at: String,
}

impl Manifest {
    pub fn has_hard_failures(&self) -> bool {
        self.backend_failures > 0
    }
}

struct Interrupt {
    limit: Option<usize>,
    done: usize,
}

impl Interrupt {
    /// Records one finished unit; false once the limit is reached.
    fn tick(&mut self) -> bool {
        self.done += 1;
        self.limit.is_none_or(|l| self.done < l)
    }

    fn tripped(&self) -> bool {
        self.limit.is_some_and(|l| self.done >= l)
    }
}

/// Runs `work` over pending units, appending each finished one to the ledger.
fn run_stage<T, R>(
    ledger: &Ledger,
    stage: &str,
    pending: Vec<T>,
    parallelism: usize,
    interrupt: &mut Interrupt,
    work: impl Fn(T) -> R + Sync,
    mut store: impl FnMut(R),
) -> Result<()>
where
    T: Send,
    R: Send + Serialize,
{
    let mut write_err = None;
    let results = run_bounded(
        pending,
        parallelism,
        |_, unit| work(unit),
        |_, r: &R| {
            if let Err(e) = ledger.append(stage, r) {
                write_err = Some(e);
                return false;
            }
            interrupt.tick()
        },
    );
    if let Some(e) = write_err {
        return Err(e);
    }
    for r in results.into_iter().flatten() {
        store(r);
    }
    if interrupt.tripped() {
        return Err(Error::Interrupted {
            stage: stage.to_string(),
            completed: interrupt.done,
        });
    }
    Ok(())
}

pub struct SynthOutput {
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

/// Runs stages 2 to 4 and writes datasets, manifest and report to
/// `config.output_dir`. Completed units are read back from the checkpoint
/// when resuming, so a resumed run issues no call twice and produces the same
/// files as an uninterrupted one.
pub fn run_pipeline(client: &Client, templates: &Templates, config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ledger = Ledger::new(out.join(CHECKPOINT_DIR));
    let fingerprint = config.fingerprint(client);
    if ledger.exists() {
        if !config.resume {
            return Err(Error::Config(format!(
                "{} already holds a run; resume it or pick a fresh directory",
                out.display()
            )));
        }
        if ledger.read_config()? != fingerprint {
            return Err(Error::Config(
                "checkpoint was written with a different configuration".into(),
            ));
        }
    } else {
        ledger.write_config(&fingerprint)?;
    }

    let ctx = Ctx {
        client,
        templates,
        params: config.params,
        rng_seed: config.rng_seed,
        per_image: config.per_image,
        max_align_iters: config.max_align_iters,
        retries: config.retries,
    };
    let par = config.parallelism.max(1);
    let mut interrupt = Interrupt {
        limit: config.stop_after,
        done: 0,
    };

    // Stage 2: rubrics per image.
    let mut s2: BTreeMap<String, RubricUnit> = ledger.load("stage2", |u: &RubricUnit| image_key(u.image_index))?;
    let pending: Vec<usize> = (0..config.images.len())
        .filter(|i| !s2.contains_key(&image_key(*i)))
        .collect();
    run_stage(
        &ledger,
        "stage2",
        pending,
        par,
        &mut interrupt,
        |i| {
            let (kind, pool) = config.pool_for(i);
            rubric_unit(&ctx, i, &config.images[i], kind, pool)
        },
        |u| {
            s2.insert(image_key(u.image_index), u);
        },
    )?;
    let rubrics: Vec<RubricRecord> = s2.values().flat_map(|u| u.rubrics.iter().cloned()).collect();
    let rubric_by_id: BTreeMap<&str, &RubricRecord> = rubrics.iter().map(|r| (r.id.as_str(), r)).collect();

    // Stage 3: instructions and references per rubric.
    let mut s3: BTreeMap<String, InstructionUnit> = ledger.load("stage3", |u: &InstructionUnit| u.id.clone())?;
    let pending: Vec<(&RubricRecord, usize)> = rubrics
        .iter()
        .flat_map(|r| (0..config.per_rubric).map(move |j| (r, j)))
        .filter(|(r, j)| !s3.contains_key(&format!("{}-q{j}", r.id)))
        .collect();
    run_stage(
        &ledger,
        "stage3",
        pending,
        par,
        &mut interrupt,
        |(r, j)| instruction_unit(&ctx, r, j),
        |u| {
            s3.insert(u.id.clone(), u);
        },
    )?;
    let instructions: Vec<InstructionRecord> = s3.values().filter_map(|u| u.record.clone()).collect();

    // Stage 4: one response and feedback per score level.
    let mut s4: BTreeMap<String, ResponseUnit> = ledger.load("stage4", |u: &ResponseUnit| u.instruction_id.clone())?;
    let pending: Vec<&InstructionRecord> = instructions.iter().filter(|i| !s4.contains_key(&i.id)).collect();
    run_stage(
        &ledger,
        "stage4",
        pending,
        par,
        &mut interrupt,
        |inst| response_unit(&ctx, inst, rubric_by_id[inst.rubric_id.as_str()]),
        |u| {
            s4.insert(u.instruction_id.clone(), u);
        },
    )?;

    let mut records: Vec<SynthRecord> = Vec::new();
    let mut quarantine = Vec::new();
    for u in s4.values() {
        if u.complete() {
            records.extend(u.records.iter().cloned());
        } else {
            quarantine.push(QuarantineRecord {
                instruction_id: u.instruction_id.clone(),
                failed_scores: u.failed_scores.clone(),
                diagnostics: u.diagnostics.clone(),
                records: u.records.clone(),
            });
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));

    save_dataset(out.join(RUBRICS_FILE), &rubrics)?;
    save_dataset(out.join(INSTRUCTIONS_FILE), &instructions)?;
    save_dataset(out.join(RECORDS_FILE), &records)?;
    save_dataset(out.join(QUARANTINE_FILE), &quarantine)?;

    let mut usage = Usage::default();
    let mut retries = Retries::default();
    let mut backend_failures = 0;
    let mut dropped_images = Vec::new();
    for u in s2.values() {
        usage.add(u.usage);
        retries.align_iterations += u.align_iterations;
        retries.refinements += u.refinements;
        backend_failures += usize::from(u.backend_failure);
        if u.rubrics.is_empty() {
            dropped_images.push(Diagnostic {
                unit: image_key(u.image_index),
                message: u.diagnostic.clone().unwrap_or_default(),
            });
        }
    }
    let mut failed_instructions = Vec::new();
    for u in s3.values() {
        usage.add(u.usage);
        retries.instruction_retries += u.retries;
        backend_failures += usize::from(u.backend_failure);
        if u.record.is_none() {
            failed_instructions.push(Diagnostic {
                unit: u.id.clone(),
                message: u.diagnostic.clone().unwrap_or_default(),
            });
        }
    }
    for u in s4.values() {
        usage.add(u.usage);
        retries.response_retries += u.retries;
        backend_failures += usize::from(u.backend_failure);
    }
    let mut score_counts = [0usize; 5];
    for r in &records {
        score_counts[usize::from(r.target_score) - 1] += 1;
    }
    let manifest = Manifest {
        backend: client.id().name.clone(),
        model: client.id().model.clone(),
        rng_seed: config.rng_seed,
        images_input: config.images.len(),
        counts: Counts {
            images: s2.values().filter(|u| !u.rubrics.is_empty()).count(),
            rubrics: rubrics.len(),
            instructions: instructions.len(),
            references: instructions.len(),
            responses: records.len(),
            feedbacks: records.iter().filter(|r| !r.feedback.is_empty()).count(),
        },
        score_counts,
        dropped_images,
        failed_instructions,
        quarantined_units: quarantine.len(),
        backend_failures,
        retries,
        usage,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    let path = out.join(REPORT_FILE);
    fs::write(&path, render_report(&manifest)).map_err(|e| Error::io(&path, e))?;
    Ok(SynthOutput {
        manifest,
        output_dir: out.clone(),
    })
}

pub fn render_report(m: &Manifest) -> String {
    let mut s = String::new();
    let c = &m.counts;
    let _ = writeln!(s, "backend: {} ({}), seed {}", m.backend, m.model, m.rng_seed);
    let _ = writeln!(s, "{:<14} {:>8} {:>10}", "component", "count", "per image");
    let per = |n: usize| {
        if c.images == 0 {
            "-".to_string()
        } else {
            format!("{:.1}", n as f64 / c.images as f64)
        }
    };
    for (name, n) in [
        ("images", c.images),
        ("rubrics", c.rubrics),
        ("instructions", c.instructions),
        ("references", c.references),
        ("responses", c.responses),
        ("feedbacks", c.feedbacks),
    ] {
        let _ = writeln!(s, "{name:<14} {n:>8} {:>10}", per(n));
    }
    let _ = writeln!(s, "score levels 1..5: {:?}", m.score_counts);
    let _ = writeln!(
        s,
        "dropped images: {}, failed instructions: {}, quarantined units: {}, backend failures: {}",
        m.dropped_images.len(),
        m.failed_instructions.len(),
        m.quarantined_units,
        m.backend_failures
    );
    let r = &m.retries;
    let _ = writeln!(
        s,
        "alignment iterations: {}, refinements: {}, instruction retries: {}, response retries: {}",
        r.align_iterations, r.refinements, r.instruction_retries, r.response_retries
    );
    let _ = writeln!(
        s,
        "tokens: {} prompt, {} completion",
        m.usage.prompt_tokens, m.usage.completion_tokens
    );
    for d in m.dropped_images.iter().chain(&m.failed_instructions) {
        let _ = writeln!(s, "  {}: {}", d.unit, d.message);
    }
    s
}
