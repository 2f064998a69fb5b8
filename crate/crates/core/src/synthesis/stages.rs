use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InstructionRecord, RubricRecord};
use crate::backend::{derive_seed, BackendError, Client, GenParams, Usage};
use crate::datastore::{ImageRef, Lineage, RubricKind, ScoreRubric, SynthRecord, SCORE_LEVELS};
use crate::parser::{parse_alignment, parse_problem_response, parse_response_feedback, parse_rubric_json, Alignment};
use crate::prompt_kit::{count_sentences, PromptBundle, Templates};

/// Shared per-run settings for unit workers.
pub(super) struct Ctx<'a> {
    pub client: &'a Client,
    pub templates: &'a Templates,
    pub params: GenParams,
    pub rng_seed: u64,
    pub per_image: usize,
    pub max_align_iters: u32,
    pub retries: u32,
}

impl Ctx<'_> {
    /// Seeded call; re-generations (attempt > 0) skip the cache.
    fn call(
        &self,
        bundle: &PromptBundle,
        label: &str,
        attempt: u32,
        usage: &mut Usage,
    ) -> Result<String, BackendError> {
        let params = self
            .params
            .with_seed(Some(derive_seed(self.rng_seed, &format!("{label}/{attempt}"))));
        let r = if attempt == 0 {
            self.client.complete(bundle, &params)?
        } else {
            self.client.complete_fresh(bundle, &params)?
        };
        usage.add(r.usage);
        Ok(r.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricUnit {
    pub image_index: usize,
    pub rubrics: Vec<RubricRecord>,
    pub align_iterations: u32,
    pub refinements: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(default)]
    pub backend_failure: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionUnit {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<InstructionRecord>,
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(default)]
    pub backend_failure: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseUnit {
    pub instruction_id: String,
    pub records: Vec<SynthRecord>,
    pub failed_scores: Vec<u8>,
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(default)]
    pub backend_failure: bool,
    pub usage: Usage,
}

impl ResponseUnit {
    pub fn complete(&self) -> bool {
        self.failed_scores.is_empty()
    }
}

pub(super) fn image_key(i: usize) -> String {
    format!("img{i:04}")
}

/// Draws 4 exemplar indices for image `i`, uniformly without replacement.
pub(super) fn sample_seeds(rng_seed: u64, image_index: usize, pool: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, &format!("seeds/{}", image_key(image_index))));
    sample(&mut rng, pool, 4).into_vec()
}

enum Verdict {
    Accepted { rubric: ScoreRubric, refined: bool },
    Rejected,
}

fn check_candidate(
    ctx: &Ctx,
    cand: ScoreRubric,
    image: &ImageRef,
    label: &str,
    usage: &mut Usage,
) -> Result<Verdict, BackendError> {
    let kind = cand.kind;
    let aligned = |r: &ScoreRubric, tag: &str, usage: &mut Usage| -> Result<bool, BackendError> {
        let bundle = ctx
            .templates
            .render_alignment_check(r, image)
            .map_err(|e| BackendError::Failed(e.to_string()))?;
        let text = ctx.call(&bundle, &format!("{label}/{tag}"), 0, usage)?;
        // An unreadable verdict counts as misaligned.
        Ok(parse_alignment(&text) == Ok(Alignment::Align))
    };
    if cand.validate().is_err() {
        return Ok(Verdict::Rejected);
    }
    if aligned(&cand, "align", usage)? {
        return Ok(Verdict::Accepted {
            rubric: cand,
            refined: false,
        });
    }
    let bundle = ctx
        .templates
        .render_rubric_refine(&cand, image)
        .map_err(|e| BackendError::Failed(e.to_string()))?;
    let text = ctx.call(&bundle, &format!("{label}/refine"), 0, usage)?;
    let Ok(mut refined) = parse_rubric_json(&text, 1).map(|mut v| v.remove(0)) else {
        return Ok(Verdict::Rejected);
    };
    refined.kind = kind;
    if refined.validate().is_err() {
        return Ok(Verdict::Rejected);
    }
    if aligned(&refined, "realign", usage)? {
        Ok(Verdict::Accepted {
            rubric: refined,
            refined: true,
        })
    } else {
        Ok(Verdict::Rejected)
    }
}

/// Brainstorm, check, refine once, and brainstorm again until `per_image`
/// rubrics pass or the iteration cap is hit. Images that fall short are
/// dropped whole.
pub(super) fn rubric_unit(
    ctx: &Ctx,
    image_index: usize,
    image: &ImageRef,
    kind: RubricKind,
    pool: &[ScoreRubric],
) -> RubricUnit {
    let key = image_key(image_index);
    let seed_indices = sample_seeds(ctx.rng_seed, image_index, pool.len());
    let seeds: Vec<ScoreRubric> = seed_indices.iter().map(|&i| pool[i].clone()).collect();
    let mut unit = RubricUnit {
        image_index,
        rubrics: Vec::new(),
        align_iterations: 0,
        refinements: 0,
        diagnostic: None,
        backend_failure: false,
        usage: Usage::default(),
    };
    let bundle = match ctx.templates.render_rubric_brainstorm(&seeds, image) {
        Ok(b) => b,
        Err(e) => {
            unit.diagnostic = Some(e.to_string());
            return unit;
        }
    };
    let mut accepted: Vec<(ScoreRubric, bool, String)> = Vec::new();
    let mut notes = Vec::new();
    let run = (|| -> Result<(), BackendError> {
        for iter in 0..ctx.max_align_iters {
            unit.align_iterations = iter + 1;
            let call_label = format!("s2/{key}/brainstorm/{iter}");
            let text = ctx.call(&bundle, &format!("s2/{key}/brainstorm"), iter, &mut unit.usage)?;
            let candidates = match parse_rubric_json(&text, ctx.per_image) {
                Ok(v) => v,
                Err(e) => {
                    notes.push(format!("iteration {}: {e}", iter + 1));
                    e.partial
                }
            };
            for (c, mut cand) in candidates.into_iter().enumerate() {
                if accepted.len() >= ctx.per_image {
                    break;
                }
                cand.kind = kind;
                let label = format!("s2/{key}/it{iter}/c{c}");
                match check_candidate(ctx, cand, image, &label, &mut unit.usage)? {
                    Verdict::Accepted { rubric, refined } => {
                        unit.refinements += u32::from(refined);
                        accepted.push((rubric, refined, call_label.clone()));
                    }
                    Verdict::Rejected => {}
                }
            }
            if accepted.len() >= ctx.per_image {
                break;
            }
        }
        Ok(())
    })();
    if let Err(e) = run {
        unit.backend_failure = true;
        unit.diagnostic = Some(format!("{key} skipped: {e}"));
        return unit;
    }
    if accepted.len() < ctx.per_image {
        notes.insert(
            0,
            format!(
                "{key} dropped: {} of {} rubrics aligned after {} iterations",
                accepted.len(),
                ctx.per_image,
                ctx.max_align_iters
            ),
        );
        unit.diagnostic = Some(notes.join("; "));
        return unit;
    }
    unit.rubrics = accepted
        .into_iter()
        .enumerate()
        .map(|(k, (rubric, refined, call))| RubricRecord {
            id: format!("{key}-r{k}"),
            image_index,
            image: image.clone(),
            rubric,
            brainstorm_call: call,
            seed_indices: seed_indices.clone(),
            refinements: u32::from(refined),
        })
        .collect();
    unit
}

pub(super) fn instruction_unit(ctx: &Ctx, rubric: &RubricRecord, slot: usize) -> InstructionUnit {
    let id = format!("{}-q{slot}", rubric.id);
    let mut unit = InstructionUnit {
        id: id.clone(),
        record: None,
        retries: 0,
        diagnostic: None,
        backend_failure: false,
        usage: Usage::default(),
    };
    let bundle = match ctx.templates.render_instruction_gen(&rubric.rubric, &rubric.image) {
        Ok(b) => b,
        Err(e) => {
            unit.diagnostic = Some(e.to_string());
            return unit;
        }
    };
    for attempt in 0..=ctx.retries {
        unit.retries = attempt;
        let text = match ctx.call(&bundle, &format!("s3/{id}"), attempt, &mut unit.usage) {
            Ok(t) => t,
            Err(e) => {
                unit.backend_failure = true;
                unit.diagnostic = Some(format!("{id} skipped: {e}"));
                return unit;
            }
        };
        match parse_problem_response(&text) {
            Ok((instruction, reference)) => {
                unit.diagnostic = None;
                unit.record = Some(InstructionRecord {
                    id: id.clone(),
                    rubric_id: rubric.id.clone(),
                    image_index: rubric.image_index,
                    image: rubric.image.clone(),
                    rubric: rubric.rubric.clone(),
                    n_sentences: count_sentences(&reference).max(1),
                    instruction,
                    reference_answer: reference,
                    retries: attempt,
                });
                return unit;
            }
            Err(e) => unit.diagnostic = Some(format!("{id} attempt {}: {e}", attempt + 1)),
        }
    }
    unit
}

pub(super) fn response_unit(ctx: &Ctx, inst: &InstructionRecord, rubric: &RubricRecord) -> ResponseUnit {
    let mut unit = ResponseUnit {
        instruction_id: inst.id.clone(),
        records: Vec::new(),
        failed_scores: Vec::new(),
        retries: 0,
        diagnostics: Vec::new(),
        backend_failure: false,
        usage: Usage::default(),
    };
    for score in SCORE_LEVELS {
        let id = format!("{}-s{score}", inst.id);
        let bundle = match ctx.templates.render_response_feedback_gen(
            &inst.instruction,
            &inst.rubric,
            &inst.reference_answer,
            score,
            inst.n_sentences,
            &inst.image,
        ) {
            Ok(b) => b,
            Err(e) => {
                unit.failed_scores.push(score);
                unit.diagnostics.push(format!("{id}: {e}"));
                continue;
            }
        };
        let mut done = false;
        for attempt in 0..=ctx.retries {
            let text = match ctx.call(&bundle, &format!("s4/{id}"), attempt, &mut unit.usage) {
                Ok(t) => t,
                Err(e) => {
                    unit.backend_failure = true;
                    unit.diagnostics.push(format!("{id}: {e}"));
                    break;
                }
            };
            match parse_response_feedback(&text, score) {
                Ok((response, feedback)) => {
                    unit.records.push(SynthRecord {
                        id: id.clone(),
                        image: inst.image.clone(),
                        rubric: inst.rubric.clone(),
                        instruction: inst.instruction.clone(),
                        reference_answer: inst.reference_answer.clone(),
                        target_score: score,
                        response,
                        feedback,
                        lineage: Lineage {
                            image_index: inst.image_index,
                            rubric_id: inst.rubric_id.clone(),
                            instruction_id: inst.id.clone(),
                            brainstorm_call: rubric.brainstorm_call.clone(),
                            seed_indices: rubric.seed_indices.clone(),
                            refinements: rubric.refinements,
                            instruction_retries: inst.retries,
                            response_retries: attempt,
                        },
                        extra: Default::default(),
                    });
                    done = true;
                    break;
                }
                Err(e) => {
                    unit.retries += 1;
                    unit.diagnostics.push(format!("{id} attempt {}: {e}", attempt + 1));
                }
            }
        }
        if !done {
            unit.failed_scores.push(score);
        }
    }
    // Retries that ended in success are not failures.
    if unit.complete() {
        unit.diagnostics.clear();
    }
    unit
}
