//! Rubric-conditioned judging of responder outputs, with repeats.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::backend::{derive_seed, run_bounded, BackendError, Client, CompletionResult, GenParams, Usage};
use crate::datastore::{EvalInstance, Judgment, JudgmentStatus, ResponseRecord};
use crate::parser::{parse_judgment, ExtractionRule};
use crate::prompt_kit::{effective_instruction, PromptBundle, Templates};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRunSpec {
    pub repeats: u32,
    pub params: GenParams,
    /// Re-generations allowed after an unparseable output.
    pub parse_retries: u32,
    pub parallelism: usize,
    /// Run seed. With a seed every (response, repeat) call gets its own derived
    /// seed; without one, calls never read the cache.
    pub seed: Option<u64>,
}

impl Default for JudgeRunSpec {
    fn default() -> Self {
        JudgeRunSpec {
            repeats: 3,
            params: GenParams::default(),
            parse_retries: 3,
            parallelism: 4,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeRunReport {
    pub judge: String,
    pub judgments: usize,
    pub repeats: u32,
    pub by_status: BTreeMap<String, usize>,
    pub by_extraction_rule: BTreeMap<String, usize>,
    /// Extra generations issued because an output did not parse.
    pub parse_regenerations: usize,
    pub cache_hits: usize,
    pub usage: Usage,
}

fn status_name(s: JudgmentStatus) -> &'static str {
    match s {
        JudgmentStatus::Ok => "ok",
        JudgmentStatus::ParseFailed => "parse_failed",
        JudgmentStatus::BackendFailed => "backend_failed",
    }
}

fn rule_name(r: ExtractionRule) -> &'static str {
    match r {
        ExtractionRule::ResultMarker => "result_marker",
        ExtractionRule::OverallPhrase => "overall_phrase",
    }
}

struct Outcome {
    judgment: Judgment,
    regenerations: usize,
    cache_hits: usize,
    usage: Usage,
}

fn call(
    client: &Client,
    bundle: &PromptBundle,
    params: &GenParams,
    fresh: bool,
) -> std::result::Result<CompletionResult, BackendError> {
    if fresh {
        client.complete_fresh(bundle, params)
    } else {
        client.complete(bundle, params)
    }
}

fn judge_one(
    client: &Client,
    bundle: &PromptBundle,
    response: &ResponseRecord,
    repeat: u32,
    spec: &JudgeRunSpec,
) -> Outcome {
    let unit = format!("judge/{}/{}/{}", response.instance_id, response.responder_id, repeat);
    let mut out = Outcome {
        judgment: Judgment {
            instance_id: response.instance_id.clone(),
            responder_id: response.responder_id.clone(),
            judge_id: client.id().name.clone(),
            repeat_index: repeat,
            feedback: String::new(),
            score: None,
            raw_output: String::new(),
            status: JudgmentStatus::ParseFailed,
            extraction_rule: None,
            detail: None,
            extra: Default::default(),
        },
        regenerations: 0,
        cache_hits: 0,
        usage: Usage::default(),
    };
    for attempt in 0..=spec.parse_retries {
        let seed = spec.seed.map(|s| derive_seed(s, &format!("{unit}/{attempt}")));
        let params = spec.params.with_seed(seed);
        // Unseeded repeats must be real samples, and a cached unparseable
        // output would only repeat itself.
        let fresh = spec.seed.is_none() || attempt > 0;
        if attempt > 0 {
            out.regenerations += 1;
        }
        match call(client, bundle, &params, fresh) {
            Err(e) => {
                let j = &mut out.judgment;
                j.status = JudgmentStatus::BackendFailed;
                j.detail = Some(e.to_string());
                return out;
            }
            Ok(c) => {
                out.usage.add(c.usage);
                out.cache_hits += usize::from(c.cache_hit);
                let j = &mut out.judgment;
                match parse_judgment(&c.text) {
                    Ok(p) => {
                        j.feedback = p.feedback;
                        j.score = Some(p.score);
                        j.extraction_rule = Some(p.extraction_rule);
                        j.status = JudgmentStatus::Ok;
                        j.detail = None;
                        j.raw_output = c.text;
                        return out;
                    }
                    Err(e) => {
                        j.raw_output = c.text;
                        j.detail = Some(format!("attempt {}: {e}", attempt + 1));
                    }
                }
            }
        }
    }
    out
}

/// Judges every response `spec.repeats` times. Each (response, repeat) pair
/// yields exactly one Judgment, whatever its status; output is sorted by
/// instance, responder and repeat.
pub fn run_judging(
    client: &Client,
    templates: &Templates,
    instances: &[EvalInstance],
    responses: &[ResponseRecord],
    spec: &JudgeRunSpec,
) -> Result<(Vec<Judgment>, JudgeRunReport)> {
    if spec.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    spec.params.validate().map_err(Error::Config)?;
    let by_id: HashMap<&str, &EvalInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut bundles = Vec::with_capacity(responses.len());
    for r in responses {
        let inst = by_id.get(r.instance_id.as_str()).ok_or_else(|| {
            Error::Invalid(format!(
                "response from '{}' references unknown instance '{}'",
                r.responder_id, r.instance_id
            ))
        })?;
        bundles.push(templates.render_eval_prompt(inst, r)?);
    }

    let jobs: Vec<(usize, u32)> = (0..responses.len())
        .flat_map(|i| (0..spec.repeats).map(move |k| (i, k)))
        .collect();
    let outcomes = run_bounded(
        jobs,
        spec.parallelism.max(1),
        |_, (i, k)| judge_one(client, &bundles[i], &responses[i], k, spec),
        |_, _| true,
    );

    let mut report = JudgeRunReport {
        judge: client.id().name.clone(),
        repeats: spec.repeats,
        ..Default::default()
    };
    let mut judgments = Vec::with_capacity(outcomes.len());
    for o in outcomes.into_iter().map(|o| o.expect("every job runs")) {
        *report
            .by_status
            .entry(status_name(o.judgment.status).into())
            .or_default() += 1;
        if let Some(rule) = o.judgment.extraction_rule {
            *report.by_extraction_rule.entry(rule_name(rule).into()).or_default() += 1;
        }
        report.parse_regenerations += o.regenerations;
        report.cache_hits += o.cache_hits;
        report.usage.add(o.usage);
        judgments.push(o.judgment);
    }
    judgments.sort_by(|a, b| {
        (&a.instance_id, &a.responder_id, a.repeat_index).cmp(&(&b.instance_id, &b.responder_id, b.repeat_index))
    });
    report.judgments = judgments.len();
    Ok((judgments, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub instance_id: String,
    pub error: String,
}

/// One response per instance from a responder model. The prompt is the
/// instance instruction (the caption prompt for captioning instances without
/// one) with the image attached. Failures are collected, not fatal.
pub fn sample_responses(
    client: &Client,
    instances: &[EvalInstance],
    responder_id: &str,
    params: &GenParams,
    parallelism: usize,
) -> (Vec<ResponseRecord>, Vec<SampleFailure>) {
    let results = run_bounded(
        instances.iter().collect::<Vec<_>>(),
        parallelism.max(1),
        |_, inst| {
            let bundle = PromptBundle::user(effective_instruction(inst), vec![inst.image.clone()]);
            client.complete(&bundle, params)
        },
        |_, _| true,
    );
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (inst, r) in instances.iter().zip(results) {
        match r.expect("every job runs") {
            Ok(c) => records.push(ResponseRecord {
                instance_id: inst.id.clone(),
                responder_id: responder_id.to_string(),
                text: c.text,
                gen_params: *params,
                extra: Default::default(),
            }),
            Err(e) => failures.push(SampleFailure {
                instance_id: inst.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    (records, failures)
}
