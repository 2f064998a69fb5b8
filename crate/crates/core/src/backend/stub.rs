//! Table-driven offline backend.
//!
//! A [`StubScript`] is an ordered list of rules. The first rule whose regex
//! matches the user prompt answers; its replies are handed out in sequence
//! (per rule, or per distinct prompt) and the last one repeats forever.
//!
//! Reply text may use `$1`/`${name}` for regex captures, `{fp}` for an
//! 8-hex fingerprint of the prompt, images and seed, `{fp_score}` for a
//! fingerprint-derived integer in 1..=5, and `{seed}`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, CallError, ChatRequest, RawCompletion, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StubReply {
    Text {
        text: String,
    },
    Error {
        status: u16,
        #[serde(default)]
        message: String,
    },
    Transport {
        transport: String,
    },
}

impl StubReply {
    pub fn text(t: impl Into<String>) -> Self {
        StubReply::Text { text: t.into() }
    }

    pub fn status(status: u16) -> Self {
        StubReply::Error {
            status,
            message: format!("scripted {status}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceScope {
    /// One reply sequence shared by every call the rule matches.
    #[default]
    Rule,
    /// A separate sequence per distinct prompt (text and images, not seed).
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    pub pattern: String,
    pub replies: Vec<StubReply>,
    #[serde(default)]
    pub scope: SequenceScope,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<StubReply>,
    /// Artificial per-call latency, useful for concurrency probes.
    #[serde(default)]
    pub latency_ms: u64,
}

const BUILTIN_SYNTH: &str = include_str!("../../stubs/synth.json");
const BUILTIN_JUDGE: &str = include_str!("../../stubs/judge.json");
const BUILTIN_HOSTILE: &str = include_str!("../../stubs/hostile.json");

impl StubScript {
    pub fn echo(text: &str) -> Self {
        StubScript {
            default: Some(StubReply::text(text)),
            ..Default::default()
        }
    }

    /// Named scripts shipped with the crate: `synth`, `judge`, `hostile`.
    pub fn builtin(name: &str) -> Option<Self> {
        let raw = match name {
            "synth" => BUILTIN_SYNTH,
            "judge" => BUILTIN_JUDGE,
            "hostile" => BUILTIN_HOSTILE,
            _ => return None,
        };
        Some(serde_json::from_str(raw).expect("builtin stub script is valid"))
    }

    /// Loads `builtin:<name>` or a JSON script file.
    pub fn load(spec: &str, base: Option<&Path>) -> Result<Self, String> {
        if let Some(name) = spec.strip_prefix("builtin:") {
            return StubScript::builtin(name).ok_or_else(|| format!("unknown builtin stub '{name}'"));
        }
        let path = match base {
            Some(b) if Path::new(spec).is_relative() => b.join(spec),
            _ => Path::new(spec).to_path_buf(),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn rule(mut self, pattern: &str, replies: Vec<StubReply>) -> Self {
        self.rules.push(StubRule {
            pattern: pattern.into(),
            replies,
            scope: SequenceScope::Rule,
        });
        self
    }

    pub fn rule_per_prompt(mut self, pattern: &str, replies: Vec<StubReply>) -> Self {
        self.rules.push(StubRule {
            pattern: pattern.into(),
            replies,
            scope: SequenceScope::Prompt,
        });
        self
    }

    pub fn with_latency(mut self, ms: u64) -> Self {
        self.latency_ms = ms;
        self
    }
}

/// One observed call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubCall {
    pub rule: Option<usize>,
    pub reply_index: usize,
    pub fingerprint: String,
    pub seed: Option<u64>,
    pub succeeded: bool,
    pub user_text: String,
}

pub struct StubBackend {
    script: StubScript,
    compiled: Vec<Regex>,
    counters: Mutex<HashMap<(usize, String), usize>>,
    calls: Mutex<Vec<StubCall>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub fn fingerprint(request: &ChatRequest) -> String {
    digest(request, true)
}

fn digest(request: &ChatRequest, with_seed: bool) -> String {
    let mut h = Sha256::new();
    h.update(request.user_text.as_bytes());
    for img in &request.images {
        h.update(&img.bytes);
    }
    if let (true, Some(seed)) = (with_seed, request.params.seed) {
        h.update(seed.to_le_bytes());
    }
    hex::encode(&h.finalize()[..4])
}

impl StubBackend {
    pub fn new(script: StubScript) -> Result<Self, String> {
        let compiled = script
            .rules
            .iter()
            .map(|r| Regex::new(&r.pattern).map_err(|e| format!("stub pattern '{}': {e}", r.pattern)))
            .collect::<Result<_, _>>()?;
        Ok(StubBackend {
            script,
            compiled,
            counters: Mutex::new(HashMap::new()),
            calls: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        })
    }

    pub fn echo(text: &str) -> Self {
        StubBackend::new(StubScript::echo(text)).unwrap()
    }

    pub fn calls(&self) -> Vec<StubCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    /// Highest number of simultaneously executing calls observed.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn answer(&self, request: &ChatRequest) -> (Option<usize>, usize, Result<String, CallError>) {
        let fp = fingerprint(request);
        let expand_tokens = |text: &str| {
            let fp_score = u32::from_str_radix(&fp, 16).unwrap_or(0) % 5 + 1;
            text.replace("{fp}", &fp)
                .replace("{fp_score}", &fp_score.to_string())
                .replace(
                    "{seed}",
                    &request.params.seed.map(|s| s.to_string()).unwrap_or_default(),
                )
        };
        let to_result = |reply: &StubReply, caps: Option<&regex::Captures>| match reply {
            StubReply::Text { text } => {
                let mut out = String::new();
                match caps {
                    Some(c) => c.expand(text, &mut out),
                    None => out.push_str(text),
                }
                Ok(expand_tokens(&out))
            }
            StubReply::Error { status, message } => Err(CallError::from_status(*status, message)),
            StubReply::Transport { transport } => Err(CallError::transient(None, transport.clone())),
        };

        for (idx, (rule, re)) in self.script.rules.iter().zip(&self.compiled).enumerate() {
            let Some(caps) = re.captures(&request.user_text) else {
                continue;
            };
            let key = match rule.scope {
                SequenceScope::Rule => (idx, String::new()),
                // Re-generations of one prompt share a sequence even when reseeded.
                SequenceScope::Prompt => (idx, digest(request, false)),
            };
            let n = {
                let mut counters = self.counters.lock().unwrap();
                let c = counters.entry(key).or_insert(0);
                let n = *c;
                *c += 1;
                n
            };
            let Some(reply) = rule.replies.get(n.min(rule.replies.len().saturating_sub(1))) else {
                return (
                    Some(idx),
                    n,
                    Err(CallError::permanent(None, "stub rule has no replies")),
                );
            };
            return (Some(idx), n, to_result(reply, Some(&caps)));
        }
        match &self.script.default {
            Some(reply) => (None, 0, to_result(reply, None)),
            None => (
                None,
                0,
                Err(CallError::permanent(Some(404), "no stub rule matched the prompt")),
            ),
        }
    }
}

impl Backend for StubBackend {
    fn send(&self, request: &ChatRequest) -> Result<RawCompletion, CallError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if self.script.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.script.latency_ms));
        }
        let (rule, reply_index, result) = self.answer(request);
        self.calls.lock().unwrap().push(StubCall {
            rule,
            reply_index,
            fingerprint: fingerprint(request),
            seed: request.params.seed,
            succeeded: result.is_ok(),
            user_text: request.user_text.clone(),
        });
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result.map(|text| RawCompletion {
            usage: Usage {
                prompt_tokens: request.user_text.split_whitespace().count() as u64,
                completion_tokens: text.split_whitespace().count() as u64,
            },
            text,
        })
    }
}
