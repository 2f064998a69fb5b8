//! Prompt rendering from text templates with `{name}` placeholders.
//!
//! The shipped templates live in `templates/` and are compiled in; a
//! directory of same-named files can replace any of them at runtime.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::datastore::{EvalInstance, ImageRef, ResponseRecord, ScoreRubric, SCORE_LEVELS};
use crate::error::{Error, Result};

/// Environment variable naming a template override directory.
pub const TEMPLATE_DIR_ENV: &str = "VISJUDGE_TEMPLATES";

/// Instruction used for captioning benchmarks that carry no instruction.
pub const CAPTION_PROMPT: &str = "Generate a coco-style caption.";

/// Text and images of one chat request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_text: Option<String>,
    pub user_text: String,
    pub images: Vec<ImageRef>,
}

impl PromptBundle {
    pub fn user(text: impl Into<String>, images: Vec<ImageRef>) -> Self {
        PromptBundle {
            system_text: None,
            user_text: text.into(),
            images,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateName {
    Evaluation,
    RubricBrainstorm,
    AlignmentCheck,
    RubricRefine,
    InstructionGen,
    ResponseFeedbackGen,
}

impl TemplateName {
    pub const ALL: [TemplateName; 6] = [
        TemplateName::Evaluation,
        TemplateName::RubricBrainstorm,
        TemplateName::AlignmentCheck,
        TemplateName::RubricRefine,
        TemplateName::InstructionGen,
        TemplateName::ResponseFeedbackGen,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateName::Evaluation => "evaluation.txt",
            TemplateName::RubricBrainstorm => "rubric_brainstorm.txt",
            TemplateName::AlignmentCheck => "alignment_check.txt",
            TemplateName::RubricRefine => "rubric_refine.txt",
            TemplateName::InstructionGen => "instruction_gen.txt",
            TemplateName::ResponseFeedbackGen => "response_feedback_gen.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateName::Evaluation => include_str!("../templates/evaluation.txt"),
            TemplateName::RubricBrainstorm => include_str!("../templates/rubric_brainstorm.txt"),
            TemplateName::AlignmentCheck => include_str!("../templates/alignment_check.txt"),
            TemplateName::RubricRefine => include_str!("../templates/rubric_refine.txt"),
            TemplateName::InstructionGen => include_str!("../templates/instruction_gen.txt"),
            TemplateName::ResponseFeedbackGen => {
                include_str!("../templates/response_feedback_gen.txt")
            }
        }
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
}

/// Names of all `{placeholder}` slots in `text`, in order of appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    placeholder_re().captures_iter(text).map(|c| c[1].to_string()).collect()
}

/// Single-pass substitution; substituted values are never rescanned.
/// Every slot in the template must have a value.
pub fn fill(template: &str, values: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut last = 0;
    for cap in placeholder_re().captures_iter(template) {
        let whole = cap.get(0).unwrap();
        let name = &cap[1];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Render(format!("no value for placeholder {{{name}}}")))?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Templates {
    texts: [String; 6],
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            texts: TemplateName::ALL.map(|t| normalize(t.builtin())),
        }
    }
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n").trim_end().to_string()
}

impl Templates {
    /// Loads overrides from `dir`; files that are absent keep the builtin text.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = Templates::default();
        for (slot, name) in set.texts.iter_mut().zip(TemplateName::ALL) {
            let path = dir.join(name.file_name());
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                *slot = normalize(&text);
            }
        }
        Ok(set)
    }

    /// Builtins, or the directory named by [`TEMPLATE_DIR_ENV`] when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(TEMPLATE_DIR_ENV) {
            Some(dir) => Templates::from_dir(dir),
            None => Ok(Templates::default()),
        }
    }

    pub fn text(&self, name: TemplateName) -> &str {
        &self.texts[TemplateName::ALL.iter().position(|t| *t == name).unwrap()]
    }

    pub fn render_eval_prompt(&self, instance: &EvalInstance, response: &ResponseRecord) -> Result<PromptBundle> {
        let rubric = &instance.rubric;
        rubric
            .validate()
            .map_err(|e| Error::Render(format!("instance {}: {e}", instance.id)))?;
        let instruction = effective_instruction(instance);
        let text = fill(
            self.text(TemplateName::Evaluation),
            &[
                ("instruction", instruction),
                ("response", &response.text),
                ("reference_answer", &instance.reference_answer),
                ("criteria", &rubric.criteria),
                ("score1_description", rubric.level(1)),
                ("score2_description", rubric.level(2)),
                ("score3_description", rubric.level(3)),
                ("score4_description", rubric.level(4)),
                ("score5_description", rubric.level(5)),
            ],
        )?;
        Ok(PromptBundle::user(text, vec![instance.image.clone()]))
    }

    pub fn render_rubric_brainstorm(&self, seeds: &[ScoreRubric], image: &ImageRef) -> Result<PromptBundle> {
        if seeds.len() != 4 {
            return Err(Error::Render(format!(
                "brainstorm needs exactly 4 seed rubrics, got {}",
                seeds.len()
            )));
        }
        if seeds.iter().any(|s| s.kind != seeds[0].kind) {
            return Err(Error::Render(
                "brainstorm seeds mix general-purpose and domain-specific rubrics".into(),
            ));
        }
        let json: Vec<String> = seeds.iter().map(rubric_prompt_json).collect();
        let text = fill(
            self.text(TemplateName::RubricBrainstorm),
            &[
                ("example_criteria_1", &json[0]),
                ("example_criteria_2", &json[1]),
                ("example_criteria_3", &json[2]),
                ("example_criteria_4", &json[3]),
            ],
        )?;
        Ok(PromptBundle::user(text, vec![image.clone()]))
    }

    pub fn render_alignment_check(&self, rubric: &ScoreRubric, image: &ImageRef) -> Result<PromptBundle> {
        self.render_with_rubric(TemplateName::AlignmentCheck, rubric, image)
    }

    pub fn render_rubric_refine(&self, rubric: &ScoreRubric, image: &ImageRef) -> Result<PromptBundle> {
        self.render_with_rubric(TemplateName::RubricRefine, rubric, image)
    }

    pub fn render_instruction_gen(&self, rubric: &ScoreRubric, image: &ImageRef) -> Result<PromptBundle> {
        self.render_with_rubric(TemplateName::InstructionGen, rubric, image)
    }

    pub fn render_response_feedback_gen(
        &self,
        instruction: &str,
        rubric: &ScoreRubric,
        reference: &str,
        target_score: u8,
        n_sentences: usize,
        image: &ImageRef,
    ) -> Result<PromptBundle> {
        if !SCORE_LEVELS.contains(&target_score) {
            return Err(Error::Render(format!("target score {target_score} outside 1..5")));
        }
        if n_sentences == 0 {
            return Err(Error::Render("sentence count must be at least 1".into()));
        }
        rubric.validate().map_err(Error::Render)?;
        let score = target_score.to_string();
        let n = n_sentences.to_string();
        let rubric_json = rubric_prompt_json(rubric);
        let text = fill(
            self.text(TemplateName::ResponseFeedbackGen),
            &[
                ("score", &score),
                ("instruction", instruction),
                ("rubric", &rubric_json),
                ("response", reference),
                ("number_of_sentences", &n),
            ],
        )?;
        Ok(PromptBundle::user(text, vec![image.clone()]))
    }

    fn render_with_rubric(&self, name: TemplateName, rubric: &ScoreRubric, image: &ImageRef) -> Result<PromptBundle> {
        rubric.validate().map_err(Error::Render)?;
        let text = fill(self.text(name), &[("rubric", &rubric_prompt_json(rubric))])?;
        Ok(PromptBundle::user(text, vec![image.clone()]))
    }
}

/// The instruction shown to judges and responders.
pub fn effective_instruction(instance: &EvalInstance) -> &str {
    if instance.instruction.trim().is_empty() && instance.is_captioning() {
        CAPTION_PROMPT
    } else {
        &instance.instruction
    }
}

/// Compact single-object JSON in the flat `scoreN_description` layout that
/// generation prompts show to the model.
pub fn rubric_prompt_json(rubric: &ScoreRubric) -> String {
    let mut obj = Map::new();
    obj.insert("criteria".into(), json!(rubric.criteria));
    for level in SCORE_LEVELS {
        obj.insert(format!("score{level}_description"), json!(rubric.level(level)));
    }
    Value::Object(obj).to_string()
}

/// Counts sentences: segments ending in `.`, `!` or `?` followed by
/// whitespace or end of text, ignoring empty segments. Trailing text without
/// a terminator counts as one more sentence.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut has_content = false;
    for (i, &c) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
            if at_boundary {
                if has_content {
                    count += 1;
                }
                has_content = false;
                continue;
            }
        }
        if c.is_alphanumeric() {
            has_content = true;
        }
    }
    if has_content {
        count += 1;
    }
    count
}
