use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{pretty_print, ObservationSchema, RewardProgram};

pub const TASK_SECTION: &str = "Task description";
pub const ENV_SECTION: &str = "Environment description";
pub const OBS_SECTION: &str = "Observation reference";
pub const TIPS_SECTION: &str = "Coding tips and reward grammar";
pub const SAFETY_SECTION: &str = "Safety regulations";
pub const REFERENCE_SECTION: &str = "Reference reward";
pub const FEEDBACK_SECTION: &str = "Feedback";
pub const REPAIR_SECTION: &str = "Repair request";
pub const TRUNCATION_MARKER: &str = "[... earlier feedback truncated ...]";

const SYSTEM_TEXT: &str = "You are a reward engineer for reinforcement learning. \
You write reward programs in a small line-oriented expression language. \
Reply with a short rationale followed by exactly one fenced code block containing the program.";

const TIPS: &str = "\
One term per line: `name: scale * expression` (the `scale *` prefix is optional and defaults to 1).
Lines starting with `#` are comments. An optional first line `@schema NAME` selects the observation schema.
Literals: decimal numbers such as 0.25, 1e-3.
Signals: any name from the observation reference; vector signals may be indexed as `name[i]`.
Operators: + - * / and unary minus, with the usual precedence and parentheses.
Functions: abs(e) exp(e) sqrt(e) tanh(e) square(e) norm2(e) min(a, b) max(a, b) clamp(e, lo, hi).
norm2(e) is the squared Euclidean norm; for a scalar it equals square(e).
Every term must evaluate to a scalar. Mixing vectors of different lengths is an error.
Division by zero, sqrt of a negative number and overflowing exp fail the candidate, so guard denominators.
Tracking rewards usually take the form exp(-norm2(signal - command) / sigma) with sigma > 0.
Penalties are terms with a negative scale.
Keep magnitudes comparable: the total reward per step should stay within roughly [-10, 10].";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub sections: Vec<PromptSection>,
}

impl PromptBundle {
    pub fn user_text(&self) -> String {
        self.sections.iter().map(|s| format!("## {}\n\n{}\n", s.label, s.text)).collect::<Vec<_>>().join("\n")
    }

    /// Rough token count: one token per four bytes, rounded up.
    pub fn token_estimate(&self) -> usize {
        estimate_tokens(&self.system_text) + estimate_tokens(&self.user_text())
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_text.as_bytes());
        h.update([0]);
        h.update(self.user_text().as_bytes());
        hex(&h.finalize())
    }

    pub fn section(&self, label: &str) -> Option<&PromptSection> {
        self.sections.iter().find(|s| s.label == label)
    }

    /// Copy of the bundle with a repair section carrying the rejected text and its diagnostic.
    pub fn with_repair(&self, rejected: &str, diagnostic: &str) -> PromptBundle {
        let mut b = self.clone();
        b.sections.push(PromptSection {
            label: REPAIR_SECTION.into(),
            text: format!(
                "Your previous answer could not be used.\n\nPrevious answer:\n{rejected}\n\nError:\n{diagnostic}\n\n\
                 Return a corrected program in one fenced code block."
            ),
        });
        b
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("prompt needs about {needed} tokens even with all feedback truncated; budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
}

pub struct PromptInputs<'a> {
    pub task: &'a str,
    pub env_desc: &'a str,
    pub schema: &'a ObservationSchema,
    pub safety_rules: &'a [String],
    pub reference: Option<&'a RewardProgram>,
    /// Feedback blocks, oldest first.
    pub feedback: &'a [String],
    pub token_budget: usize,
}

pub fn observation_table(schema: &ObservationSchema) -> String {
    let mut out = format!("Schema `{}`.\n\n| signal | arity | unit |\n|---|---|---|\n", schema.name());
    for s in schema.signals() {
        out.push_str(&format!("| {} | {} | {} |\n", s.name, s.arity, s.unit));
    }
    out.pop();
    out
}

/// Builds the generation prompt. Pure: the same inputs give the same bundle.
///
/// Without reference or feedback the bundle has exactly five sections: task,
/// environment, observation table, tips and grammar, safety. When the
/// estimate exceeds the budget the oldest feedback block is cut first.
pub fn assemble_prompt(inputs: &PromptInputs) -> Result<PromptBundle, PromptError> {
    let safety = if inputs.safety_rules.is_empty() {
        "No additional safety regulations.".to_string()
    } else {
        inputs.safety_rules.iter().map(|r| format!("- {r}")).collect::<Vec<_>>().join("\n")
    };
    let mut sections = vec![
        PromptSection { label: TASK_SECTION.into(), text: inputs.task.trim().to_string() },
        PromptSection { label: ENV_SECTION.into(), text: inputs.env_desc.trim().to_string() },
        PromptSection { label: OBS_SECTION.into(), text: observation_table(inputs.schema) },
        PromptSection { label: TIPS_SECTION.into(), text: TIPS.into() },
        PromptSection { label: SAFETY_SECTION.into(), text: safety },
    ];
    if let Some(r) = inputs.reference {
        sections.push(PromptSection {
            label: REFERENCE_SECTION.into(),
            text: format!("A reward that is known to work reasonably well:\n```reward\n{}```", pretty_print(r)),
        });
    }
    let first_feedback = sections.len();
    for (i, f) in inputs.feedback.iter().enumerate() {
        sections.push(PromptSection { label: format!("{FEEDBACK_SECTION} {}", i + 1), text: f.trim_end().to_string() });
    }
    let mut bundle = PromptBundle { system_text: SYSTEM_TEXT.into(), sections };

    let mut idx = first_feedback;
    while bundle.token_estimate() > inputs.token_budget && idx < bundle.sections.len() {
        let excess_bytes = (bundle.token_estimate() - inputs.token_budget) * 4;
        let text = &bundle.sections[idx].text;
        let keep = text.len().saturating_sub(excess_bytes + TRUNCATION_MARKER.len() + 1);
        let mut cut = keep;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        let new_text = if cut == 0 {
            TRUNCATION_MARKER.to_string()
        } else {
            format!("{}\n{TRUNCATION_MARKER}", &text[..cut])
        };
        bundle.sections[idx].text = new_text;
        if bundle.token_estimate() > inputs.token_budget {
            idx += 1;
        }
    }
    let needed = bundle.token_estimate();
    if needed > inputs.token_budget {
        return Err(PromptError::BudgetExceeded { needed, budget: inputs.token_budget });
    }
    Ok(bundle)
}
