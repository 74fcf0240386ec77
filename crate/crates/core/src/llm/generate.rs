use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_program, validate_program, ObservationSchema, ParseError, RewardProgram};

use super::backend::{Backend, BackendError, CompletionRequest};
use super::prompt::PromptBundle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("no program found")]
    NoProgram,
    #[error("{0}")]
    Parse(ParseError),
    #[error("program does not validate against schema `{schema}`:\n{detail}")]
    Validation { schema: String, detail: String },
}

impl ExtractError {
    /// Whether the text parsed (validation may still have failed).
    pub fn parsed(&self) -> bool {
        matches!(self, ExtractError::Validation { .. })
    }
}

/// Body of the last fenced code block, or `None` when there is none.
/// An unterminated final fence runs to the end of the text.
pub fn last_fenced_block(text: &str) -> Option<String> {
    let mut last = None;
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => last = Some(lines.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if let Some(lines) = current {
        last = Some(lines.join("\n"));
    }
    last
}

fn looks_like_term(line: &str) -> bool {
    let l = line.trim_start();
    let ident: String = l.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    !ident.is_empty() && l[ident.len()..].trim_start().starts_with(':')
}

/// Last fenced block if present, else the whole text, parsed and validated.
pub fn extract_program(raw: &str, schema: &ObservationSchema) -> Result<RewardProgram, ExtractError> {
    let source = match last_fenced_block(raw) {
        Some(b) => b,
        None => {
            if !raw.lines().any(|l| looks_like_term(l) || l.trim_start().starts_with('@')) {
                return Err(ExtractError::NoProgram);
            }
            raw.to_string()
        }
    };
    let program = parse_program(&source).map_err(|e| match e.kind {
        crate::dsl::ParseErrorKind::NoTerms => ExtractError::NoProgram,
        _ => ExtractError::Parse(e),
    })?;
    let report = validate_program(&program, schema);
    if !report.is_empty() {
        return Err(ExtractError::Validation { schema: schema.name().into(), detail: report.to_string() });
    }
    Ok(program)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub raw_text: String,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSource {
    pub slot: usize,
    /// Index of the attempt that produced `raw_text`.
    pub attempt_index: usize,
    pub backend_id: String,
    pub raw_text: String,
    /// Exactly one of `program` and `diagnostic` is set.
    pub program: Option<RewardProgram>,
    pub diagnostic: Option<String>,
    pub parsed: bool,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenerationStats {
    pub requested: usize,
    pub parsed_ok: usize,
    pub validated_ok: usize,
    pub retries_used: usize,
    /// Slots valid on the first attempt.
    pub first_try_ok: usize,
    /// Slots whose first attempt failed but a retry succeeded.
    pub repaired: usize,
}

impl GenerationStats {
    pub fn first_try_rate(&self) -> f64 {
        self.first_try_ok as f64 / self.requested.max(1) as f64
    }

    pub fn with_retry_rate(&self) -> f64 {
        self.validated_ok as f64 / self.requested.max(1) as f64
    }

    pub fn merge(&mut self, o: &GenerationStats) {
        self.requested += o.requested;
        self.parsed_ok += o.parsed_ok;
        self.validated_ok += o.validated_ok;
        self.retries_used += o.retries_used;
        self.first_try_ok += o.first_try_ok;
        self.repaired += o.repaired;
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("k must be at least 1")]
    EmptyRequest,
    #[error("backend failure in slot {slot}: {source}")]
    Backend {
        slot: usize,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub max_retries: usize,
    pub temperature: f64,
    pub retry_temperature: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { max_retries: 2, temperature: 1.0, retry_temperature: 0.0 }
    }
}

fn generate_slot(
    backend: &dyn Backend,
    bundle: &PromptBundle,
    slot: usize,
    schema: &ObservationSchema,
    cfg: &GenerationConfig,
) -> Result<CandidateSource, GenerationError> {
    let mut attempts = Vec::new();
    let mut prompt = bundle.clone();
    for attempt in 0..=cfg.max_retries {
        let temperature = if attempt == 0 { cfg.temperature } else { cfg.retry_temperature };
        let req = CompletionRequest::from_bundle(&prompt, temperature, slot, attempt);
        let raw = backend.complete(&req).map_err(|source| GenerationError::Backend { slot, source })?;
        match extract_program(&raw, schema) {
            Ok(program) => {
                attempts.push(AttemptRecord { attempt, raw_text: raw.clone(), diagnostic: None });
                return Ok(CandidateSource {
                    slot,
                    attempt_index: attempt,
                    backend_id: backend.id(),
                    raw_text: raw,
                    program: Some(program),
                    diagnostic: None,
                    parsed: true,
                    attempts,
                });
            }
            Err(e) => {
                let diag = e.to_string();
                attempts.push(AttemptRecord { attempt, raw_text: raw.clone(), diagnostic: Some(diag.clone()) });
                if attempt == cfg.max_retries {
                    return Ok(CandidateSource {
                        slot,
                        attempt_index: attempt,
                        backend_id: backend.id(),
                        raw_text: raw,
                        program: None,
                        diagnostic: Some(diag),
                        parsed: e.parsed(),
                        attempts,
                    });
                }
                prompt = bundle.with_repair(&raw, &diag);
            }
        }
    }
    unreachable!("loop returns on the final attempt")
}

/// Requests `k` independent completions, retrying each failed extraction with
/// the diagnostic appended. Slots run concurrently; output is in slot order.
pub fn generate_candidates(
    backend: &dyn Backend,
    bundle: &PromptBundle,
    k: usize,
    schema: &ObservationSchema,
    cfg: &GenerationConfig,
) -> Result<(Vec<CandidateSource>, GenerationStats), GenerationError> {
    if k == 0 {
        return Err(GenerationError::EmptyRequest);
    }
    let sources = (0..k)
        .into_par_iter()
        .map(|slot| generate_slot(backend, bundle, slot, schema, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut stats = GenerationStats { requested: k, ..Default::default() };
    for s in &sources {
        stats.retries_used += s.attempt_index;
        if s.parsed {
            stats.parsed_ok += 1;
        }
        if s.program.is_some() {
            stats.validated_ok += 1;
            if s.attempt_index == 0 {
                stats.first_try_ok += 1;
            } else {
                stats.repaired += 1;
            }
        }
    }
    Ok((sources, stats))
}
