//! Affine signal maps from a training schema onto a deployment schema.
//!
//! Applying a map rewrites each signal reference `s` as
//! `gain * target(s) + offset` and drops terms that touch unmapped signals.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{BinaryOp, Expr, RewardProgram, RewardTerm, UnaryOp};
use super::schema::ObservationSchema;
use super::validate::validate_program;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub source: String,
    pub target: String,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

impl MapEntry {
    pub fn rename(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self { source: source.into(), target: target.into(), gain: 1.0, offset: 0.0 }
    }

    pub fn affine(source: impl Into<String>, target: impl Into<String>, gain: f64, offset: f64) -> Self {
        Self { source: source.into(), target: target.into(), gain, offset }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("source signal `{0}` mapped more than once")]
    DuplicateSource(String),
    #[error("entry `{from}` -> `{to}`: non-finite gain or offset")]
    NonFinite { from: String, to: String },
    #[error("entry `{from}` -> `{to}`: target signal not in schema `{schema}`")]
    UnknownTarget { from: String, to: String, schema: String },
    #[error("entry `{from}` -> `{to}`: arity {source_arity} does not match target arity {target_arity}")]
    Arity { from: String, to: String, source_arity: usize, target_arity: usize },
    #[error("mapped program does not validate against `{schema}`: {detail}")]
    Invalid { schema: String, detail: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomomorphismMap {
    pub entries: Vec<MapEntry>,
}

/// Signals a program needed but the map could not carry, and the terms lost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub unmapped_signals: Vec<String>,
    pub dropped_terms: Vec<String>,
}

impl MismatchReport {
    pub fn is_empty(&self) -> bool {
        self.unmapped_signals.is_empty() && self.dropped_terms.is_empty()
    }
}

/// Result of checking that two schemas are in bijection under a map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IsomorphismReport {
    pub unmapped_sources: Vec<String>,
    pub unused_targets: Vec<String>,
    pub duplicate_targets: Vec<String>,
}

impl IsomorphismReport {
    pub fn is_bijection(&self) -> bool {
        self.unmapped_sources.is_empty() && self.unused_targets.is_empty() && self.duplicate_targets.is_empty()
    }
}

impl HomomorphismMap {
    pub fn new(entries: Vec<MapEntry>) -> Result<Self, MappingError> {
        let m = Self { entries };
        m.check_entries()?;
        Ok(m)
    }

    /// Same-name, unit-gain map over every signal of `schema`.
    pub fn identity(schema: &ObservationSchema) -> Self {
        Self { entries: schema.signals().iter().map(|s| MapEntry::rename(&s.name, &s.name)).collect() }
    }

    pub fn get(&self, source: &str) -> Option<&MapEntry> {
        self.entries.iter().find(|e| e.source == source)
    }

    fn check_entries(&self) -> Result<(), MappingError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.source.as_str()) {
                return Err(MappingError::DuplicateSource(e.source.clone()));
            }
            if !e.gain.is_finite() || !e.offset.is_finite() {
                return Err(MappingError::NonFinite { from: e.source.clone(), to: e.target.clone() });
            }
        }
        Ok(())
    }

    /// Entry-level consistency against both schemas: targets exist and arities agree.
    pub fn check(&self, source: &ObservationSchema, target: &ObservationSchema) -> Result<(), MappingError> {
        self.check_entries()?;
        for e in &self.entries {
            let Some(target_arity) = target.arity(&e.target) else {
                return Err(MappingError::UnknownTarget {
                    from: e.source.clone(),
                    to: e.target.clone(),
                    schema: target.name().into(),
                });
            };
            if let Some(source_arity) = source.arity(&e.source) {
                if source_arity != target_arity {
                    return Err(MappingError::Arity {
                        from: e.source.clone(),
                        to: e.target.clone(),
                        source_arity,
                        target_arity,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn isomorphism(&self, source: &ObservationSchema, target: &ObservationSchema) -> IsomorphismReport {
        let mut report = IsomorphismReport::default();
        for s in source.signals() {
            if self.get(&s.name).is_none() {
                report.unmapped_sources.push(s.name.clone());
            }
        }
        let mut used = HashSet::new();
        for e in &self.entries {
            if source.signal(&e.source).is_some() && !used.insert(e.target.as_str()) {
                report.duplicate_targets.push(e.target.clone());
            }
        }
        for s in target.signals() {
            if !used.contains(s.name.as_str()) {
                report.unused_targets.push(s.name.clone());
            }
        }
        report
    }

    /// `other ∘ self`: first apply `self`, then `other` on its targets.
    /// Entries whose target `other` does not map are dropped.
    pub fn then(&self, other: &HomomorphismMap) -> HomomorphismMap {
        let entries = self
            .entries
            .iter()
            .filter_map(|a| {
                other.get(&a.target).map(|b| MapEntry {
                    source: a.source.clone(),
                    target: b.target.clone(),
                    gain: a.gain * b.gain,
                    offset: a.gain * b.offset + a.offset,
                })
            })
            .collect();
        HomomorphismMap { entries }
    }
}

fn literal(v: f64) -> Expr {
    if v.is_sign_negative() {
        Expr::unary(UnaryOp::Neg, Expr::Num(-v))
    } else {
        Expr::Num(v)
    }
}

fn substitute(e: &Expr, map: &HomomorphismMap) -> Expr {
    match e {
        Expr::Num(v) => Expr::Num(*v),
        Expr::Signal { name, index } => {
            let entry = map.get(name).expect("unmapped terms are dropped before substitution");
            let sig = Expr::Signal { name: entry.target.clone(), index: *index };
            let scaled = if entry.gain == 1.0 { sig } else { Expr::binary(BinaryOp::Mul, literal(entry.gain), sig) };
            if entry.offset == 0.0 {
                scaled
            } else if entry.offset < 0.0 {
                Expr::binary(BinaryOp::Sub, scaled, Expr::Num(-entry.offset))
            } else {
                Expr::binary(BinaryOp::Add, scaled, Expr::Num(entry.offset))
            }
        }
        Expr::Unary(op, a) => Expr::unary(*op, substitute(a, map)),
        Expr::Binary(op, a, b) => Expr::binary(*op, substitute(a, map), substitute(b, map)),
        Expr::Clamp(x, lo, hi) => {
            Expr::Clamp(Box::new(substitute(x, map)), Box::new(substitute(lo, map)), Box::new(substitute(hi, map)))
        }
    }
}

/// Rewrites `p` (over `source`) onto `target`. Terms referencing signals the
/// map does not carry are dropped and reported rather than failing the map.
pub fn apply_homomorphism(
    p: &RewardProgram,
    map: &HomomorphismMap,
    source: &ObservationSchema,
    target: &ObservationSchema,
) -> Result<(RewardProgram, MismatchReport), MappingError> {
    map.check(source, target)?;
    let mut report = MismatchReport::default();
    let mut terms = Vec::with_capacity(p.terms.len());
    for t in &p.terms {
        let missing: Vec<&str> = t.expr.signals().into_iter().filter(|s| map.get(s).is_none()).collect();
        if missing.is_empty() {
            terms.push(RewardTerm { name: t.name.clone(), scale: t.scale, expr: substitute(&t.expr, map) });
        } else {
            for s in missing {
                if !report.unmapped_signals.iter().any(|u| u == s) {
                    report.unmapped_signals.push(s.to_string());
                }
            }
            report.dropped_terms.push(t.name.clone());
        }
    }
    let mapped = RewardProgram { terms, schema_name: target.name().to_string() };
    let validation = validate_program(&mapped, target);
    if !validation.is_empty() {
        return Err(MappingError::Invalid { schema: target.name().into(), detail: validation.to_string() });
    }
    Ok((mapped, report))
}
