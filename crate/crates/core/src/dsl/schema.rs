use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("duplicate signal `{0}`")]
    DuplicateSignal(String),
    #[error("signal `{0}` has arity 0")]
    ZeroArity(String),
    #[error("invalid signal name `{0}`")]
    InvalidName(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub name: String,
    pub arity: usize,
    #[serde(default)]
    pub unit: String,
}

impl SignalSpec {
    pub fn new(name: impl Into<String>, arity: usize, unit: impl Into<String>) -> Self {
        Self { name: name.into(), arity, unit: unit.into() }
    }
}

/// Named, fixed-arity observation signals. Values in a frame are laid out
/// flat in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDef", into = "SchemaDef")]
pub struct ObservationSchema {
    name: String,
    signals: Vec<SignalSpec>,
    offsets: Vec<usize>,
    index: HashMap<String, usize>,
    width: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDef {
    name: String,
    signals: Vec<SignalSpec>,
}

impl TryFrom<SchemaDef> for ObservationSchema {
    type Error = SchemaError;
    fn try_from(def: SchemaDef) -> Result<Self, SchemaError> {
        ObservationSchema::new(def.name, def.signals)
    }
}

impl From<ObservationSchema> for SchemaDef {
    fn from(s: ObservationSchema) -> Self {
        SchemaDef { name: s.name, signals: s.signals }
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ObservationSchema {
    pub fn new(name: impl Into<String>, signals: Vec<SignalSpec>) -> Result<Self, SchemaError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(SchemaError::InvalidName(name));
        }
        let mut index = HashMap::with_capacity(signals.len());
        let mut offsets = Vec::with_capacity(signals.len());
        let mut width = 0;
        for (i, s) in signals.iter().enumerate() {
            if !is_identifier(&s.name) {
                return Err(SchemaError::InvalidName(s.name.clone()));
            }
            if s.arity == 0 {
                return Err(SchemaError::ZeroArity(s.name.clone()));
            }
            if index.insert(s.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateSignal(s.name.clone()));
            }
            offsets.push(width);
            width += s.arity;
        }
        Ok(Self { name, signals, offsets, index, width })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn signals(&self) -> &[SignalSpec] {
        &self.signals
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    /// Total number of scalars in a frame.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn signal(&self, name: &str) -> Option<&SignalSpec> {
        self.position(name).map(|i| &self.signals[i])
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.signal(name).map(|s| s.arity)
    }

    /// Range of the signal's values within a flat frame vector.
    pub fn span(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.position(name).map(|i| self.offsets[i]..self.offsets[i] + self.signals[i].arity)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame has {got} values, schema `{schema}` expects {expected}")]
    Width { schema: String, expected: usize, got: usize },
    #[error("non-finite value for signal `{0}`")]
    NonFinite(String),
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("signal `{name}` expects {expected} values, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("signal `{0}` missing")]
    Missing(String),
}

/// One observation: every schema signal with its declared arity, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    schema: Arc<ObservationSchema>,
    values: Vec<f64>,
}

impl ObservationFrame {
    pub fn from_flat(schema: Arc<ObservationSchema>, values: Vec<f64>) -> Result<Self, FrameError> {
        if values.len() != schema.width() {
            return Err(FrameError::Width {
                schema: schema.name().to_string(),
                expected: schema.width(),
                got: values.len(),
            });
        }
        for s in schema.signals() {
            let span = schema.span(&s.name).expect("own signal");
            if values[span].iter().any(|v| !v.is_finite()) {
                return Err(FrameError::NonFinite(s.name.clone()));
            }
        }
        Ok(Self { schema, values })
    }

    pub fn from_pairs<'a>(
        schema: Arc<ObservationSchema>,
        pairs: impl IntoIterator<Item = (&'a str, Vec<f64>)>,
    ) -> Result<Self, FrameError> {
        let mut values = vec![f64::NAN; schema.width()];
        let mut seen = vec![false; schema.len()];
        for (name, v) in pairs {
            let pos = schema.position(name).ok_or_else(|| FrameError::UnknownSignal(name.to_string()))?;
            let spec = &schema.signals()[pos];
            if v.len() != spec.arity {
                return Err(FrameError::Arity { name: name.to_string(), expected: spec.arity, got: v.len() });
            }
            let span = schema.span(name).expect("position resolved");
            values[span].copy_from_slice(&v);
            seen[pos] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(FrameError::Missing(schema.signals()[i].name.clone()));
        }
        Self::from_flat(schema, values)
    }

    pub fn schema(&self) -> &Arc<ObservationSchema> {
        &self.schema
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.schema.span(name).map(|r| &self.values[r])
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|v| v.first().copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_zero_arity() {
        let dup = ObservationSchema::new("s", vec![SignalSpec::new("a", 1, ""), SignalSpec::new("a", 2, "")]);
        assert_eq!(dup.unwrap_err(), SchemaError::DuplicateSignal("a".into()));
        let zero = ObservationSchema::new("s", vec![SignalSpec::new("a", 0, "")]);
        assert_eq!(zero.unwrap_err(), SchemaError::ZeroArity("a".into()));
    }

    #[test]
    fn spans_follow_declaration_order() {
        let s = ObservationSchema::new("s", vec![SignalSpec::new("a", 2, "m"), SignalSpec::new("b", 1, "s")]).unwrap();
        assert_eq!(s.width(), 3);
        assert_eq!(s.span("b"), Some(2..3));
        let f = ObservationFrame::from_pairs(Arc::new(s), [("b", vec![5.0]), ("a", vec![1.0, 2.0])]).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 5.0]);
    }

    #[test]
    fn frame_rejects_non_finite() {
        let s = Arc::new(ObservationSchema::new("s", vec![SignalSpec::new("a", 1, "")]).unwrap());
        assert!(matches!(ObservationFrame::from_flat(s, vec![f64::NAN]), Err(FrameError::NonFinite(_))));
    }

    #[test]
    fn schema_serde_revalidates() {
        let bad = r#"{"name":"s","signals":[{"name":"a","arity":1},{"name":"a","arity":1}]}"#;
        assert!(serde_json::from_str::<ObservationSchema>(bad).is_err());
    }
}
