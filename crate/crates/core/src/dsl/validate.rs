use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, RewardProgram, UnaryOp};
use super::printer::expr_to_string;
use super::schema::ObservationSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    UnresolvedSignal { term: String, signal: String },
    IndexOutOfRange { term: String, signal: String, index: usize, arity: usize },
    ArityMismatch { term: String, detail: String },
    NonScalarTerm { term: String, arity: usize },
    NonFiniteScale { term: String },
    SchemaName { expected: String, found: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnresolvedSignal { term, signal } => {
                write!(f, "term `{term}`: unknown signal `{signal}`")
            }
            Diagnostic::IndexOutOfRange { term, signal, index, arity } => {
                write!(f, "term `{term}`: index {index} out of range for `{signal}` (arity {arity})")
            }
            Diagnostic::ArityMismatch { term, detail } => write!(f, "term `{term}`: arity mismatch in {detail}"),
            Diagnostic::NonScalarTerm { term, arity } => {
                write!(f, "term `{term}`: value has arity {arity}, terms must be scalar")
            }
            Diagnostic::NonFiniteScale { term } => write!(f, "term `{term}`: scale is not finite"),
            Diagnostic::SchemaName { expected, found } => {
                write!(f, "program targets schema `{found}`, expected `{expected}`")
            }
        }
    }
}

/// Every problem preventing evaluation on frames of a schema. Empty means evaluable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn unresolved(&self) -> Vec<&str> {
        self.diagnostics
            .iter()
            .filter_map(|d| match d {
                Diagnostic::UnresolvedSignal { signal, .. } => Some(signal.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Static arity of `e`, or `None` when a diagnostic was pushed below it.
///
/// Binary operands must agree in arity, except that a signal-free scalar
/// subexpression broadcasts over a vector operand.
pub(crate) fn arity_of(e: &Expr, schema: &ObservationSchema, term: &str, out: &mut Vec<Diagnostic>) -> Option<usize> {
    match e {
        Expr::Num(_) => Some(1),
        Expr::Signal { name, index } => {
            let Some(arity) = schema.arity(name) else {
                out.push(Diagnostic::UnresolvedSignal { term: term.into(), signal: name.clone() });
                return None;
            };
            match index {
                None => Some(arity),
                Some(i) if *i < arity => Some(1),
                Some(i) => {
                    out.push(Diagnostic::IndexOutOfRange {
                        term: term.into(),
                        signal: name.clone(),
                        index: *i,
                        arity,
                    });
                    None
                }
            }
        }
        Expr::Unary(UnaryOp::Norm2, a) => arity_of(a, schema, term, out).map(|_| 1),
        Expr::Unary(_, a) => arity_of(a, schema, term, out),
        Expr::Binary(op, a, b) => {
            let la = arity_of(a, schema, term, out);
            let lb = arity_of(b, schema, term, out);
            let (la, lb) = (la?, lb?);
            if la == lb {
                Some(la)
            } else if la == 1 && a.is_constant() {
                Some(lb)
            } else if lb == 1 && b.is_constant() {
                Some(la)
            } else {
                out.push(Diagnostic::ArityMismatch {
                    term: term.into(),
                    detail: format!("`{}` ({la} vs {lb}, operator {})", expr_to_string(e), op.symbol()),
                });
                None
            }
        }
        Expr::Clamp(x, lo, hi) => {
            let lx = arity_of(x, schema, term, out);
            let llo = arity_of(lo, schema, term, out);
            let lhi = arity_of(hi, schema, term, out);
            let (lx, llo, lhi) = (lx?, llo?, lhi?);
            if (llo == 1 || llo == lx) && (lhi == 1 || lhi == lx) {
                Some(lx)
            } else {
                out.push(Diagnostic::ArityMismatch {
                    term: term.into(),
                    detail: format!("`{}` (bounds must be scalar or arity {lx})", expr_to_string(e)),
                });
                None
            }
        }
    }
}

pub fn validate_program(p: &RewardProgram, schema: &ObservationSchema) -> ValidationReport {
    let mut diagnostics = Vec::new();
    if p.schema_name != schema.name() {
        diagnostics.push(Diagnostic::SchemaName { expected: schema.name().into(), found: p.schema_name.clone() });
    }
    for t in &p.terms {
        if !t.scale.is_finite() {
            diagnostics.push(Diagnostic::NonFiniteScale { term: t.name.clone() });
        }
        if let Some(arity) = arity_of(&t.expr, schema, &t.name, &mut diagnostics) {
            if arity != 1 {
                diagnostics.push(Diagnostic::NonScalarTerm { term: t.name.clone(), arity });
            }
        }
    }
    ValidationReport { diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_program, SignalSpec};

    fn schema() -> ObservationSchema {
        ObservationSchema::new(
            "walker",
            vec![SignalSpec::new("speed", 1, "m/s"), SignalSpec::new("feet", 2, "m"), SignalSpec::new("ref", 2, "m")],
        )
        .unwrap()
    }

    #[test]
    fn missing_signal_is_listed() {
        let p = parse_program("a: exp(-norm2(speed - foot_height))\nb: motor_heat").unwrap();
        let r = validate_program(&p, &schema());
        assert_eq!(r.unresolved(), vec!["foot_height", "motor_heat"]);
    }

    #[test]
    fn scalar_plus_vector_signal_is_mismatch() {
        let p = parse_program("a: norm2(speed + feet)").unwrap();
        let r = validate_program(&p, &schema());
        assert_eq!(r.diagnostics.len(), 1);
        assert!(matches!(r.diagnostics[0], Diagnostic::ArityMismatch { .. }), "{r}");
    }

    #[test]
    fn constants_broadcast_and_vector_terms_rejected() {
        let p = parse_program("a: norm2(0.5 * (feet - ref))\nb: feet").unwrap();
        let r = validate_program(&p, &schema());
        assert_eq!(r.diagnostics, vec![Diagnostic::NonScalarTerm { term: "b".into(), arity: 2 }]);
    }

    #[test]
    fn index_bounds() {
        let p = parse_program("a: feet[1]\nb: feet[2]").unwrap();
        let r = validate_program(&p, &schema());
        assert_eq!(r.diagnostics.len(), 1);
        assert!(matches!(r.diagnostics[0], Diagnostic::IndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn schema_name_must_match() {
        let p = parse_program("@schema other\na: speed").unwrap();
        assert!(matches!(validate_program(&p, &schema()).diagnostics[0], Diagnostic::SchemaName { .. }));
    }
}
